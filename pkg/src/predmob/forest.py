"""Subsampled tree ensembles, treatment-effect prediction and variable
importance."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from predmob.adjustment import AdjustmentPlan
from predmob.data import CaseWeights, DataError, Dataset, effect_code
from predmob.glm import (
    SEPARATION_BOUND,
    DegenerateNodeError,
    SingularDesignError,
)
from predmob.tree import Node, PalmFit, PredMobTree, TreeConfig, fit_palm, grow_tree


@dataclass
class ForestConfig:
    n_trees: int = 100
    subsample_frac: float = 0.632
    alpha: float = 0.05
    min_node_weight: float = 20.0
    min_arm_weight: float = 5.0
    max_depth: int = 10
    mtry: int | None = None
    seed: int = 0

    def tree_config(self) -> TreeConfig:
        return TreeConfig(
            alpha=self.alpha, min_node_weight=self.min_node_weight,
            min_arm_weight=self.min_arm_weight, max_depth=self.max_depth,
            mtry=self.mtry,
        )


def _stream(seed: int, tree_index: int, purpose: int, attempt: int = 0):
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(tree_index, purpose, attempt))
    return np.random.default_rng(ss)


@dataclass
class PredMobForest:
    trees: list
    subsample_indices: list[np.ndarray]
    plan: AdjustmentPlan
    config: ForestConfig
    names: tuple[str, ...]

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def tree_predictions(self, X: np.ndarray) -> np.ndarray:
        if X.ndim == 1:
            X = X[None, :]
        return np.stack([t.predict(X) for t in self.trees])

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "config": {
                "n_trees": self.config.n_trees,
                "subsample_frac": self.config.subsample_frac,
                "alpha": self.config.alpha,
                "min_node_weight": self.config.min_node_weight,
                "min_arm_weight": self.config.min_arm_weight,
                "max_depth": self.config.max_depth,
                "mtry": self.config.mtry,
                "seed": self.config.seed,
            },
            "plan": self.plan.to_dict(),
            "subsample_indices": [list(map(int, s)) for s in self.subsample_indices],
            "trees": [
                {"kind": "palm", **t.to_dict()} if isinstance(t, PalmFit)
                else {"kind": "tree", **t.to_dict()}
                for t in self.trees
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PredMobForest":
        trees = [
            PalmFit.from_dict(t) if t["kind"] == "palm"
            else PredMobTree.from_dict({k: v for k, v in t.items() if k != "kind"})
            for t in doc["trees"]
        ]
        plan_doc = doc["plan"]
        plan = AdjustmentPlan(
            strategy=plan_doc["strategy"],
            weights=CaseWeights(np.array(plan_doc["weights"], dtype=float)),
            propensity=_Opaque() if "propensity_coef" in plan_doc else None,
            subclasses=[np.array(s) for s in plan_doc["subclasses"]]
            if "subclasses" in plan_doc else None,
            global_covariates=plan_doc.get("global_covariates"),
        )
        return cls(
            trees=trees,
            subsample_indices=[np.array(s, dtype=np.intp)
                               for s in doc["subsample_indices"]],
            plan=plan,
            config=ForestConfig(**doc["config"]),
            names=tuple(doc["names"]),
        )


class _Opaque:
    """Placeholder for a propensity fit that was serialized as coefficients
    only; plans round-tripped through JSON keep their weights but not the
    refittable model."""


def _root_leaf_tree(data: Dataset, names) -> PredMobTree:
    node = Node(id=0, depth=0, b=0.0, objective=0.0,
                total_weight=0.0, n_obs=data.n)
    return PredMobTree(nodes=[node], names=names)


def fit_forest(data: Dataset, plan: AdjustmentPlan, config: ForestConfig) -> PredMobForest:
    """Fit the ensemble: one tree per subsample drawn without replacement,
    grown under the plan's weights (and, for covariate-style strategies,
    with jointly fitted global covariate effects)."""
    n = data.n
    size = int(round(config.subsample_frac * n))
    use_palm = plan.strategy in ("covariate", "doubly_robust")
    trees = []
    subsamples = []
    for i in range(config.n_trees):
        tree = None
        sub = None
        for attempt in range(10):
            rng = _stream(config.seed, i, 0, attempt)
            sub = np.sort(rng.choice(n, size=size, replace=False))
            sub_data = data.subset(sub)
            sub_w = CaseWeights(plan.weights.w[sub])
            try:
                if use_palm:
                    tree = fit_palm(sub_data, plan.global_covariates, sub_w,
                                    config.tree_config(), rng=rng)
                else:
                    tree = grow_tree(sub_data, sub_w, config.tree_config(), rng=rng)
                break
            except (DegenerateNodeError, SingularDesignError, DataError):
                continue
        if tree is None:
            warnings.warn(f"tree {i}: degenerate subsample after 10 retries; "
                          "recording a root-leaf tree", RuntimeWarning)
            tree = _root_leaf_tree(data, data.names)
        trees.append(tree)
        subsamples.append(sub)
    return PredMobForest(trees=trees, subsample_indices=subsamples, plan=plan,
                         config=config, names=data.names)


def predict_ite(forest: PredMobForest, x: np.ndarray) -> np.ndarray | float:
    """Mean over trees of the leaf treatment coefficient reached by x."""
    preds = forest.tree_predictions(np.asarray(x, dtype=float))
    out = preds.mean(axis=0)
    return float(out[0]) if np.asarray(x).ndim == 1 else out


def _binary_leaf_contrast(y_leaf, reg, w_leaf, off):
    """Held-out treatment coefficient and its sandwich variance for one
    leaf in the Bernoulli model (root of the weighted score equation)."""
    def score(c):
        p = 1.0 / (1.0 + np.exp(-(off + c * reg)))
        return float(np.sum(w_leaf * reg * (y_leaf - p)))

    lo, hi = -SEPARATION_BOUND, SEPARATION_BOUND
    s_lo, s_hi = score(lo), score(hi)
    if s_lo * s_hi > 0:  # optimum beyond the separation bound
        c = lo if abs(s_lo) < abs(s_hi) else hi
    elif s_lo == 0.0:
        c = lo
    elif s_hi == 0.0:
        c = hi
    else:
        c = float(scipy.optimize.brentq(score, lo, hi, xtol=1e-10))
    p = 1.0 / (1.0 + np.exp(-(off + c * reg)))
    info = float(np.sum(w_leaf * reg**2 * p * (1 - p)))
    if info <= 0:
        return c, np.inf
    var = float(np.sum((w_leaf * reg * (y_leaf - p)) ** 2)) / info**2
    return c, var


def _arm_moments(leaves, mask, wo, yo, k):
    """Weighted mean, its estimated variance and effective size per leaf
    for one treatment arm of the out-of-bag rows."""
    w = np.where(mask, wo, 0.0)
    sw = np.bincount(leaves, weights=w, minlength=k)
    sw2 = np.bincount(leaves, weights=w**2, minlength=k)
    denom = np.where(sw > 0, sw, 1.0)
    mean = np.bincount(leaves, weights=w * yo, minlength=k) / denom
    resid2 = np.bincount(leaves, weights=(w * (yo - mean[leaves])) ** 2,
                         minlength=k)
    neff = np.where(sw2 > 0, sw**2 / np.where(sw2 > 0, sw2, 1.0), 0.0)
    ok = neff > 1
    var = np.where(ok, resid2 / denom**2 * neff / np.where(ok, neff - 1, 1.0),
                   np.inf)
    return sw, mean, var, ok


def _oob_loss(tree, data, w, oob, y, ts, x_route) -> float:
    """Out-of-bag treatment-contrast loss under the given routing matrix.

    Each leaf coefficient is compared against the weighted treatment
    contrast of the out-of-bag observations routed into that leaf. The
    squared discrepancy, debiased by the contrast's estimated sampling
    variance, is aggregated with the leaves' out-of-bag weights, giving an
    (approximately) unbiased estimate of the weighted squared error of the
    coefficients as treatment-effect predictions. Without the variance
    debit, re-routing would be charged for changing the sampling noise of
    the held-out contrasts rather than for the disagreement itself. A leaf
    whose coefficient contradicts the held-out contrast is penalized even
    if it fits its own training subsample well; leaves receiving fewer
    than two held-out observations in either arm are skipped."""
    inner = tree.tree if isinstance(tree, PalmFit) else tree
    leaves = inner.leaf_assign(x_route)
    b = inner.leaf_b()
    wo = w[oob]
    tso = ts[oob]
    off = tree.offset(data.biomarkers[oob]) if isinstance(tree, PalmFit) else None
    k = len(inner.nodes)
    if data.outcome_kind == "binary":
        w1 = np.bincount(leaves, weights=wo * (tso > 0), minlength=k)
        w0 = np.bincount(leaves, weights=wo * (tso < 0), minlength=k)
        loss = 0.0
        for lid in np.flatnonzero((w1 > 0) & (w0 > 0)):
            m = leaves == lid
            c, var = _binary_leaf_contrast(
                y[oob][m], tso[m] / 2.0, wo[m],
                0.0 if off is None else off[m],
            )
            if np.isfinite(var):
                loss += (w1[lid] + w0[lid]) * ((c - b[lid]) ** 2 - var)
        return float(loss)
    yo = y[oob] if off is None else y[oob] - off
    w1, m1, v1, ok1 = _arm_moments(leaves, tso > 0, wo, yo, k)
    w0, m0, v0, ok0 = _arm_moments(leaves, tso < 0, wo, yo, k)
    keep = ok1 & ok0
    contrast = m1 - m0
    return float(np.sum(
        (w1 + w0)[keep] * ((contrast - b)[keep] ** 2 - (v1 + v0)[keep])
    ))


def _oob_loss_perm(tree, data, w, oob, y, ts, j, perm) -> float:
    # permutation breaks the variable's link to the routing only; the global
    # covariate offset keeps the observed values
    xo = data.biomarkers[oob].copy()
    xo[:, j] = xo[perm, j]
    return _oob_loss(tree, data, w, oob, y, ts, xo)


def permutation_importance(forest: PredMobForest, data: Dataset) -> np.ndarray:
    """Mean over trees of the per-observation increase in the out-of-bag
    treatment-contrast loss when one variable is permuted among the OOB
    rows. Negative values are legitimate output: they arise when the
    original routing places the fitted coefficients in disagreement with
    the held-out contrasts (for example under residual confounding) and
    permuting the variable removes that disagreement."""
    n, p = data.n, data.p
    y = data.outcome
    ts = effect_code(data.treatment)
    w = forest.plan.weights.w
    contrib = np.zeros((forest.n_trees, p))
    for i, (tree, sub) in enumerate(zip(forest.trees, forest.subsample_indices)):
        oob = np.setdiff1d(np.arange(n), sub)
        if len(oob) == 0:
            continue
        base = _oob_loss(tree, data, w, oob, y, ts, data.biomarkers[oob])
        inner = tree.tree if isinstance(tree, PalmFit) else tree
        used = set(inner.minimal_depths())
        rng = _stream(forest.config.seed, i, 1)
        for j in range(p):
            if j not in used:
                continue  # permutation cannot change the prediction
            perm = rng.permutation(len(oob))
            loss = _oob_loss_perm(tree, data, w, oob, y, ts, j, perm)
            contrib[i, j] = (loss - base) / len(oob)
    return contrib.mean(axis=0)


def mean_minimal_depth(forest: PredMobForest) -> np.ndarray:
    """Average over trees of the depth of the shallowest split on each
    variable; a variable unused in a tree contributes that tree's maximal
    terminal depth plus one."""
    p = len(forest.names)
    total = np.zeros(p)
    for tree in forest.trees:
        inner = tree.tree if isinstance(tree, PalmFit) else tree
        depths = inner.minimal_depths()
        fallback = inner.max_terminal_depth + 1
        for j in range(p):
            total[j] += depths.get(j, fallback)
    return total / forest.n_trees


def partial_dependence(forest: PredMobForest, data: Dataset, variable,
                       grid) -> list[tuple[float, float]]:
    """Forest treatment-effect prediction averaged over the data with one
    variable clamped to each grid value."""
    j = variable if isinstance(variable, int) else data.column(variable)
    out = []
    for v in grid:
        x = data.biomarkers.copy()
        x[:, j] = v
        out.append((float(v), float(np.mean(predict_ite(forest, x)))))
    return out


def predictive_effect(forest: PredMobForest, data: Dataset, variable) -> float:
    """Difference of the mean predicted treatment effect between the two
    observed groups of a binary variable."""
    j = variable if isinstance(variable, int) else data.column(variable)
    col = data.biomarkers[:, j]
    if not np.isin(col, (0.0, 1.0)).all():
        raise DataError(f"variable {data.names[j]!r} is not binary")
    if col.min() == col.max():
        raise DataError(f"variable {data.names[j]!r} is one-sided; "
                        "predictive effect undefined")
    ite = predict_ite(forest, data.biomarkers)
    return float(ite[col == 1].mean() - ite[col == 0].mean())
