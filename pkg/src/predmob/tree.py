"""Single effect-coded treatment trees, optionally with global covariate
effects fitted by alternating estimation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from predmob.data import CaseWeights, Dataset, effect_code
from predmob.glm import (
    DegenerateNodeError,
    SingularDesignError,
    fit_predmob_base,
    fit_wls,
)
from predmob.mfluct import instability_statistic, weighted_quantile_bins
from scipy.special import chdtrc


@dataclass
class TreeConfig:
    alpha: float = 0.05
    min_node_weight: float = 20.0
    min_arm_weight: float = 5.0
    max_depth: int = 10
    mtry: int | None = None  # None means all variables
    seed: int | None = None

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if self.min_node_weight <= 0:
            raise ValueError("min_node_weight must be positive")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")


@dataclass
class Node:
    id: int
    depth: int
    b: float
    objective: float
    total_weight: float
    n_obs: int
    var: int | None = None       # split variable index, None for leaves
    threshold: float | None = None  # go left when x[var] <= threshold
    left: int | None = None
    right: int | None = None
    p_value: float | None = None

    @property
    def is_leaf(self) -> bool:
        return self.var is None


@dataclass
class PredMobTree:
    nodes: list[Node]
    names: tuple[str, ...]

    def route(self, x: np.ndarray) -> int:
        node = self.nodes[0]
        while not node.is_leaf:
            node = self.nodes[node.left if x[node.var] <= node.threshold else node.right]
        return node.id

    def leaf_assign(self, X: np.ndarray) -> np.ndarray:
        """Vectorized routing: leaf node id for every row of X."""
        out = np.zeros(X.shape[0], dtype=np.intp)
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            nid, idx = stack.pop()
            node = self.nodes[nid]
            if node.is_leaf:
                out[idx] = nid
                continue
            go_left = X[idx, node.var] <= node.threshold
            stack.append((node.left, idx[go_left]))
            stack.append((node.right, idx[~go_left]))
        return out

    def leaf_b(self) -> np.ndarray:
        """Per-node treatment coefficient, indexed by node id."""
        return np.array([nd.b for nd in self.nodes])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_b()[self.leaf_assign(X)]

    @property
    def max_terminal_depth(self) -> int:
        return max(nd.depth for nd in self.nodes if nd.is_leaf)

    def minimal_depths(self) -> dict[int, int]:
        """Depth of the shallowest split per used variable."""
        depths: dict[int, int] = {}
        for nd in self.nodes:
            if not nd.is_leaf and (nd.var not in depths or nd.depth < depths[nd.var]):
                depths[nd.var] = nd.depth
        return depths

    def split_signature(self) -> tuple:
        return tuple(
            (nd.id, nd.var, nd.threshold) for nd in self.nodes if not nd.is_leaf
        )

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "nodes": [
                {
                    "id": nd.id,
                    "depth": nd.depth,
                    "b": nd.b,
                    "objective": nd.objective,
                    "total_weight": nd.total_weight,
                    "n_obs": nd.n_obs,
                    "var": nd.var,
                    "threshold": nd.threshold,
                    "left": nd.left,
                    "right": nd.right,
                    "p_value": nd.p_value,
                }
                for nd in self.nodes
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PredMobTree":
        nodes = [Node(**nd) for nd in doc["nodes"]]
        return cls(nodes=nodes, names=tuple(doc["names"]))


@dataclass
class PalmFit:
    """Tree plus global covariate effects from the alternating fit."""

    tree: PredMobTree
    gamma: np.ndarray            # intercept first, then global covariates
    global_columns: list[int]    # biomarker indices behind gamma[1:]
    iterations: int
    converged: bool

    def offset(self, X: np.ndarray) -> np.ndarray:
        return self.gamma[0] + X[:, self.global_columns] @ self.gamma[1:]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.tree.predict(X)

    def to_dict(self) -> dict:
        return {
            "tree": self.tree.to_dict(),
            "gamma": list(self.gamma),
            "global_columns": list(self.global_columns),
            "iterations": self.iterations,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PalmFit":
        return cls(
            tree=PredMobTree.from_dict(doc["tree"]),
            gamma=np.array(doc["gamma"], dtype=float),
            global_columns=list(doc["global_columns"]),
            iterations=doc["iterations"],
            converged=doc["converged"],
        )


def _candidate_pvalue(scores, x_col, w, is_binary):
    """(statistic, df, p) of the instability test for one candidate column."""
    if is_binary:
        codes = (x_col > 0.5).astype(np.intp)
    else:
        codes = weighted_quantile_bins(x_col, w)
    if codes.min() == codes.max():
        return 0.0, 1, 1.0
    stat, df, degenerate = instability_statistic(scores, codes, w)
    if degenerate or stat <= 0:
        return 0.0, max(df, 1), 1.0
    return stat, df, float(chdtrc(df, stat))


def _child_ok(w, t, mask, config) -> bool:
    wc = w[mask]
    if wc.sum() < config.min_node_weight:
        return False
    tc = t[mask]
    return (
        wc[tc > 0].sum() >= config.min_arm_weight
        and wc[tc < 0].sum() >= config.min_arm_weight
    )


def _continuous_threshold(x_col, y, ts, w, offset, config, outcome_kind):
    """Best bin boundary by decrease of the summed child objectives."""
    codes = weighted_quantile_bins(x_col, w)
    cuts = sorted({float(x_col[codes <= c].max()) for c in range(codes.max())})
    best = None
    best_obj = np.inf
    for thr in cuts:
        mask = x_col <= thr
        if not (_child_ok(w, ts, mask, config) and _child_ok(w, ts, ~mask, config)):
            continue
        try:
            fl = fit_predmob_base(y[mask], ts[mask], w[mask],
                                  None if offset is None else offset[mask],
                                  outcome_kind)
            fr = fit_predmob_base(y[~mask], ts[~mask], w[~mask],
                                  None if offset is None else offset[~mask],
                                  outcome_kind)
        except DegenerateNodeError:
            continue
        obj = fl.objective + fr.objective
        if obj < best_obj:
            best_obj = obj
            best = thr
    return best


def grow_tree(data: Dataset, weights: CaseWeights, config: TreeConfig,
              offset: np.ndarray | None = None,
              rng: np.random.Generator | None = None) -> PredMobTree:
    """Grow one tree by recursive instability testing of the treatment
    coefficient. Construction is depth-first and deterministic given the seed."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    X = data.biomarkers
    y = data.outcome
    ts = effect_code(data.treatment)
    w_all = weights.w
    if w_all.shape[0] != data.n:
        raise ValueError("weights length does not match the dataset")
    is_binary = data.binary_columns()
    p = data.p
    mtry = p if config.mtry is None else min(config.mtry, p)

    nodes: list[Node] = []

    def build(idx: np.ndarray, depth: int) -> int:
        w = w_all[idx]
        try:
            fit = fit_predmob_base(
                y[idx], ts[idx], w,
                None if offset is None else offset[idx],
                data.outcome_kind,
            )
        except DegenerateNodeError:
            if depth == 0:
                raise
            raise AssertionError("interior degeneracy should be prevented by child checks")
        nid = len(nodes)
        node = Node(
            id=nid, depth=depth, b=float(fit.coef[0]),
            objective=fit.objective, total_weight=float(w.sum()),
            n_obs=len(idx),
        )
        nodes.append(node)
        if depth >= config.max_depth:
            return nid

        if mtry < p:
            candidates = np.sort(rng.choice(p, size=mtry, replace=False))
        else:
            candidates = np.arange(p)
        scores = fit.scores
        best_p = 1.0
        best_var = None
        for j in candidates:
            _, _, pv = _candidate_pvalue(scores[:, 0], X[idx, j], w, is_binary[j])
            if pv < best_p - 1e-15:  # ties broken by lowest index (sorted order)
                best_p = pv
                best_var = int(j)
        if best_var is None or best_p >= config.alpha:
            return nid

        if is_binary[best_var]:
            thr = 0.5
            mask = X[idx, best_var] <= thr
            if not (_child_ok(w, ts[idx], mask, config)
                    and _child_ok(w, ts[idx], ~mask, config)):
                return nid
        else:
            thr = _continuous_threshold(
                X[idx, best_var], y[idx], ts[idx], w,
                None if offset is None else offset[idx],
                config, data.outcome_kind,
            )
            if thr is None:
                return nid
            mask = X[idx, best_var] <= thr

        node.var = best_var
        node.threshold = float(thr)
        node.p_value = best_p
        node.left = build(idx[mask], depth + 1)
        node.right = build(idx[~mask], depth + 1)
        return nid

    build(np.arange(data.n), 0)
    return PredMobTree(nodes=nodes, names=data.names)


def _joint_refit(data, weights, tree, gdesign, gnames):
    """Refit global effects and all leaf coefficients jointly by WLS."""
    ts = effect_code(data.treatment)
    leaves = tree.leaf_assign(data.biomarkers)
    leaf_ids = sorted({nd.id for nd in tree.nodes if nd.is_leaf})
    cols = [gdesign]
    for lid in leaf_ids:
        cols.append(((leaves == lid) * ts / 2.0)[:, None])
    design = np.hstack(cols)
    names = list(gnames) + [f"leaf_{lid}" for lid in leaf_ids]
    fit = fit_wls(design, data.outcome, weights, names=names)
    n_g = gdesign.shape[1]
    gamma = fit.coef[:n_g]
    for k, lid in enumerate(leaf_ids):
        tree.nodes[lid].b = float(fit.coef[n_g + k])
    return gamma, fit


def fit_palm(data: Dataset, global_covariates, weights: CaseWeights,
             config: TreeConfig, max_alt: int = 100, tol: float = 1e-6,
             rng: np.random.Generator | None = None) -> PalmFit:
    """Alternate between growing the tree on the current global-effect
    offset and jointly refitting global plus leaf coefficients."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    cols = [c if isinstance(c, int) else data.column(c) for c in global_covariates]
    gnames = ["(intercept)"] + [data.names[c] for c in cols]

    def make_design(active):
        return np.hstack(
            [np.ones((data.n, 1))] + [data.biomarkers[:, [c]] for c in active]
        )

    active = list(cols)
    gdesign = make_design(active)
    while True:
        try:
            gamma = fit_wls(gdesign, data.outcome, weights, names=gnames).coef
            break
        except SingularDesignError as err:
            drop = next(
                (i for i, nm in enumerate(gnames) if nm in str(err) and i > 0), None
            )
            if drop is None:
                raise
            warnings.warn(
                f"dropping rank-deficient global covariate {gnames[drop]!r}",
                RuntimeWarning,
            )
            del active[drop - 1], gnames[drop]
            gdesign = make_design(active)

    tree = None
    converged = False
    iterations = 0
    prev_sig = None
    for iterations in range(1, max_alt + 1):
        offset = gdesign @ gamma
        tree = grow_tree(data, weights, config, offset=offset, rng=rng)
        new_gamma, _ = _joint_refit(data, weights, tree, gdesign, gnames)
        delta = np.max(np.abs(new_gamma - gamma))
        gamma = new_gamma
        sig = tree.split_signature()
        if delta < tol or sig == prev_sig:
            converged = True
            break
        prev_sig = sig
    return PalmFit(
        tree=tree, gamma=gamma, global_columns=active,
        iterations=iterations, converged=converged,
    )
