"""Confounder-adjustment strategies: propensity model, inverse-probability
weights, exact and optimal full matching, balance diagnostics and the
weighted interaction-model oracle."""

from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np
import scipy.optimize

from predmob.data import CaseWeights, DataError, Dataset
from predmob.glm import LinearFit, LogisticFit, fit_logistic, fit_wls

STRATEGIES = ("none", "covariate", "iptw", "match_exact", "match_full", "doubly_robust")

_FLOW_SCALE = 10**9  # logit distances are rounded to integers at this scale


class EmptyPlanError(ValueError):
    """No matched set contains both treatment arms."""


@dataclass
class AdjustmentPlan:
    strategy: str
    weights: CaseWeights
    propensity: LogisticFit | None = None
    subclasses: list[np.ndarray] | None = None
    global_covariates: list[int] | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.strategy in ("iptw", "doubly_robust") and self.propensity is None:
            raise ValueError(f"strategy {self.strategy} requires a propensity fit")
        if self.strategy.startswith("match_") and self.subclasses is None:
            raise ValueError(f"strategy {self.strategy} requires subclasses")

    def to_dict(self) -> dict:
        doc: dict = {"strategy": self.strategy, "weights": list(map(float, self.weights.w))}
        if self.propensity is not None:
            doc["propensity_coef"] = list(map(float, self.propensity.coef))
        if self.subclasses is not None:
            doc["subclasses"] = [list(map(int, s)) for s in self.subclasses]
        if self.global_covariates is not None:
            doc["global_covariates"] = list(self.global_covariates)
        return doc


@dataclass
class BalanceReport:
    names: tuple[str, ...]
    raw_mean_diff: np.ndarray
    weighted_mean_diff: np.ndarray
    raw_std_diff: np.ndarray
    weighted_std_diff: np.ndarray

    def to_dict(self) -> dict:
        def col(a):
            return [None if not np.isfinite(v) else float(v) for v in a]

        return {
            "variable": list(self.names),
            "raw_mean_diff": col(self.raw_mean_diff),
            "weighted_mean_diff": col(self.weighted_mean_diff),
            "raw_std_diff": col(self.raw_std_diff),
            "weighted_std_diff": col(self.weighted_std_diff),
        }


def fit_propensity(data: Dataset, columns=None) -> LogisticFit:
    """Logistic model of treatment on an intercept plus candidate biomarkers
    (all of them by default, mirroring use when the true confounder set is
    unknown)."""
    if columns is None:
        columns = list(range(data.p))
    cols = [c if isinstance(c, int) else data.column(c) for c in columns]
    design = np.hstack([np.ones((data.n, 1))] + [data.biomarkers[:, [c]] for c in cols])
    return fit_logistic(design, data.treatment, np.ones(data.n))


def iptw_weights(propensity: LogisticFit, treatment: np.ndarray,
                 estimand: str = "ATE", stabilize: bool = False,
                 trim_quantile: float | None = None,
                 rescale: bool = False) -> CaseWeights:
    """Inverse-probability-of-treatment weights with optional stabilization,
    quantile trimming and rescaling to the sample size."""
    t = np.asarray(treatment, dtype=float)
    e = propensity.fitted
    if estimand == "ATE":
        w = np.where(t == 1, 1.0 / e, 1.0 / (1.0 - e))
        if stabilize:
            p1 = t.mean()
            w = w * np.where(t == 1, p1, 1.0 - p1)
    elif estimand == "ATT":
        w = np.where(t == 1, 1.0, e / (1.0 - e))
        if stabilize:
            p1 = t.mean()
            w = np.where(t == 1, w, w * (1.0 - p1) / p1)
    else:
        raise ValueError(f"unknown estimand {estimand!r}")
    if trim_quantile is not None:
        hi = np.quantile(w, trim_quantile)
        lo = np.quantile(w, 1.0 - trim_quantile)
        w = np.clip(w, lo, hi)
    cw = CaseWeights(w)
    return cw.rescale(len(w)) if rescale else cw


def _subclass_weights(n: int, subclasses: list[np.ndarray], treatment) -> CaseWeights:
    """Treated weight 1, each control weight n_t/n_c within its subclass;
    unmatched observations get 0; rescaled to the retained count."""
    t = np.asarray(treatment)
    w = np.zeros(n)
    for sub in subclasses:
        treated = sub[t[sub] == 1]
        controls = sub[t[sub] == 0]
        if len(treated) == 0 or len(controls) == 0:
            raise EmptyPlanError("subclass without both arms")
        w[treated] = 1.0
        w[controls] = len(treated) / len(controls)
    return CaseWeights(w).rescale()


def exact_match(data: Dataset, columns=None) -> AdjustmentPlan:
    """Stratify on identical covariate patterns; patterns with a single arm
    are discarded with weight zero."""
    if columns is None:
        columns = list(range(data.p))
    cols = [c if isinstance(c, int) else data.column(c) for c in columns]
    x = data.biomarkers[:, cols]
    t = data.treatment
    strata: dict[tuple, list[int]] = {}
    for i in range(data.n):
        strata.setdefault(tuple(x[i]), []).append(i)
    subclasses = []
    for members in strata.values():
        members = np.array(members)
        if t[members].min() == 0 and t[members].max() == 1:
            subclasses.append(members)
    if not subclasses:
        raise EmptyPlanError("exact matching infeasible: no covariate pattern "
                             "contains both treatment arms")
    weights = _subclass_weights(data.n, subclasses, t)
    return AdjustmentPlan(strategy="match_exact", weights=weights,
                          subclasses=subclasses)


def _edge_cover_flow(dist: np.ndarray, edges: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Minimum-cost bipartite edge cover over the given candidate edges,
    solved as min-cost flow. Returns the chosen (treated, control) pairs."""
    n_t, n_c = dist.shape
    g = nx.DiGraph()
    big = n_t + n_c
    g.add_node("S", demand=-big)
    g.add_node("K", demand=big + n_t - n_c)
    g.add_edge("S", "K", capacity=big, weight=0)
    for i in range(n_t):
        g.add_node(("t", i), demand=-1)
        g.add_edge("S", ("t", i), capacity=n_c - 1, weight=0)
    for j in range(n_c):
        g.add_node(("c", j), demand=1)
        g.add_edge(("c", j), "K", capacity=n_t - 1, weight=0)
    for i, j in edges:
        g.add_edge(("t", i), ("c", j), capacity=1,
                   weight=int(round(dist[i, j] * _FLOW_SCALE)))
    flow = nx.min_cost_flow(g)
    chosen = [
        (i, j)
        for i, j in edges
        if flow.get(("t", i), {}).get(("c", j), 0) > 0
    ]
    return _prune_to_stars(dist, chosen)


def _prune_to_stars(dist: np.ndarray, chosen: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Drop edges whose endpoints both have other edges: such an edge
    breaks the star structure, and removing it keeps the cover and never
    increases the cost. Largest distances are dropped first."""
    n_t, n_c = dist.shape
    deg_t = np.bincount([i for i, _ in chosen], minlength=n_t)
    deg_c = np.bincount([j for _, j in chosen], minlength=n_c)
    pruned = []
    for i, j in sorted(chosen, key=lambda e: dist[e[0], e[1]], reverse=True):
        if deg_t[i] > 1 and deg_c[j] > 1:
            deg_t[i] -= 1
            deg_c[j] -= 1
        else:
            pruned.append((i, j))
    return pruned


def _edge_cover_assignment(dist: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-cost bipartite edge cover through the classical reduction to
    an assignment problem: subtract from each edge its endpoints' cheapest
    incident costs, keep only pairs whose reduced cost is negative in a
    minimum-weight matching, and attach every remaining unit to its
    cheapest opposite-arm partner."""
    n_t, n_c = dist.shape
    d_t = dist.min(axis=1)
    d_c = dist.min(axis=0)
    reduced = dist - d_t[:, None] - d_c[None, :]
    size = n_t + n_c
    cost = np.zeros((size, size))
    cost[:n_t, :n_c] = np.minimum(reduced, 0.0)
    rows, cols = scipy.optimize.linear_sum_assignment(cost)
    pairs = []
    covered_t = np.zeros(n_t, dtype=bool)
    covered_c = np.zeros(n_c, dtype=bool)
    for i, j in zip(rows, cols):
        if i < n_t and j < n_c and reduced[i, j] < 0:
            pairs.append((int(i), int(j)))
            covered_t[i] = covered_c[j] = True
    for i in np.flatnonzero(~covered_t):
        pairs.append((int(i), int(dist[i].argmin())))
    for j in np.flatnonzero(~covered_c):
        pairs.append((int(dist[:, j].argmin()), int(j)))
    return _prune_to_stars(dist, pairs)


def _rebalance_tied_subclasses(subclasses, treatment, logit):
    """Among cost-optimal solutions, prefer evenly sized subclasses.

    Subclasses whose members share one logit value have zero internal cost;
    the flow solution may pick an arbitrarily lopsided star decomposition
    for them (one huge star plus 1:1 pairs). Re-cutting those into stars of
    near-equal size keeps the total distance identical.
    """
    t = np.asarray(treatment)
    keep = []
    tied: dict[float, list[np.ndarray]] = {}
    for sub in subclasses:
        vals = logit[sub]
        if vals.max() - vals.min() < 1e-12:
            tied.setdefault(round(float(vals[0]), 12), []).append(sub)
        else:
            keep.append(sub)
    for group in tied.values():
        members = np.concatenate(group)
        treated = members[t[members] == 1]
        controls = members[t[members] == 0]
        centers, leaves = (treated, controls) if len(treated) <= len(controls) \
            else (controls, treated)
        stars: list[list[int]] = [[c] for c in centers]
        for k, u in enumerate(leaves):
            stars[k % len(centers)].append(u)
        keep.extend(np.array(sorted(star)) for star in stars)
    keep.sort(key=lambda s: int(s[0]))
    return keep


def full_match(data: Dataset, propensity: LogisticFit) -> AdjustmentPlan:
    """Optimal full matching on the propensity logit: partition everyone
    into sets of one treated with >=1 controls or one control with >=1
    treateds, minimizing the total within-set logit distance."""
    t = data.treatment
    logit = np.log(propensity.fitted / (1.0 - propensity.fitted))
    treated_ids = np.flatnonzero(t == 1)
    control_ids = np.flatnonzero(t == 0)
    lt, lc = logit[treated_ids], logit[control_ids]
    dist = np.abs(lt[:, None] - lc[None, :])
    if dist.size <= 2000:
        edges = [(i, j) for i in range(len(lt)) for j in range(len(lc))]
        pairs = _edge_cover_flow(dist, edges)
    else:
        # the dense flow network gets slow here; the assignment reduction
        # solves the same cover problem exactly
        pairs = _edge_cover_assignment(dist)

    g = nx.Graph()
    g.add_nodes_from(("t", i) for i in range(len(lt)))
    g.add_nodes_from(("c", j) for j in range(len(lc)))
    g.add_edges_from((("t", i), ("c", j)) for i, j in pairs)
    subclasses = []
    for comp in nx.connected_components(g):
        members = sorted(
            treated_ids[k] if side == "t" else control_ids[k] for side, k in comp
        )
        subclasses.append(np.array(members))
    subclasses.sort(key=lambda s: int(s[0]))
    subclasses = _rebalance_tied_subclasses(subclasses, t, logit)
    weights = _subclass_weights(data.n, subclasses, t)
    return AdjustmentPlan(strategy="match_full", weights=weights,
                          propensity=propensity, subclasses=subclasses)


def matching_cost(subclasses, treatment, logit) -> float:
    """Total treated-control logit distance of a full-matching partition."""
    t = np.asarray(treatment)
    total = 0.0
    for sub in subclasses:
        treated = [i for i in sub if t[i] == 1]
        controls = [i for i in sub if t[i] == 0]
        total += sum(abs(logit[i] - logit[j]) for i in treated for j in controls)
    return total


def covariate_balance(data: Dataset, weights: CaseWeights) -> BalanceReport:
    """Per-variable arm-mean differences, raw and under the plan weights,
    standardized by the pooled unweighted standard deviation."""
    t = data.treatment
    w = weights.w
    x = data.biomarkers
    m1, m0 = x[t == 1], x[t == 0]
    raw = m1.mean(axis=0) - m0.mean(axis=0)
    w1, w0 = w[t == 1], w[t == 0]
    if w1.sum() <= 0 or w0.sum() <= 0:
        weighted = np.full(data.p, np.nan)
    else:
        weighted = (m1 * w1[:, None]).sum(axis=0) / w1.sum() \
            - (m0 * w0[:, None]).sum(axis=0) / w0.sum()
    pooled = np.sqrt((m1.var(axis=0, ddof=1) + m0.var(axis=0, ddof=1)) / 2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw_std = np.where(pooled > 0, raw / pooled, np.nan)
        weighted_std = np.where(pooled > 0, weighted / pooled, np.nan)
    return BalanceReport(
        names=data.names, raw_mean_diff=raw, weighted_mean_diff=weighted,
        raw_std_diff=raw_std, weighted_std_diff=weighted_std,
    )


def matched_pair_differences(pairs, treatment, outcome) -> np.ndarray:
    """Treated-minus-control outcome difference per matched pair."""
    t = np.asarray(treatment)
    y = np.asarray(outcome, dtype=float)
    out = np.empty(len(pairs))
    for k, (i, j) in enumerate(pairs):
        if t[i] + t[j] != 1:
            raise DataError(f"pair ({i}, {j}) does not contain exactly one treated member")
        out[k] = (t[i] - t[j]) * (y[i] - y[j])
    return out


def msm_interaction_fit(data: Dataset, modifier, weights: CaseWeights) -> LinearFit:
    """Weighted interaction model of the outcome on treatment, the candidate
    modifier and their product; coefficient order (1, T, M, M*T)."""
    m = data.biomarkers[:, modifier if isinstance(modifier, int) else data.column(modifier)]
    t = data.treatment
    design = np.column_stack([np.ones(data.n), t, m, m * t])
    return fit_wls(design, data.outcome, weights,
                   names=["(intercept)", "T", "M", "M:T"])


def build_plan(data: Dataset, strategy: str, estimand: str = "ATE",
               stabilize: bool = True, trim_quantile: float | None = 0.99,
               rescale: bool = True) -> AdjustmentPlan:
    """Construct the fitted adjustment artifacts for one strategy, computed
    once on the full dataset and shared by all subsamples."""
    if strategy == "none":
        return AdjustmentPlan(strategy="none", weights=CaseWeights.unit(data.n))
    if strategy == "covariate":
        return AdjustmentPlan(strategy="covariate", weights=CaseWeights.unit(data.n),
                              global_covariates=list(range(data.p)))
    if strategy in ("iptw", "doubly_robust"):
        prop = fit_propensity(data)
        w = iptw_weights(prop, data.treatment, estimand=estimand,
                         stabilize=stabilize, trim_quantile=trim_quantile,
                         rescale=rescale)
        globals_ = list(range(data.p)) if strategy == "doubly_robust" else None
        return AdjustmentPlan(strategy=strategy, weights=w, propensity=prop,
                              global_covariates=globals_)
    if strategy == "match_exact":
        return exact_match(data)
    if strategy == "match_full":
        return full_match(data, fit_propensity(data))
    raise ValueError(f"unknown strategy {strategy!r}")
