"""Score-based parameter-instability tests driving split-variable selection.

The statistic aggregates decorrelated score sums over the levels of a
candidate variable (continuous candidates are binned at weighted quantiles)
and is compared against a chi-square distribution with (k-1)*q degrees of
freedom. Weight-scale invariant and calibrated at unit weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import chdtrc

N_BINS = 10
_J_RIDGE = 1e-10


@dataclass
class InstabilityResult:
    statistic: float
    p_value: float
    df: int
    variable: str = ""
    degenerate: bool = False


def weighted_quantile_bins(values: np.ndarray, w: np.ndarray, k: int = N_BINS) -> np.ndarray:
    """Assign each value to one of up to k bins with roughly equal total weight."""
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(w[order])
    total = cum[-1]
    probs = np.arange(1, k) / k
    cuts = values[order][np.searchsorted(cum, probs * total)]
    return np.searchsorted(np.unique(cuts), values, side="right")


def level_codes(values: np.ndarray, w: np.ndarray, kind: str) -> np.ndarray:
    if kind == "binary":
        return (values > 0.5).astype(np.intp)
    if kind == "categorical":
        _, codes = np.unique(values, return_inverse=True)
        return codes
    if kind == "binned_continuous":
        return weighted_quantile_bins(values, w)
    raise ValueError(f"unknown variable kind {kind!r}")


def instability_statistic(scores: np.ndarray, codes: np.ndarray,
                          w: np.ndarray) -> tuple[float, int, bool]:
    """Return (statistic, df, degenerate) for pre-computed level codes.

    `scores` are the weighted per-observation estimating-function
    contributions (they sum to ~0 at the node optimum).
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    q = s.shape[1]
    if q == 1:
        j11 = float(s[:, 0] @ s[:, 0])
        if j11 <= 0:
            return 0.0, 1, True
        s_hat = s / np.sqrt(j11 * (1.0 + _J_RIDGE))
    else:
        j = s.T @ s
        tr = np.trace(j)
        if tr <= 0:
            return 0.0, q, True
        j = j + np.eye(q) * (_J_RIDGE * tr / q)
        # decorrelate so the score rows have identity total outer product
        vals, vecs = np.linalg.eigh(j)
        if vals[-1] <= 0 or vals[0] / vals[-1] < 1e-14:
            return 0.0, q, True
        j_inv_sqrt = vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T
        s_hat = s @ j_inv_sqrt

    k = int(codes.max()) + 1
    w_level = np.bincount(codes, weights=w, minlength=k)
    keep = w_level > 0
    if keep.sum() < 2:
        return 0.0, q, True
    pi = w_level / w.sum()
    stat = 0.0
    for col in range(q):
        sums = np.bincount(codes, weights=s_hat[:, col], minlength=k)
        stat += float(np.sum(sums[keep] ** 2 / pi[keep]))
    df = (int(keep.sum()) - 1) * q
    return stat, df, False


def instability_test(scores: np.ndarray, split_var: np.ndarray, weights,
                     kind: str = "binary", variable: str = "") -> InstabilityResult:
    w = weights.w if hasattr(weights, "w") else np.asarray(weights, dtype=float)
    codes = level_codes(np.asarray(split_var, dtype=float), w, kind)
    stat, df, degenerate = instability_statistic(scores, codes, w)
    if degenerate or stat <= 0:
        return InstabilityResult(0.0, 1.0, max(df, 1), variable, degenerate)
    return InstabilityResult(stat, float(chdtrc(df, stat)), df, variable)
