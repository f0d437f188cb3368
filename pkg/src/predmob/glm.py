"""Weighted least squares and logistic IRLS with per-observation scores.

This is the estimation engine used by the trees, the propensity model and
the regression oracles. All fits return the weighted per-observation
estimating-function contributions so that instability tests can be run on
them directly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

PROB_CLIP = 1e-6  # bounds fitted propensities away from 0/1
SEPARATION_BOUND = 30.0


class SingularDesignError(ValueError):
    pass


class DegenerateNodeError(ValueError):
    """One treatment arm carries no weight; the caller treats the node as terminal."""


@dataclass
class LinearFit:
    coef: np.ndarray
    scores: np.ndarray  # n x q, rows w_i * x_i * residual_i
    objective: float    # weighted residual sum of squares
    sigma2: float | None = None

    def predict(self, design: np.ndarray) -> np.ndarray:
        return design @ self.coef


@dataclass
class LogisticFit:
    coef: np.ndarray
    fitted: np.ndarray  # clipped probabilities in (0, 1)
    converged: bool
    iterations: int
    scores: np.ndarray | None = None


def _check_rank(design: np.ndarray, w: np.ndarray, names=None):
    keep = w > 0
    if not keep.any():
        raise SingularDesignError("all weights are zero")
    wx = design[keep] * np.sqrt(w[keep])[:, None]
    q = design.shape[1]
    _, r, piv = scipy.linalg.qr(wx, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag.max() * max(wx.shape) * np.finfo(float).eps if diag.size else 0.0
    rank = int((diag > tol).sum())
    if rank < q:
        bad = sorted(piv[rank:])
        labels = [names[j] if names else f"column {j}" for j in bad]
        raise SingularDesignError(
            "design is rank deficient; offending columns: " + ", ".join(map(str, labels))
        )


def fit_wls(design: np.ndarray, response: np.ndarray, weights,
            names=None, check_rank: bool = True) -> LinearFit:
    """Minimize sum_i w_i (y_i - x_i'c)^2.

    Solved through an orthogonal decomposition rather than the normal
    equations, for robustness with near-collinear adjustment covariates.
    """
    x = np.asarray(design, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(response, dtype=float)
    w = weights.w if hasattr(weights, "w") else np.asarray(weights, dtype=float)
    if w.sum() <= 0:
        raise SingularDesignError("all weights are zero")
    if check_rank:
        _check_rank(x, w, names)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(x * sw[:, None], y * sw, rcond=None)
    resid = y - x @ coef
    scores = x * (w * resid)[:, None]
    objective = float(np.sum(w * resid**2))
    dof = w.sum() - x.shape[1]
    sigma2 = objective / dof if dof > 0 else None
    return LinearFit(coef=coef, scores=scores, objective=objective, sigma2=sigma2)


def fit_predmob_base(outcome, t_star, weights, offset=None,
                     outcome_kind: str = "continuous"):
    """Fit the intercept-free treatment model on the single regressor t*/2.

    Continuous outcomes use the closed-form weighted solution; binary
    outcomes use an intercept-free Bernoulli fit on the same regressor.
    """
    y = np.asarray(outcome, dtype=float)
    ts = np.asarray(t_star, dtype=float)
    w = weights.w if hasattr(weights, "w") else np.asarray(weights, dtype=float)
    w_treated = w[ts > 0].sum()
    w_control = w[ts < 0].sum()
    if w_treated <= 0 or w_control <= 0:
        raise DegenerateNodeError("one treatment arm has zero total weight")
    if offset is not None:
        y = y - np.asarray(offset, dtype=float)
    reg = ts / 2.0
    if outcome_kind == "continuous":
        total = w.sum()
        b = 2.0 * float(np.sum(w * ts * y)) / total
        resid = y - reg * b
        scores = (w * reg * resid)[:, None]
        objective = float(np.sum(w * resid**2))
        dof = total - 1.0
        return LinearFit(
            coef=np.array([b]), scores=scores, objective=objective,
            sigma2=objective / dof if dof > 0 else None,
        )
    logit = fit_logistic(reg[:, None], y, w)
    p = logit.fitted
    resid = y - p
    scores = (w * reg * resid)[:, None]
    objective = float(-np.sum(w * (y * np.log(p) + (1 - y) * np.log1p(-p))))
    return LinearFit(coef=logit.coef, scores=scores, objective=objective)


def bernoulli_nll(y, p, w) -> float:
    p = np.clip(p, PROB_CLIP, 1 - PROB_CLIP)
    return float(-np.sum(w * (y * np.log(p) + (1 - y) * np.log1p(-p))))


def fit_logistic(design: np.ndarray, response: np.ndarray, weights,
                 max_iter: int = 50, tol: float = 1e-8) -> LogisticFit:
    """Weighted Bernoulli regression by IRLS.

    Non-convergence and (near-)complete separation are reported through the
    converged flag plus a warning; small subsamples can legitimately
    separate and the caller decides what to do.
    """
    x = np.asarray(design, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(response, dtype=float)
    w = weights.w if hasattr(weights, "w") else np.asarray(weights, dtype=float)
    if (w[y == 1].sum() <= 0) or (w[y == 0].sum() <= 0):
        raise DegenerateNodeError("response needs both classes with positive weight")

    coef = np.zeros(x.shape[1])
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = x @ coef
        p = np.clip(1.0 / (1.0 + np.exp(-eta)), PROB_CLIP, 1 - PROB_CLIP)
        irls_w = w * p * (1 - p)
        z = eta + (y - p) / (p * (1 - p))
        sw = np.sqrt(irls_w)
        new, *_ = np.linalg.lstsq(x * sw[:, None], z * sw, rcond=None)
        step = np.max(np.abs(new - coef))
        coef = new
        if np.max(np.abs(coef)) > SEPARATION_BOUND:
            warnings.warn("possible complete separation in logistic fit", RuntimeWarning)
            break
        if step < tol:
            converged = True
            break
    if not converged and np.max(np.abs(coef)) <= SEPARATION_BOUND:
        warnings.warn("logistic fit did not converge", RuntimeWarning)
    p = np.clip(1.0 / (1.0 + np.exp(-(x @ coef))), PROB_CLIP, 1 - PROB_CLIP)
    scores = x * (w * (y - p))[:, None]
    return LogisticFit(coef=coef, fitted=p, converged=converged, iterations=it,
                       scores=scores)
