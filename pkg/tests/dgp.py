"""Shared data builders for the test suite."""

import numpy as np

from predmob.data import Dataset


def simulate(n=400, p=4, seed=0, effect=1.0, interaction=(), prognostic=(),
             assignment=(), noise=0.5):
    """Small dataset with Bernoulli(0.5) biomarkers and a linear outcome.

    interaction / prognostic / assignment are sequences of (coef, column):
    interaction terms multiply the treatment indicator, prognostic terms
    enter the outcome directly, assignment terms enter the treatment
    logit. Returns (dataset, true per-row treatment effect).
    """
    rng = np.random.default_rng(seed)
    x = (rng.random((n, p)) < 0.5).astype(float)
    eta = np.zeros(n)
    for coef, j in assignment:
        eta += coef * x[:, j]
    t = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    ite = np.full(n, float(effect))
    for coef, j in interaction:
        ite = ite + coef * x[:, j]
    y = ite * t
    for coef, j in prognostic:
        y = y + coef * x[:, j]
    y = y + noise * rng.standard_normal(n)
    names = tuple(f"X{j + 1}" for j in range(p))
    data = Dataset(outcome=y, treatment=t, biomarkers=x, names=names)
    return data, ite
