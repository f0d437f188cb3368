"""Reproducible generators for the built-in simulation scenarios, including
the treatment-intercept solver and correlated binary biomarkers."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from predmob.data import Dataset

NOISE_SD = 0.5  # outcome noise variance 0.25


@dataclass(frozen=True)
class MuTerm:
    coef: float
    variables: tuple[int, ...]  # biomarker indices entering the product
    with_treatment: bool = False


@dataclass(frozen=True)
class ScenarioSpec:
    p: int
    treatment_terms: tuple[tuple[float, int], ...]  # (coef, biomarker index)
    mu_terms: tuple[MuTerm, ...]
    extra_nuisance: int = 0
    corr_pairs: tuple[tuple[int, int, float], ...] = ()
    noise_sd: float = NOISE_SD
    n: int = 1000
    description: str = ""

    def __post_init__(self):
        total = self.p + self.extra_nuisance
        for coef, idx in self.treatment_terms:
            if not (math.isfinite(coef) and 0 <= idx < total):
                raise ValueError("bad treatment term")
        for term in self.mu_terms:
            if not math.isfinite(term.coef):
                raise ValueError("non-finite coefficient")
            if any(not 0 <= v < total for v in term.variables):
                raise ValueError("variable index out of range")
        for i, j, rho in self.corr_pairs:
            if abs(rho) > 1 or i == j:
                raise ValueError("bad correlation pair")

    @property
    def total_p(self) -> int:
        return self.p + self.extra_nuisance

    def names(self) -> tuple[str, ...]:
        return tuple(
            [f"X{i + 1}" for i in range(self.p)]
            + [f"V{i + 1}" for i in range(self.extra_nuisance)]
        )

    def mu(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        out = np.zeros(x.shape[0])
        for term in self.mu_terms:
            v = np.full(x.shape[0], term.coef)
            for idx in term.variables:
                v = v * x[:, idx]
            if term.with_treatment:
                v = v * t
            out += v
        return out

    def true_ite(self, x: np.ndarray) -> np.ndarray:
        ones = np.ones(x.shape[0])
        return self.mu(x, ones) - self.mu(x, 0.0 * ones)

    def eta(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(x.shape[0])
        for coef, idx in self.treatment_terms:
            out += coef * x[:, idx]
        return out


@dataclass(frozen=True)
class GeneratedSample:
    dataset: Dataset
    true_ite: np.ndarray
    beta0: float


def _expit(z):
    return 1.0 / (1.0 + np.exp(-z))


def correlated_binary_pair(rho: float) -> tuple[float, float, float, float]:
    """Joint cell probabilities (p00, p01, p10, p11) of two correlated
    0/1 variables with 0.5/0.5 margins."""
    if abs(rho) > 1:
        raise ValueError("|rho| must be <= 1")
    p11 = 0.25 * (1.0 + rho)
    off = 0.25 * (1.0 - rho)
    return (p11, off, off, p11)


def _eta_joint_cells(spec: ScenarioSpec):
    """Enumerate the joint distribution of the covariates entering the
    treatment model: (probability, eta value) per cell."""
    used = sorted({idx for _, idx in spec.treatment_terms})
    coef = {idx: 0.0 for idx in used}
    for c, idx in spec.treatment_terms:
        coef[idx] += c
    pair_of = {}
    for i, j, rho in spec.corr_pairs:
        if i in used and j in used:
            pair_of[i] = (j, rho)
    # remaining correlations only tie a used variable to an unused one,
    # which leaves its 0.5 margin intact
    singles = [idx for idx in used if idx not in pair_of
               and idx not in {j for j, _ in pair_of.values()}]
    cells = [(1.0, 0.0)]
    for idx in singles:
        cells = [(p * 0.5, e + coef[idx] * b) for p, e in cells for b in (0, 1)]
    for i, (j, rho) in pair_of.items():
        p00, p01, p10, p11 = correlated_binary_pair(rho)
        joint = {(0, 0): p00, (0, 1): p01, (1, 0): p10, (1, 1): p11}
        cells = [
            (p * q, e + coef[i] * bi + coef[j] * bj)
            for p, e in cells
            for (bi, bj), q in joint.items()
        ]
    return cells


def solve_intercept(spec: ScenarioSpec, tol: float = 1e-10) -> float:
    """beta0 such that the expected treated fraction is exactly one half,
    by bisection over the exact joint covariate distribution."""
    cells = _eta_joint_cells(spec)
    if not cells or all(e == 0 for _, e in cells):
        return 0.0

    def treated_fraction(b0):
        return sum(p * _expit(b0 + e) for p, e in cells)

    lo, hi = -40.0, 40.0
    while hi - lo > 1e-14:
        mid = (lo + hi) / 2.0
        if treated_fraction(mid) < 0.5:
            lo = mid
        else:
            hi = mid
        if abs(treated_fraction((lo + hi) / 2.0) - 0.5) < tol:
            break
    return (lo + hi) / 2.0


def generate(spec: ScenarioSpec, n: int | None = None,
             seed: int | None = 0) -> GeneratedSample:
    """Draw one dataset: biomarkers, treatment from the logistic assignment
    model and a Gaussian outcome, with the true per-row treatment effect."""
    if n is None:
        n = spec.n
    rng = np.random.default_rng(seed)
    p = spec.total_p
    x = (rng.random((n, p)) < 0.5).astype(float)
    for i, j, rho in spec.corr_pairs:
        p00, p01, p10, _ = correlated_binary_pair(rho)
        u = rng.random(n)
        xi = (u >= p00 + p01).astype(float)
        xj = ((u >= p00) & (u < p00 + p01)) | (u >= p00 + p01 + p10)
        x[:, i] = xi
        x[:, j] = xj.astype(float)
    beta0 = solve_intercept(spec)
    t = (rng.random(n) < _expit(beta0 + spec.eta(x))).astype(float)
    mu = spec.mu(x, t)
    y = mu + spec.noise_sd * rng.standard_normal(n)
    data = Dataset(outcome=y, treatment=t, biomarkers=x, names=spec.names())
    return GeneratedSample(dataset=data, true_ite=spec.true_ite(x), beta0=beta0)


_LOG = math.log
_TABLE1_ETA = (
    (_LOG(1.25), 0), (_LOG(1.5), 1), (_LOG(1.75), 2), (_LOG(1.25), 3),
    (_LOG(1.5), 4), (_LOG(1.75), 5), (_LOG(2.0), 6),
)
# shared prognostic block 0.2*X4 + 0.3*X5 + 0.4*X6 + 0.5*X7 + 0.4*X8
_PROG_BASE = (
    MuTerm(0.2, (3,)), MuTerm(0.3, (4,)), MuTerm(0.4, (5,)),
    MuTerm(0.5, (6,)), MuTerm(0.4, (7,)),
)


def _t1(mu_terms, **kw) -> ScenarioSpec:
    return ScenarioSpec(p=10, treatment_terms=_TABLE1_ETA,
                        mu_terms=tuple(mu_terms), **kw)


def _t2(mu_terms, eta, description) -> ScenarioSpec:
    return ScenarioSpec(p=2, treatment_terms=tuple(eta),
                        mu_terms=tuple(mu_terms), description=description)


def builtin_scenarios() -> dict[str, ScenarioSpec]:
    """All built-in generating models, keyed by scenario id."""
    t = MuTerm(0.5, (), True)
    prog9 = MuTerm(0.2, (8,))
    prog10 = MuTerm(0.3, (9,))
    s: dict[str, ScenarioSpec] = {}
    s["0"] = _t1([], description="null: no outcome effects")
    s["A"] = _t1([t, *_PROG_BASE, prog9, prog10],
                 description="prognostic effects only")
    s["B.1"] = _t1([t, *_PROG_BASE, prog9, prog10, MuTerm(-1.0, (9,), True)],
                   description="X10 prognostic, qualitative predictive")
    s["B.2"] = _t1([t, *_PROG_BASE, prog9, prog10, MuTerm(1.0, (9,), True)],
                   description="X10 prognostic, quantitative predictive")
    s["C.1"] = _t1([t, *_PROG_BASE, prog9, MuTerm(-1.0, (9,), True)],
                   description="X10 qualitative predictive only")
    s["C.2"] = _t1([t, *_PROG_BASE, prog9, MuTerm(1.0, (9,), True)],
                   description="X10 quantitative predictive only")
    s["D.1"] = _t1([t, *_PROG_BASE, prog9, prog10, MuTerm(-1.0, (2,), True)],
                   description="instrument X3 qualitative predictive")
    s["D.2"] = _t1([t, *_PROG_BASE, prog9, prog10, MuTerm(1.0, (2,), True)],
                   description="instrument X3 quantitative predictive")
    s["E.1"] = _t1([t, *_PROG_BASE, prog9, prog10, MuTerm(-1.0, (6,), True)],
                   description="confounder X7 qualitative predictive")
    s["E.2"] = _t1([t, *_PROG_BASE, prog9, prog10, MuTerm(1.0, (6,), True)],
                   description="confounder X7 quantitative predictive")
    s["F.1"] = _t1([MuTerm(0.25, (), True), *_PROG_BASE, prog9, prog10,
                    MuTerm(-0.5, (9,), True)],
                   description="small effects, interaction -0.5")
    s["F.2"] = _t1([MuTerm(0.25, (), True), *_PROG_BASE, prog9, prog10,
                    MuTerm(-0.25, (9,), True)],
                   description="small effects, interaction -0.25")
    s["G.1"] = _t1([t, *_PROG_BASE, prog9, prog10, MuTerm(-1.0, (9,), True)],
                   corr_pairs=((6, 9, 0.5),),
                   description="X7 and X10 correlated +0.5")
    s["G.2"] = _t1([t, *_PROG_BASE, prog9, prog10, MuTerm(-1.0, (9,), True)],
                   corr_pairs=((6, 9, -0.7),),
                   description="X7 and X10 correlated -0.7")
    s["H.1"] = _t1([t, *_PROG_BASE, MuTerm(-1.2, (8,), True),
                    MuTerm(-1.0, (9,), True)],
                   description="X9 and X10 predictive only")
    s["H.2"] = _t1([t, *_PROG_BASE, MuTerm(0.6, (8,)), prog10,
                    MuTerm(-1.0, (8,), True), MuTerm(-1.0, (9,), True)],
                   description="X9 and X10 prognostic and predictive")
    s["I"] = _t1([t, *_PROG_BASE, prog9, MuTerm(-1.0, (8, 9), True)],
                 n=2500, description="three-way interaction of X9, X10, T")
    s["J"] = _t1([t, *_PROG_BASE, prog9, MuTerm(-1.0, (9,), True)],
                 extra_nuisance=20,
                 description="C.1 plus 20 nuisance biomarkers")

    eta2 = ((_LOG(1.5), 1),)
    eta12 = ((_LOG(1.5), 0), (_LOG(1.5), 1))
    eta1 = ((_LOG(1.5), 0),)
    s["1"] = _t2([t, MuTerm(1.0, (1,)), MuTerm(2.0, (1,), True)], eta2,
                 "X2 quantitative predictive, positive prognostic")
    s["2"] = _t2([t, MuTerm(2.0, (1,), True)], eta2,
                 "X2 quantitative predictive, not prognostic")
    s["3"] = _t2([t, MuTerm(-2.0, (1,)), MuTerm(2.0, (1,), True)], eta2,
                 "X2 quantitative predictive, negative prognostic")
    s["4"] = _t2([t, MuTerm(-2.0, (1,)), MuTerm(2.0, (1,), True)], eta12,
                 "scenario 3 with both biomarkers in the assignment model")
    s["5"] = _t2([t, MuTerm(-1.0, (1,)), MuTerm(-2.0, (1,), True)], eta2,
                 "X2 qualitative predictive, negative prognostic")
    s["6"] = _t2([t, MuTerm(1.0, (1,)), MuTerm(-2.0, (1,), True)], eta2,
                 "X2 qualitative predictive, positive prognostic")
    s["7"] = _t2([t, MuTerm(3.0, (0,)), MuTerm(-2.0, (1,), True)], eta1,
                 "X2 qualitative predictive, X1 positive prognostic")
    s["8"] = _t2([t, MuTerm(3.0, (0,)), MuTerm(-2.0, (1,), True)], eta12,
                 "scenario 7 with both biomarkers in the assignment model")
    return s


def get_scenario(scenario_id: str) -> ScenarioSpec:
    table = builtin_scenarios()
    if scenario_id not in table:
        raise KeyError(
            f"unknown scenario {scenario_id!r}; valid ids: "
            + ", ".join(sorted(table, key=str))
        )
    return table[scenario_id]
