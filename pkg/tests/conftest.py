import pytest

from dgp import simulate


@pytest.fixture
def rct():
    """Randomized trial with one strong modifier (X1) and one prognostic
    variable (X3)."""
    data, ite = simulate(n=600, seed=42, effect=1.0,
                         interaction=[(2.0, 0)], prognostic=[(1.5, 2)])
    return data, ite


@pytest.fixture
def confounded():
    """Observational draw: X2 drives both assignment and outcome."""
    data, ite = simulate(n=800, seed=7, effect=1.0,
                         prognostic=[(2.0, 1)], assignment=[(1.2, 1)])
    return data, ite
