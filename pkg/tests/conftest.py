from functools import lru_cache

import pytest
from hypothesis import settings

from mfgc.coupler import SolverConfig, solve
from mfgc.grid import TimeGrid, TorusGrid
from mfgc.models import LinearDemand
from mfgc.pde import SchemeConfig
from mfgc.profiles import Profile

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# LinearDemand regression setup shared by the solver-level tests
REG_EPS = 1.0
REG_NU = 0.1
REG_TERMINAL = Profile(0.0, 0.5, 1, 0.0)
REG_M0 = Profile(1.0, 0.5, 1, 0.0)


@pytest.fixture
def grid64():
    return TorusGrid(64)


def regression_model(n):
    return LinearDemand(TorusGrid(n), REG_EPS, terminal=REG_TERMINAL)


def regression_solve(n, nt=None, T=1.0, **solver_kw):
    model = regression_model(n)
    tgrid = TimeGrid(T, nt or 2 * n)
    cfg = SolverConfig(scheme=SchemeConfig(nu=REG_NU), **solver_kw)
    return solve(model, tgrid, REG_M0.density(model.grid.nodes), cfg)


@lru_cache(maxsize=None)
def cached_regression(n):
    """Converged regression solve on (n, 2n), shared across test modules."""
    return regression_solve(n)
