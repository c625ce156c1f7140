import numpy as np
import pytest

from semiiv import (
    SolverOptions,
    analytic_density,
    analytic_truth,
    draw_sample,
    fixtures,
    solve_forward,
    support_bounds,
)


def _solve(dgp, **kw):
    dens = analytic_density(dgp)
    bounds = support_bounds(dens, dgp.exclusion_map)
    path = solve_forward(bounds, dgp.exclusion_map, dens, SolverOptions(**kw))
    return dgp, dens, path


@pytest.fixture(scope="session")
def regular_solved():
    return _solve(fixtures.binary_regular(), backward=True)


@pytest.fixture(scope="session")
def singular_solved():
    return _solve(fixtures.binary_singular(), backward=True)


@pytest.fixture(scope="session")
def standard_iv_solved():
    return _solve(fixtures.standard_iv(), backward=True)


@pytest.fixture(scope="session")
def regular_sample():
    return draw_sample(fixtures.binary_regular(), 100_000, seed=1)


@pytest.fixture
def truth():
    return lambda dgp, grid: analytic_truth(dgp, grid).values


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
