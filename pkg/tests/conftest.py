import numpy as np
import pytest

from fbvie import ContinuationParams, FbvieProblem, continuation_solve, make_grid
from fbvie.problem import const_matrix, const_path
from fbvie.presets import (broken_nonlinear, lq_matrix, lq_scalar,
                           lq_scalar_terminal, nonlinear_example)

PRESETS = {
    "lq-scalar": lq_scalar,
    "lq-scalar-terminal": lq_scalar_terminal,
    "lq-matrix": lq_matrix,
    "nonlinear": nonlinear_example,
    "broken": broken_nonlinear,
}


def zero_problem(n: int = 1, c: float = 1.0, gamma: float = 0.0) -> FbvieProblem:
    """All coefficients zero: the solution is X = x0, Y = 0."""

    def zero_f(t, s, x, y, z, xT):
        return np.zeros(np.shape(np.asarray(x, dtype=float)))

    def zero_g(t, s, x, y):
        return np.zeros(np.shape(np.asarray(y, dtype=float)))

    def zero_h(t, x, xT, z=None):
        return np.zeros(np.shape(np.asarray(x, dtype=float)))

    return FbvieProblem(
        n=n, f=zero_f, g=zero_g, h=zero_h,
        K=const_matrix(np.zeros((n, n))),
        x0=const_path(c * np.ones(n)),
        G=lambda xT: np.zeros(n), G0=np.zeros((n, n)),
        gamma=gamma, K_G=1.0, G_matrix=np.zeros((n, n)),
        time_homogeneous=True, name="zero",
    )


@pytest.fixture(scope="session")
def solve_cached():
    """Memoized continuation solves shared across test modules."""
    cache = {}

    def solve(preset: str, n_intervals: int, horizon: float = 1.0):
        key = (preset, n_intervals, horizon)
        if key not in cache:
            grid = make_grid(horizon, n_intervals)
            problem = PRESETS[preset](grid)
            sol, report = continuation_solve(problem, grid,
                                             ContinuationParams())
            cache[key] = (grid, problem, sol, report)
        return cache[key]

    return solve
