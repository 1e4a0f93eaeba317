import numpy as np
import pytest

from fbvie import LinearDrivers, make_grid
from fbvie.base_linear import (_assemble, reconstruct_base_fields,
                               solve_base_diagonal, solve_base_fbde_crosscheck)
from fbvie.problem import const_path


def _zero_drivers(n=1, x0=1.0, g_matrix=None):
    gm = np.zeros((n, n)) if g_matrix is None else g_matrix
    return LinearDrivers.zero(n, const_path(x0 * np.ones(n)),
                              lambda x: gm @ x, np.zeros((n, n)), gm)


def _cosh_reference(grid, x0=1.0):
    return x0 * np.cosh(grid.T - grid.t) / np.cosh(grid.T)


def test_zero_data_gives_zero_solution():
    g = make_grid(1.0, 16)
    sol = solve_base_diagonal(_zero_drivers(x0=0.0), g)
    np.testing.assert_allclose(sol.X.values, 0.0, atol=1e-14)
    np.testing.assert_allclose(sol.Y.values, 0.0, atol=1e-14)


def test_cosh_closed_form_and_grid_convergence():
    errs = {}
    for n_int in (64, 128, 256):
        g = make_grid(1.0, n_int)
        sol = solve_base_diagonal(_zero_drivers(), g)
        errs[n_int] = np.max(np.abs(sol.X.values[:, 0] - _cosh_reference(g)))
        assert sol.residual_forward <= 1e-12 * (1 + sol.X.sup_norm())
    assert errs[64] <= 1e-3
    assert 3.5 <= errs[64] / errs[128] <= 4.5
    assert 3.5 <= errs[128] / errs[256] <= 4.5


def test_terminal_value_matches_closed_form():
    g = make_grid(1.0, 256)
    sol = solve_base_diagonal(_zero_drivers(x0=2.0), g)
    assert sol.X.values[-1, 0] == pytest.approx(2.0 / np.cosh(1.0), abs=1e-5)


def test_forward_driver_assembly_is_plain_quadrature():
    # with the feedback and terminal blocks removed the right-hand side is
    # the running integral of f0, i.e. c * t for constant f0
    g = make_grid(1.0, 32)
    c = 0.8
    n = 1
    drivers = LinearDrivers(
        n=n,
        f0=lambda t, s: np.full(np.broadcast_shapes(np.shape(t), np.shape(s)) + (n,), c),
        g0=lambda t, s: np.zeros(np.broadcast_shapes(np.shape(t), np.shape(s)) + (n,)),
        h0=lambda t: np.zeros(np.shape(t) + (n,)),
        x0=const_path([0.0]),
        G=lambda x: np.zeros(n), G0=np.zeros((n, n)), G_matrix=np.zeros((n, n)))
    _, rhs, b, _ = _assemble(drivers, g)
    np.testing.assert_allclose(rhs[:, 0], c * g.t, atol=1e-14)
    np.testing.assert_allclose(b, 0.0)


def test_boundary_conditions_hold_exactly():
    g = make_grid(1.0, 32)
    n = 1
    drivers = LinearDrivers(
        n=n,
        f0=lambda t, s: np.zeros(np.broadcast_shapes(np.shape(t), np.shape(s)) + (n,)),
        g0=lambda t, s: np.zeros(np.broadcast_shapes(np.shape(t), np.shape(s)) + (n,)),
        h0=lambda t: 0.3 * np.ones(np.shape(t) + (n,)),
        x0=lambda t: (1.0 + np.asarray(t))[..., None],
        G=lambda x: np.zeros(n), G0=np.zeros((n, n)), G_matrix=np.zeros((n, n)))
    sol = solve_base_diagonal(drivers, g)
    assert sol.X.values[0, 0] == pytest.approx(1.0, abs=1e-13)
    assert sol.Y.values[-1, 0] == pytest.approx(sol.X.values[-1, 0] + 0.3, abs=1e-13)
    fields = reconstruct_base_fields(drivers, g, sol)
    np.testing.assert_allclose(fields.field_x.values[:, 0, 0], 1.0 + g.t,
                               atol=1e-13)


def test_superposition_on_random_drivers():
    g = make_grid(1.0, 24)
    rng = np.random.default_rng(11)
    coef = rng.standard_normal(6)

    def drivers(scale_a, scale_b):
        def f0(t, s):
            t, s = np.asarray(t), np.asarray(s)
            out = (scale_a * coef[0] * np.cos(t + s)
                   + scale_b * coef[1] * s)
            return np.broadcast_to(out, np.broadcast_shapes(t.shape, s.shape))[..., None]

        def g0(t, s):
            t, s = np.asarray(t), np.asarray(s)
            out = scale_a * coef[2] * np.sin(s) + scale_b * coef[3] * t
            return np.broadcast_to(out, np.broadcast_shapes(t.shape, s.shape))[..., None]

        def h0(t):
            return (scale_a * coef[4] * np.asarray(t))[..., None]

        def x0(t):
            return (scale_b * coef[5] * np.cos(np.asarray(t)))[..., None]

        return LinearDrivers(n=1, f0=f0, g0=g0, h0=h0, x0=x0,
                             G=lambda x: np.zeros(1), G0=np.zeros((1, 1)),
                             G_matrix=np.zeros((1, 1)))

    sol_a = solve_base_diagonal(drivers(1.0, 0.0), g)
    sol_b = solve_base_diagonal(drivers(0.0, 1.0), g)
    sol_ab = solve_base_diagonal(drivers(1.0, 1.0), g)
    np.testing.assert_allclose(sol_ab.X.values,
                               sol_a.X.values + sol_b.X.values, atol=1e-11)
    np.testing.assert_allclose(sol_ab.Y.values,
                               sol_a.Y.values + sol_b.Y.values, atol=1e-11)


def test_crosscheck_agrees_on_smooth_data():
    for n_int in (64, 128):
        g = make_grid(1.0, n_int)
        n = 1
        drivers = LinearDrivers(
            n=n,
            f0=lambda t, s: np.broadcast_to(
                np.asarray(t) * np.ones(np.shape(s)),
                np.broadcast_shapes(np.shape(t), np.shape(s)))[..., None],
            g0=lambda t, s: np.zeros(np.broadcast_shapes(np.shape(t), np.shape(s)) + (n,)),
            h0=lambda t: np.zeros(np.shape(t) + (n,)),
            x0=const_path([0.0]),
            G=lambda x: np.zeros(n), G0=np.zeros((n, n)),
            G_matrix=np.zeros((n, n)))
        direct = solve_base_diagonal(drivers, g)
        fbde = solve_base_fbde_crosscheck(drivers, g)
        gap = np.max(np.abs(direct.X.values - fbde.X.values))
        assert gap <= 10.0 * g.h ** 2

    g = make_grid(1.0, 128)
    direct = solve_base_diagonal(_zero_drivers(), g)
    fbde = solve_base_fbde_crosscheck(_zero_drivers(), g)
    assert np.max(np.abs(direct.X.values - fbde.X.values)) <= 10.0 * g.h ** 2


def test_nonlinear_terminal_map_outer_loop():
    g = make_grid(1.0, 48)
    n = 1
    # cubic-perturbed monotone terminal map, no linear shortcut supplied
    drivers = LinearDrivers(
        n=n,
        f0=lambda t, s: np.zeros(np.broadcast_shapes(np.shape(t), np.shape(s)) + (n,)),
        g0=lambda t, s: np.zeros(np.broadcast_shapes(np.shape(t), np.shape(s)) + (n,)),
        h0=lambda t: np.zeros(np.shape(t) + (n,)),
        x0=const_path([1.0]),
        G=lambda x: 0.5 * x + 0.1 * x ** 3, G0=0.5 * np.eye(n))
    sol = solve_base_diagonal(drivers, g)
    assert sol.residual_forward <= 1e-11
    fbde = solve_base_fbde_crosscheck(drivers, g)
    assert np.max(np.abs(sol.X.values - fbde.X.values)) <= 10.0 * g.h ** 2


def test_fields_flat_backward_fibres_without_g0():
    g = make_grid(1.0, 16)
    sol = solve_base_diagonal(_zero_drivers(), g)
    fields = reconstruct_base_fields(_zero_drivers(), g, sol)
    fy = fields.field_y.values
    for i in range(g.N + 1):
        row = fy[i, i:]
        np.testing.assert_allclose(row - row[0], 0.0, atol=1e-13)
    assert fields.diag_defect <= 1e-12
    # lower field diagonal consistency at the terminal corner
    assert fields.field_x.values[-1, -1, 0] == pytest.approx(
        sol.X.values[-1, 0], abs=1e-12)
