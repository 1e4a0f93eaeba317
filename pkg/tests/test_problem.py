import numpy as np
import pytest

from fbvie import VectorPath, make_grid, mc2_differences, reduce_to_fbde
from fbvie.problem import (LqSpec, NonlinearSpec, build_lq_problem,
                           build_nonlinear_problem, const_matrix, const_path)
from fbvie.presets import broken_nonlinear, lq_matrix, lq_scalar, nonlinear_example


@pytest.fixture
def grid():
    return make_grid(1.0, 16)


# ---------------------------------------------------------------------------
# linear-convex builder
# ---------------------------------------------------------------------------


def test_scalar_lq_coefficients_match_hand_closures(grid):
    p = lq_scalar(grid)
    x, y, z, xT = np.array([0.7]), np.array([-0.2]), np.array([0.4]), np.array([1.3])
    # f = -z/2, g = 0, h = 2x, K = 1
    np.testing.assert_allclose(p.f(0.8, 0.5, x, y, z, xT), -0.5 * z, atol=1e-15)
    np.testing.assert_allclose(p.g(0.2, 0.6, x, y), 0.0, atol=1e-15)
    np.testing.assert_allclose(p.h(0.3, x, xT, z), 2.0 * x, atol=1e-15)
    np.testing.assert_allclose(p.K(0.2, np.array([0.5]))[0], [[1.0]], atol=1e-15)
    np.testing.assert_allclose(p.G(xT), 0.0, atol=1e-15)
    assert p.gamma == 2.0


def test_lq_zero_control_channel_decouples(grid):
    a0 = np.array([[0.3]])
    spec = LqSpec(n=1, m=1, A=const_matrix(a0), B=const_matrix([[0.0]]),
                  R=lambda t: np.eye(1), Q=lambda t: np.eye(1),
                  x0=const_path([1.0]), G0=np.zeros((1, 1)), gamma=2.0)
    p = build_lq_problem(spec, grid)
    x = np.array([2.0])
    np.testing.assert_allclose(
        p.f(0.9, 0.4, x, x, np.array([5.0]), x), a0 @ x, atol=1e-15)


def test_lq_zero_state_matrix_kills_adjoint_terms(grid):
    spec = LqSpec(n=1, m=1, A=const_matrix([[0.0]]), B=const_matrix([[1.0]]),
                  R=lambda t: np.eye(1), Q=lambda t: np.eye(1),
                  x0=const_path([1.0]), G0=np.eye(1), gamma=2.0)
    p = build_lq_problem(spec, grid)
    x, y = np.array([0.5]), np.array([1.5])
    np.testing.assert_allclose(p.g(0.1, 0.9, x, y), 0.0, atol=1e-15)
    np.testing.assert_allclose(p.h(0.3, x, x, None), 2.0 * x, atol=1e-15)


def test_lq_rejects_singular_r(grid):
    spec = LqSpec(n=1, m=1, A=const_matrix([[0.0]]), B=const_matrix([[1.0]]),
                  R=lambda t: np.array([[max(0.0, t - 0.5)]]),
                  Q=lambda t: np.eye(1), x0=const_path([1.0]),
                  G0=np.zeros((1, 1)), gamma=2.0)
    with pytest.raises(ValueError, match="node"):
        build_lq_problem(spec, grid)


def test_matrix_lq_dimensions(grid):
    p = lq_matrix(grid)
    assert p.n == 2 and p.kernel_dim == 1
    k = p.K(0.2, np.array([0.5, 0.9]))
    assert k.shape == (2, 1, 2)
    p.validate_on(grid)


# ---------------------------------------------------------------------------
# nonlinear builder
# ---------------------------------------------------------------------------


def test_nonlinear_b_only(grid):
    lam = 1.5
    spec = NonlinearSpec(n=1, lambda_=lam,
                         b=lambda t, x: lam * np.asarray(x, dtype=float))
    p = build_nonlinear_problem(spec, grid)
    x = np.array([0.8])
    np.testing.assert_allclose(p.h(0.2, x, x, np.zeros(1)), lam * x, atol=1e-15)
    np.testing.assert_allclose(p.f(0.9, 0.1, x, x, np.zeros(1), x), 0.0, atol=1e-15)
    np.testing.assert_allclose(p.g(0.1, 0.9, x, x), 0.0, atol=1e-15)
    assert p.gamma == pytest.approx(lam)
    assert "nonpositive-margin" not in p.flags


def test_nonlinear_zero_and_boundary_margins(grid):
    vac = build_nonlinear_problem(NonlinearSpec(n=1, lambda_=0.0), grid)
    assert vac.gamma == 0.0 and "nonpositive-margin" in vac.flags
    edge = build_nonlinear_problem(
        NonlinearSpec(n=1, lambda_=1.0, L_a=1.0, L_phi=1.0, L_psi=0.0), grid)
    assert edge.gamma == 0.0 and "nonpositive-margin" in edge.flags


def test_nonlinear_outer_psi_enters_boundary_data(grid):
    p = nonlinear_example(grid, lambda_=2.0, L_a=0.0, L_phi=0.0, L_psi=0.1)
    x = np.array([1.0])
    # h(t,x) = 2x - 0.1*(T - t)*x for the linear representative
    got = p.h(grid.t[4], x, x, np.zeros(1))
    want = 2.0 * x - 0.1 * (grid.T - grid.t[4]) * x
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_broken_preset_places_psi_in_backward_integrand(grid):
    p = broken_nonlinear(grid)
    x, y = np.array([0.3]), np.array([0.0])
    np.testing.assert_allclose(p.g(0.1, 0.7, x, y), x, atol=1e-15)
    assert p.gamma == pytest.approx(0.1 - 1.0)
    assert "nonpositive-margin" in p.flags


# ---------------------------------------------------------------------------
# reduction probing
# ---------------------------------------------------------------------------


def test_reduce_constant_coefficients(grid):
    p = lq_scalar(grid)
    red = reduce_to_fbde(p, grid, tol=1e-12)
    assert red.reducible and red.max_deviation == 0.0
    assert red.lq_fbde is not None
    a_fbde, b_fbde, psi = red.lq_fbde
    pvec, qvec = np.array([1.0]), np.array([2.0])
    np.testing.assert_allclose(a_fbde(0.5, pvec, qvec), -0.5 * qvec, atol=1e-15)
    np.testing.assert_allclose(b_fbde(0.5, pvec, qvec), 2.0 * pvec, atol=1e-15)
    np.testing.assert_allclose(psi(pvec), 0.0, atol=1e-15)


def test_reduce_flags_time_dependence(grid):
    spec = LqSpec(n=1, m=1, A=const_matrix([[0.0]]), B=const_matrix([[1.0]]),
                  R=lambda t: np.eye(1),
                  Q=lambda t: (1.0 + np.asarray(t))[..., None, None] * np.eye(1),
                  x0=const_path([1.0]), G0=np.zeros((1, 1)), gamma=2.0)
    p = build_lq_problem(spec, grid)
    red = reduce_to_fbde(p, grid, tol=1e-12)
    assert not red.reducible
    assert red.witness[0] == "h"


def test_reduce_is_idempotent(grid):
    p = lq_matrix(grid)
    r1 = reduce_to_fbde(p, grid, tol=1e-12)
    r2 = reduce_to_fbde(p, grid, tol=1e-12)
    assert r1.reducible and r2.reducible
    assert r1.max_deviation == r2.max_deviation
    args = (0.4, np.ones(2), np.ones(2), np.ones(1), np.ones(2))
    np.testing.assert_array_equal(r1.f_const(*args), r2.f_const(*args))


# ---------------------------------------------------------------------------
# path differences
# ---------------------------------------------------------------------------


def _random_paths(grid, n, seed):
    rng = np.random.default_rng(seed)
    return [VectorPath(grid, rng.standard_normal((grid.N + 1, n)))
            for _ in range(4)]


def test_mc2_identical_paths_vanish(grid):
    p = lq_scalar(grid)
    x, y, _, _ = _random_paths(grid, 1, 0)
    for mode in ("full", "terminal-only"):
        b = mc2_differences(p, x, y, x, y, mode=mode)
        np.testing.assert_allclose(b.x_hat.values, 0.0)
        np.testing.assert_allclose(b.h_hat.values, 0.0)
        js = np.arange(grid.N + 1)
        np.testing.assert_allclose(b.f_hat(grid.N, js), 0.0)
        np.testing.assert_allclose(b.g_hat(0, js), 0.0)


def test_mc2_terminal_only_inert_when_f_ignores_terminal(grid):
    p = lq_scalar(grid)  # G0 = 0 so f has no terminal dependence
    x1, y1, x2, y2 = _random_paths(grid, 1, 1)
    b = mc2_differences(p, x1, y1, x2, y2, mode="terminal-only")
    js = np.arange(grid.N + 1)
    np.testing.assert_allclose(b.f_hat(grid.N, js), 0.0, atol=1e-15)


def test_mc2_constant_shift_h_difference(grid):
    p = lq_scalar(grid)
    shift = 0.65
    x1, y1, _, _ = _random_paths(grid, 1, 2)
    x2 = VectorPath(grid, x1.values - shift)
    b = mc2_differences(p, x1, y1, x2, y1, mode="full")
    np.testing.assert_allclose(b.h_hat.values, 2.0 * shift, atol=1e-12)


def test_mc2_full_mode_antisymmetry(grid):
    p = lq_matrix(grid)
    x1, y1, x2, y2 = _random_paths(grid, 2, 3)
    fwd = mc2_differences(p, x1, y1, x2, y2, mode="full")
    rev = mc2_differences(p, x2, y2, x1, y1, mode="full")
    js = np.arange(5)
    np.testing.assert_allclose(fwd.x_hat.values, -rev.x_hat.values, atol=1e-15)
    np.testing.assert_allclose(fwd.y_hat.values, -rev.y_hat.values, atol=1e-15)
    np.testing.assert_allclose(fwd.h_hat.values, -rev.h_hat.values, atol=1e-12)
    np.testing.assert_allclose(fwd.G_hat, -rev.G_hat, atol=1e-15)
    np.testing.assert_allclose(fwd.f_hat(10, js), -rev.f_hat(10, js), atol=1e-12)
    np.testing.assert_allclose(fwd.g_hat(2, js + 4), -rev.g_hat(2, js + 4), atol=1e-12)


def test_mc2_rejects_mismatched_grids(grid):
    p = lq_scalar(grid)
    other = make_grid(1.0, 8)
    x1, y1, x2, y2 = _random_paths(grid, 1, 4)
    bad = VectorPath(other, np.zeros((9, 1)))
    with pytest.raises(ValueError):
        mc2_differences(p, x1, y1, bad, y2)


def test_problem_validation_catches_bad_shapes(grid):
    p = lq_scalar(grid)
    broken = p.with_initial_path(lambda t: np.zeros(np.shape(t) + (2,)))
    with pytest.raises(ValueError, match="x0"):
        broken.validate_on(grid)
