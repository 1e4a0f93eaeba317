import numpy as np
import pytest

from fbvie import (VectorPath, integrate_lower, integrate_upper,
                   kernel_convolve, make_grid, trap_weights)
from fbvie.errors import NumericalError
from fbvie.problem import const_matrix


def test_make_grid_nodes():
    g = make_grid(1.0, 2)
    np.testing.assert_allclose(g.t, [0.0, 0.5, 1.0])
    assert make_grid(2.0, 4).h == 0.5


@pytest.mark.parametrize("T,N", [(0.0, 4), (-1.0, 4), (1.0, 1), (1.0, 0)])
def test_make_grid_rejects_degenerate(T, N):
    with pytest.raises(ValueError):
        make_grid(T, N)


def test_trap_weights_values():
    g = make_grid(1.0, 2)
    np.testing.assert_allclose(trap_weights(g, 0, 2), [0.25, 0.5, 0.25])
    np.testing.assert_allclose(trap_weights(g, 1, 1), [0.0])
    g4 = make_grid(1.0, 4)
    np.testing.assert_allclose(trap_weights(g4, 1, 3), [0.125, 0.25, 0.125])
    with pytest.raises(ValueError):
        trap_weights(g4, 3, 1)
    with pytest.raises(ValueError):
        trap_weights(g4, 0, 5)


@pytest.mark.parametrize("lo,hi", [(0, 7), (2, 5), (3, 3), (0, 1)])
def test_trap_weights_sum_to_interval_length(lo, hi):
    g = make_grid(1.7, 7)
    assert trap_weights(g, lo, hi).sum() == pytest.approx(g.t[hi] - g.t[lo], abs=1e-15)


def test_integrate_lower_constant_and_linear():
    g = make_grid(1.0, 8)
    ones = integrate_lower(g, lambda i, js: np.ones((len(js), 1)))
    np.testing.assert_allclose(ones.values[:, 0], g.t, atol=1e-15)
    assert ones.values[0, 0] == 0.0
    lin = integrate_lower(g, lambda i, js: g.t[js][:, None])
    assert lin.values[-1, 0] == pytest.approx(0.5, abs=1e-12)


def test_integrate_lower_quadratic_frozen_value():
    # trapezoid of s^2 on [0,1] with 4 intervals: hand sum
    # 0.125*(0 + 1) + 0.25*(0.0625 + 0.25 + 0.5625) = 0.34375
    g = make_grid(1.0, 4)
    out = integrate_lower(g, lambda i, js: (g.t[js] ** 2)[:, None])
    assert out.values[-1, 0] == pytest.approx(0.34375, abs=1e-15)


def test_integrate_upper_examples():
    g = make_grid(1.0, 8)
    ones = integrate_upper(g, lambda i, js: np.ones((len(js), 1)))
    np.testing.assert_allclose(ones.values[:, 0], 1.0 - g.t, atol=1e-15)
    assert ones.values[-1, 0] == 0.0
    ramp = integrate_upper(g, lambda i, js: (1.0 - g.t[js])[:, None])
    assert ramp.values[0, 0] == pytest.approx(0.5, abs=1e-12)


def test_lower_plus_upper_of_constant():
    g = make_grid(2.0, 6)
    lo = integrate_lower(g, lambda i, js: np.full((len(js), 1), 3.0))
    up = integrate_upper(g, lambda i, js: np.full((len(js), 1), 3.0))
    np.testing.assert_allclose(lo.values + up.values, 3.0 * g.T, atol=1e-14)


def test_non_finite_integrand_reports_location():
    g = make_grid(1.0, 4)

    def bad(i, js):
        out = np.ones((len(js), 1))
        if i == 3:
            out[js == 2] = np.nan
        return out

    with pytest.raises(NumericalError) as err:
        integrate_lower(g, bad)
    assert err.value.location == (3, 2)


def test_quadrature_second_order_on_smooth_integrand():
    errs = []
    for n_int in (16, 32, 64):
        g = make_grid(1.0, n_int)
        out = integrate_lower(g, lambda i, js: np.exp(g.t[js])[:, None])
        errs.append(abs(out.values[-1, 0] - (np.e - 1.0)))
    for coarse, fine in zip(errs, errs[1:]):
        assert 3.5 <= coarse / fine <= 4.5


def test_kernel_convolve_cases():
    g = make_grid(1.0, 6)
    const = VectorPath(g, np.full((7, 1), 2.0))
    zero = kernel_convolve(g, const_matrix(np.zeros((1, 1))), const)
    np.testing.assert_allclose(zero.values, 0.0)
    ident = kernel_convolve(g, const_matrix(np.eye(1)), const)
    np.testing.assert_allclose(ident.values[:, 0], 2.0 * (1.0 - g.t), atol=1e-14)
    assert ident.values[0, 0] == pytest.approx(2.0, abs=1e-14)


def test_kernel_convolve_identity_matches_integrate_upper():
    g = make_grid(1.5, 10)
    rng = np.random.default_rng(5)
    y = VectorPath(g, rng.standard_normal((11, 2)))
    conv = kernel_convolve(g, const_matrix(np.eye(2)), y)
    direct = integrate_upper(g, lambda i, js: y.values[js])
    np.testing.assert_allclose(conv.values, direct.values, atol=1e-14)


def test_kernel_convolve_rectangular_kernel():
    # kernel collapsing a 2-vector onto 1 component
    g = make_grid(1.0, 4)
    y = VectorPath(g, np.ones((5, 2)))
    k = const_matrix(np.array([[1.0, -1.0]]))
    out = kernel_convolve(g, k, y)
    assert out.dim == 1
    np.testing.assert_allclose(out.values, 0.0, atol=1e-15)


def test_vector_path_validation():
    g = make_grid(1.0, 4)
    with pytest.raises(ValueError):
        VectorPath(g, np.ones((4, 1)))
    with pytest.raises(ValueError):
        VectorPath(g, np.full((5, 1), np.nan))
