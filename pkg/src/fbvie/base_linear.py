"""Exact solver for the linear base system that anchors the continuation.

The base system couples the paths only through the plain running integral of
Y and the terminal value X(T):

    X(t) = x0(t) + int_0^t [ f0(t,s) - G(X(T)) - int_s^T Y(r) dr ] ds
    Y(t) = X(t) + h0(t) + int_t^T g0(t,s) ds

Substituting the second identity into the first leaves one dense linear
system in the stacked X nodes, which a direct factorization solves to
machine precision.  A nonlinear terminal map G is handled by a damped outer
fixed point on X(T) around the same factorized system.  The differentiated
two-point form of the same system is kept as an independent cross-check for
smooth data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NoConvergence, SolverFailure
from .grid import TimeGrid, VectorPath
from .solution import DiagonalSolution, FieldSolution, TriangularField

__all__ = [
    "LinearDrivers",
    "solve_base_diagonal",
    "solve_base_fbde_crosscheck",
    "reconstruct_base_fields",
]

_OUTER_CAP = 200
_OUTER_DAMPING = 0.5


@dataclass
class LinearDrivers:
    """Driving data of the base system.

    ``G_matrix`` marks a linear terminal map G(x) = G_matrix @ x, letting the
    solver embed it in the direct factorization; leave it None for nonlinear
    G and the solver wraps an outer fixed point instead.
    """

    n: int
    f0: Callable
    g0: Callable
    h0: Callable
    x0: Callable
    G: Callable
    G0: np.ndarray
    G_matrix: np.ndarray | None = None

    @classmethod
    def zero(cls, n: int, x0: Callable, G: Callable, G0: np.ndarray,
             G_matrix: np.ndarray | None = None) -> "LinearDrivers":
        zero_pair = lambda t, s: np.zeros(np.broadcast_shapes(np.shape(t), np.shape(s)) + (n,))
        zero_one = lambda t: np.zeros(np.shape(t) + (n,))
        return cls(n=n, f0=zero_pair, g0=zero_pair, h0=zero_one, x0=x0,
                   G=G, G0=G0, G_matrix=G_matrix)


def _backward_offset(drivers: LinearDrivers, grid: TimeGrid) -> np.ndarray:
    """b_i = h0(t_i) + sum_j w_j(i,N) g0(t_i, t_j); Y = X + b."""
    t = grid.t
    w_up = grid.weights_upper()
    b = np.atleast_2d(np.asarray(drivers.h0(t), dtype=float)).reshape(grid.N + 1, drivers.n).copy()
    for i in range(grid.N):
        g_row = np.atleast_2d(np.asarray(drivers.g0(t[i], t[i:]), dtype=float))
        b[i] += w_up[i, i:] @ g_row
    return b


def _forward_driver_sum(drivers: LinearDrivers, grid: TimeGrid) -> np.ndarray:
    """F0_i = sum_j w_j(0,i) f0(t_i, t_j)."""
    t = grid.t
    w_low = grid.weights_lower()
    out = np.zeros((grid.N + 1, drivers.n))
    for i in range(1, grid.N + 1):
        f_row = np.atleast_2d(np.asarray(drivers.f0(t[i], t[: i + 1]), dtype=float))
        out[i] = w_low[i, : i + 1] @ f_row
    return out


def _upper_integral(grid: TimeGrid, values: np.ndarray) -> np.ndarray:
    return grid.weights_upper() @ values


def _assemble(drivers: LinearDrivers, grid: TimeGrid):
    """System matrix (without the G column) and the G-free right-hand side."""
    n = drivers.n
    w_low, w_up = grid.weights_lower(), grid.weights_upper()
    D = w_low @ w_up
    b = _backward_offset(drivers, grid)
    x_path = np.atleast_2d(np.asarray(drivers.x0(grid.t), dtype=float)).reshape(grid.N + 1, n)
    rhs = x_path + _forward_driver_sum(drivers, grid) - D @ b
    M = np.kron(np.eye(grid.N + 1) + D, np.eye(n))
    return M, rhs, b, x_path


def _residuals(drivers: LinearDrivers, grid: TimeGrid,
               X: np.ndarray, Y: np.ndarray) -> tuple[float, float]:
    """Sup-norm defects of the two defining integral identities."""
    w_low = grid.weights_lower()
    b = _backward_offset(drivers, grid)
    gxn = np.asarray(drivers.G(X[-1]), dtype=float)
    iy = _upper_integral(grid, Y)
    f0s = _forward_driver_sum(drivers, grid)
    integ = -(gxn + iy)
    forward = X - (np.atleast_2d(np.asarray(drivers.x0(grid.t), dtype=float)).reshape(X.shape)
                   + f0s + w_low @ integ)
    backward = Y - X - b
    return float(np.max(np.abs(forward))), float(np.max(np.abs(backward)))


def _finish(drivers: LinearDrivers, grid: TimeGrid, X: np.ndarray,
            b: np.ndarray) -> DiagonalSolution:
    Y = X + b
    rf, rb = _residuals(drivers, grid, X, Y)
    scale = 1.0 + float(np.max(np.abs(X)))
    if rf > 1e-12 * scale or rb > 1e-12 * scale:
        raise SolverFailure(
            f"base solve residuals ({rf:.3e}, {rb:.3e}) exceed 1e-12 * {scale:.3e}",
            condition_estimate=None,
        )
    Z = _upper_integral(grid, Y)
    return DiagonalSolution(grid, VectorPath(grid, X), VectorPath(grid, Y),
                            VectorPath(grid, Z), rf, rb)


def solve_base_diagonal(drivers: LinearDrivers, grid: TimeGrid) -> DiagonalSolution:
    """Solve the base system on the diagonal by one dense factorization.

    Z on the returned solution is the plain upper integral of Y (identity
    kernel), matching the coupling that actually appears in the base system.
    """
    n = drivers.n
    M, rhs, b, _ = _assemble(drivers, grid)
    t_col = grid.t[:, None]

    if drivers.G_matrix is not None:
        gm = np.asarray(drivers.G_matrix, dtype=float)
        M = M.copy()
        M[:, grid.N * n:] += np.kron(t_col, gm)
        try:
            X = np.linalg.solve(M, rhs.reshape(-1)).reshape(grid.N + 1, n)
        except np.linalg.LinAlgError:
            raise SolverFailure("singular base system",
                                condition_estimate=float(np.linalg.cond(M)))
        return _finish(drivers, grid, X, b)

    # nonlinear terminal map: damped fixed point on X(T) around the
    # factorized G-free system
    xT = np.zeros(n)
    X = None
    for _ in range(_OUTER_CAP):
        shift = (t_col * np.asarray(drivers.G(xT), dtype=float)[None, :]).reshape(-1)
        try:
            X = np.linalg.solve(M, rhs.reshape(-1) - shift).reshape(grid.N + 1, n)
        except np.linalg.LinAlgError:
            raise SolverFailure("singular base system",
                                condition_estimate=float(np.linalg.cond(M)))
        step = X[-1] - xT
        xT = xT + _OUTER_DAMPING * step
        if np.max(np.abs(step)) <= 1e-12 * (1.0 + np.max(np.abs(xT))):
            break
    else:
        raise NoConvergence("terminal fixed point for nonlinear G did not converge",
                            iterations=_OUTER_CAP)
    shift = (t_col * np.asarray(drivers.G(xT), dtype=float)[None, :]).reshape(-1)
    X = np.linalg.solve(M, rhs.reshape(-1) - shift).reshape(grid.N + 1, n)
    return _finish(drivers, grid, X, b)


def solve_base_fbde_crosscheck(drivers: LinearDrivers, grid: TimeGrid) -> DiagonalSolution:
    """Independent solve of the differentiated two-point form.

    Uses the identity f0(t,t) + x0'(t) + int_0^t df0/dt dr = d/dt [x0(t) +
    int_0^t f0(t,r) dr], so only the computed path xi(t) = x0(t) + F0(t) needs
    numerical differentiation (central differences, one-sided second order at
    the ends).  The trapezoid-in-time stepping is second order, so agreement
    with the direct solver is itself an O(h^2) statement; residuals on the
    returned solution are measured against the integral identities and stay
    at that scale.
    """
    n, N, h = drivers.n, grid.N, grid.h
    xi = (np.atleast_2d(np.asarray(drivers.x0(grid.t), dtype=float)).reshape(N + 1, n)
          + _forward_driver_sum(drivers, grid))
    phi = np.empty_like(xi)
    phi[1:-1] = (xi[2:] - xi[:-2]) / (2.0 * h)
    phi[0] = (-3.0 * xi[0] + 4.0 * xi[1] - xi[2]) / (2.0 * h)
    phi[-1] = (3.0 * xi[-1] - 4.0 * xi[-2] + xi[-3]) / (2.0 * h)
    b = _backward_offset(drivers, grid)

    m = 2 * (N + 1) * n
    A = np.zeros((m, m))
    rhs = np.zeros(m)

    def xs(i):
        return slice(i * n, (i + 1) * n)

    def ys(i):
        return slice((N + 1 + i) * n, (N + 2 + i) * n)

    eye = np.eye(n)
    row = 0
    for i in range(N):
        sl = slice(row, row + n)
        A[sl, xs(i + 1)] += eye
        A[sl, xs(i)] -= eye
        A[sl, ys(i)] += 0.5 * h * eye
        A[sl, ys(i + 1)] += 0.5 * h * eye
        rhs[sl] = 0.5 * h * (phi[i] + phi[i + 1])
        row += n
    for i in range(N):
        sl = slice(row, row + n)
        A[sl, ys(i + 1)] += eye
        A[sl, ys(i)] -= eye
        A[sl, xs(i)] += 0.5 * h * eye
        A[sl, xs(i + 1)] += 0.5 * h * eye
        rhs[sl] = -0.5 * h * (b[i] + b[i + 1])
        row += n
    sl = slice(row, row + n)
    A[sl, xs(0)] = eye
    rhs[sl] = xi[0]
    row += n
    bc_row = slice(row, row + n)

    def solve_with_terminal(gxn_const: np.ndarray | None, gm: np.ndarray | None):
        A[bc_row, :] = 0.0
        A[bc_row, ys(N)] = eye
        if gm is not None:
            A[bc_row, xs(N)] = -gm
            rhs[bc_row.start:bc_row.stop] = 0.0
        else:
            rhs[bc_row.start:bc_row.stop] = gxn_const
        try:
            sol = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError:
            raise SolverFailure("singular two-point system",
                                condition_estimate=float(np.linalg.cond(A)))
        return sol[: (N + 1) * n].reshape(N + 1, n)

    if drivers.G_matrix is not None:
        X = solve_with_terminal(None, np.asarray(drivers.G_matrix, dtype=float))
    else:
        xT = np.zeros(n)
        for _ in range(_OUTER_CAP):
            X = solve_with_terminal(np.asarray(drivers.G(xT), dtype=float), None)
            step = X[-1] - xT
            xT = xT + _OUTER_DAMPING * step
            if np.max(np.abs(step)) <= 1e-12 * (1.0 + np.max(np.abs(xT))):
                break
        else:
            raise NoConvergence("terminal fixed point for nonlinear G did not converge",
                                iterations=_OUTER_CAP)

    Y = X + b
    rf, rb = _residuals(drivers, grid, X, Y)
    Z = _upper_integral(grid, Y)
    return DiagonalSolution(grid, VectorPath(grid, X), VectorPath(grid, Y),
                            VectorPath(grid, Z), rf, rb)


def reconstruct_base_fields(drivers: LinearDrivers, grid: TimeGrid,
                            diagonal: DiagonalSolution) -> FieldSolution:
    """Grow the two-parameter fields off the diagonal of a base solution.

    The lower field integrates the same driver in its second argument, the
    upper field is the backward boundary value plus the tail integral of g0;
    both reproduce the diagonal they were grown from exactly (same sums).
    """
    n, N = drivers.n, grid.N
    t = grid.t
    w_low, w_up = grid.weights_lower(), grid.weights_upper()
    X, Y = diagonal.X.values, diagonal.Y.values
    gxn = np.asarray(drivers.G(X[-1]), dtype=float)
    iy = _upper_integral(grid, Y)
    x_path = np.atleast_2d(np.asarray(drivers.x0(t), dtype=float)).reshape(N + 1, n)
    h_path = np.atleast_2d(np.asarray(drivers.h0(t), dtype=float)).reshape(N + 1, n)

    fx = np.full((N + 1, N + 1, n), np.nan)
    for i in range(N + 1):
        f_row = np.atleast_2d(np.asarray(drivers.f0(t[i], t[: i + 1]), dtype=float))
        integ = f_row - gxn - iy[: i + 1]
        fx[i, : i + 1] = x_path[i] + w_low[: i + 1, : i + 1] @ integ

    fy = np.full((N + 1, N + 1, n), np.nan)
    for i in range(N + 1):
        g_row = np.atleast_2d(np.asarray(drivers.g0(t[i], t[i:]), dtype=float))
        fy[i, i:] = X[i] + h_path[i] + w_up[i:, i:] @ g_row

    return FieldSolution(
        diagonal=diagonal,
        field_x=TriangularField(grid, "lower", fx),
        field_y=TriangularField(grid, "upper", fy),
    )
