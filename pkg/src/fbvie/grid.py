"""Uniform time grids and trapezoidal quadrature on triangular domains.

Everything downstream integrates either forward in time (over [0, t], the
lower triangle) or backward (over [t, T], the upper triangle).  Both
directions use the composite trapezoid rule on a uniform grid; an integral
over a single node is exactly zero so the boundary conditions X(0) = x(0)
and Y(T) = h(T, .) hold without quadrature leakage.  All sums run in fixed
index order so repeated runs are bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError

__all__ = [
    "TimeGrid",
    "VectorPath",
    "make_grid",
    "trap_weights",
    "integrate_lower",
    "integrate_upper",
    "kernel_convolve",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, T] into N intervals, nodes t_i = i*T/N."""

    T: float
    N: int
    h: float = field(init=False, repr=False)
    t: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not np.isfinite(self.T) or self.T <= 0.0:
            raise ValueError(f"horizon must be positive and finite, got {self.T}")
        if self.N < 2:
            raise ValueError(f"need at least 2 intervals, got {self.N}")
        object.__setattr__(self, "h", self.T / self.N)
        object.__setattr__(self, "t", np.linspace(0.0, self.T, self.N + 1))

    # Weight matrices are cached per grid; they are the workhorse of every
    # solver loop, so build them once.
    def weights_lower(self) -> np.ndarray:
        """W[i, j] = weight of node j in the trapezoid rule over [0, t_i]."""
        cached = self.__dict__.get("_w_low")
        if cached is None:
            n = self.N + 1
            w = np.zeros((n, n))
            for i in range(1, n):
                w[i, : i + 1] = trap_weights(self, 0, i)
            object.__setattr__(self, "_w_low", w)
            cached = w
        return cached

    def weights_upper(self) -> np.ndarray:
        """W[i, j] = weight of node j in the trapezoid rule over [t_i, T]."""
        cached = self.__dict__.get("_w_up")
        if cached is None:
            n = self.N + 1
            w = np.zeros((n, n))
            for i in range(n - 1):
                w[i, i:] = trap_weights(self, i, self.N)
            object.__setattr__(self, "_w_up", w)
            cached = w
        return cached


@dataclass
class VectorPath:
    """A grid-sampled R^n valued function: one row of ``values`` per node."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.shape[0] != self.grid.N + 1:
            raise ValueError(
                f"path has {self.values.shape[0]} rows, grid has {self.grid.N + 1} nodes"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("path contains non-finite entries")

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def make_grid(T: float, N: int) -> TimeGrid:
    """Build a uniform grid; rejects degenerate inputs (T <= 0 or N < 2)."""
    return TimeGrid(float(T), int(N))


def trap_weights(grid: TimeGrid, lo: int, hi: int) -> np.ndarray:
    """Composite trapezoid weights for nodes lo..hi of ``grid``.

    Endpoint weights are h/2, interior weights h; a single-node range gets
    all-zero weights so that empty integrals vanish identically.  The weights
    sum exactly to t_hi - t_lo.
    """
    if not (0 <= lo <= hi <= grid.N):
        raise ValueError(f"invalid node range [{lo}, {hi}] for N={grid.N}")
    m = hi - lo + 1
    if m == 1:
        return np.zeros(1)
    w = np.full(m, grid.h)
    w[0] = w[-1] = 0.5 * grid.h
    return w


def _eval_rows(grid, integrand, weight_matrix, label):
    """Weighted row sums of integrand(i, js) against a weight matrix."""
    n_nodes = grid.N + 1
    out = None
    for i in range(n_nodes):
        row_w = weight_matrix[i]
        js = np.nonzero(row_w)[0]
        if js.size == 0:
            continue
        vals = np.asarray(integrand(i, js), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if not np.all(np.isfinite(vals)):
            bad = js[np.nonzero(~np.all(np.isfinite(vals), axis=1))[0][0]]
            raise NumericalError(
                f"non-finite {label} integrand at nodes (i={i}, j={bad})",
                location=(i, int(bad)),
            )
        if out is None:
            out = np.zeros((n_nodes, vals.shape[1]))
        out[i] = row_w[js] @ vals
    if out is None:
        out = np.zeros((n_nodes, 1))
    return VectorPath(grid, out)


def integrate_lower(grid: TimeGrid, integrand) -> VectorPath:
    """Trapezoid discretization of t -> integral over [0, t].

    ``integrand(i, js)`` receives the row node i and an index array js <= i
    and returns the stacked integrand values, shape (len(js), n) or (len(js),).
    Row 0 is exactly zero.
    """
    return _eval_rows(grid, integrand, grid.weights_lower(), "lower")


def integrate_upper(grid: TimeGrid, integrand) -> VectorPath:
    """Trapezoid discretization of t -> integral over [t, T]; row N is zero."""
    return _eval_rows(grid, integrand, grid.weights_upper(), "upper")


def kernel_convolve(grid: TimeGrid, K, Y: VectorPath) -> VectorPath:
    """Z_i = sum_{j >= i} w_j(i, N) K(t_i, t_j) Y_j.

    ``K(s, r)`` must broadcast over its second argument: with r an array of
    shape (k,), it returns (k, p, n) where n = Y.dim and p is the kernel
    output dimension (p = n for square kernels).
    """
    if Y.grid.N != grid.N or Y.grid.T != grid.T:
        raise ValueError("path grid does not match quadrature grid")
    w_up = grid.weights_upper()
    t = grid.t
    yv = Y.values
    n = Y.dim
    probe = np.asarray(K(t[0], t[-1:]), dtype=float)
    if probe.ndim != 3 or probe.shape[2] != n:
        raise ValueError(
            f"kernel output shape {probe.shape} incompatible with path dimension {n}"
        )
    p = probe.shape[1]
    out = np.zeros((grid.N + 1, p))
    for i in range(grid.N):
        kv = np.asarray(K(t[i], t[i:]), dtype=float)
        out[i] = np.einsum("j,jab,jb->a", w_up[i, i:], kv, yv[i:])
    return VectorPath(grid, out)


def kernel_weight_tensor(grid: TimeGrid, K, n: int) -> np.ndarray:
    """Precompute KW[i, j] = w_j(i, N) * K(t_i, t_j), shape (N+1, N+1, p, n).

    Lets inner loops evaluate the convolution as a single einsum; used where
    the same kernel is applied every iteration.
    """
    w_up = grid.weights_upper()
    t = grid.t
    probe = np.asarray(K(t[0], t[-1:]), dtype=float)
    p = probe.shape[1]
    kw = np.zeros((grid.N + 1, grid.N + 1, p, n))
    for i in range(grid.N):
        kv = np.asarray(K(t[i], t[i:]), dtype=float)
        kw[i, i:] = w_up[i, i:, None, None] * kv
    return kw
