"""Problem definitions: the coupled forward-backward coefficient bundle.

A problem instance couples a forward path X and a backward path Y through

    X(t) = x0(t) + integral over [0, t] of f(t, s, X(s), Y(s), Z(s), X(T)) ds
    Y(t) = h(t, X(t), X(T)) + integral over [t, T] of g(t, s, X(s), Y(s)) ds
    Z(s) = integral over [s, T] of K(s, r) Y(r) dr

together with a terminal map G (and its quadratic proxy matrix G0) entering
the monotonicity data.

Evaluator conventions
---------------------
All coefficient evaluators broadcast over numpy arrays along a leading axis:

* ``f(t, s, x, y, z, xT)``: t scalar, s scalar or (k,); x, y shaped (n,) or
  (k, n); z shaped (p,) or (k, p) where p is the kernel output dimension;
  xT always (n,).  Returns (n,) or (k, n) to match.
* ``g(t, s, x, y)``: same convention.
* ``h(t, x, xT, z)``: t scalar or (k,); the extra z slot carries the kernel
  convolution evaluated at t and is ignored unless ``h_uses_z`` is set.
* ``K(s, r)``: s scalar, r scalar or (k,), returning (p, n) or (k, p, n).
* ``x0(t)``: scalar -> (n,), array (k,) -> (k, n).
* ``G(xT)``: (n,) -> (n,).

Matrix-valued coefficient evaluators such as A(t, s) must broadcast over
either time argument and return (..., n, n).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .grid import TimeGrid, VectorPath, kernel_convolve

__all__ = [
    "FbvieProblem",
    "LqSpec",
    "NonlinearSpec",
    "Mc2Bundle",
    "FbdeReduction",
    "build_lq_problem",
    "build_nonlinear_problem",
    "reduce_to_fbde",
    "mc2_differences",
    "const_matrix",
    "const_path",
]


def _mt(m):
    """Transpose the trailing matrix axes."""
    return np.swapaxes(np.asarray(m, dtype=float), -1, -2)


def _mv(m, v):
    """Batched matrix-vector product with leading-axis broadcasting."""
    return (np.asarray(m, dtype=float) @ np.asarray(v, dtype=float)[..., None])[..., 0]


def const_matrix(m) -> Callable:
    """Evaluator (t, s) -> M broadcasting a constant matrix over both times."""
    m = np.asarray(m, dtype=float)

    def ev(t, s):
        shape = np.broadcast_shapes(np.shape(t), np.shape(s))
        return np.broadcast_to(m, shape + m.shape)

    return ev


def const_path(v) -> Callable:
    """Evaluator t -> v broadcasting a constant vector over time."""
    v = np.atleast_1d(np.asarray(v, dtype=float))

    def ev(t):
        return np.broadcast_to(v, np.shape(t) + v.shape)

    return ev


# ---------------------------------------------------------------------------
# The coefficient bundle
# ---------------------------------------------------------------------------


@dataclass
class FbvieProblem:
    """Full coefficient bundle for one coupled forward-backward instance.

    ``gamma`` is the declared monotonicity margin, ``K_G`` the declared
    Lipschitz-versus-G0 constant of the terminal map, and ``L`` /
    ``holder_alpha`` regularity metadata.  These are declarations, not
    certificates: the library can falsify them by sampling but never prove
    them.
    """

    n: int
    f: Callable
    g: Callable
    h: Callable
    K: Callable
    x0: Callable
    G: Callable
    G0: np.ndarray
    gamma: float
    K_G: float
    L: float = 1.0
    holder_alpha: float = 1.0
    kernel_dim: int | None = None
    h_uses_z: bool = False
    G_matrix: np.ndarray | None = None
    # Declares that f and g ignore their first time argument; the sweep
    # kernel then reuses point evaluations across rows (probe-verified, with
    # a rowwise fallback, and always re-checked by the final residuals).
    time_homogeneous: bool = False
    lq: Optional["LqSpec"] = None
    nonlinear: Optional["NonlinearSpec"] = None
    flags: tuple[str, ...] = ()
    name: str = "custom"

    def __post_init__(self):
        self.G0 = np.asarray(self.G0, dtype=float)
        if self.G0.shape != (self.n, self.n):
            raise ValueError(f"G0 must be {self.n}x{self.n}, got {self.G0.shape}")
        if not np.allclose(self.G0, self.G0.T, atol=1e-12 * (1.0 + np.abs(self.G0).max())):
            raise ValueError("G0 must be symmetric")
        eigs = np.linalg.eigvalsh(self.G0)
        if eigs.min() < -1e-12 * max(1.0, np.abs(eigs).max()):
            raise ValueError(f"G0 must be positive semi-definite, eigenvalues {eigs}")
        if not (np.isfinite(self.K_G) and self.K_G > 0):
            raise ValueError(f"K_G must be positive, got {self.K_G}")
        if not np.isfinite(self.gamma):
            raise ValueError("gamma must be finite")
        if self.kernel_dim is None:
            self.kernel_dim = self.n
        if self.gamma <= 0 and "nonpositive-margin" not in self.flags:
            self.flags = self.flags + ("nonpositive-margin",)

    def with_initial_path(self, x0: Callable) -> "FbvieProblem":
        return replace(self, x0=x0)

    def validate_on(self, grid: TimeGrid) -> None:
        """Spot-check evaluator shapes and finiteness on a few grid points."""
        t = grid.t
        n, p = self.n, self.kernel_dim
        xs = np.ones(n)
        zs = np.ones(p)
        probes = [
            ("x0", lambda: self.x0(t[-3:])),
            ("f", lambda: self.f(t[-1], t[:3], np.ones((3, n)), np.ones((3, n)),
                                 np.ones((3, p)), xs)),
            ("g", lambda: self.g(t[0], t[-3:], np.ones((3, n)), np.ones((3, n)))),
            ("h", lambda: self.h(t[-1], xs, xs, zs)),
            ("K", lambda: self.K(t[0], t[-3:])),
            ("G", lambda: self.G(xs)),
        ]
        expected = {
            "x0": (3, n), "f": (3, n), "g": (3, n), "h": (n,),
            "K": (3, p, n), "G": (n,),
        }
        for label, call in probes:
            out = np.asarray(call(), dtype=float)
            if out.shape != expected[label]:
                raise ValueError(
                    f"evaluator {label} returned shape {out.shape}, expected {expected[label]}"
                )
            if not np.all(np.isfinite(out)):
                raise ValueError(f"evaluator {label} returned non-finite values on probe")


# ---------------------------------------------------------------------------
# Linear-convex control specification
# ---------------------------------------------------------------------------


@dataclass
class LqSpec:
    """Data of a linear-convex Volterra control problem.

    ``gamma`` declares the monotonicity modulus of the running-cost gradient
    (for the quadratic form it equals twice the smallest eigenvalue bound of
    Q).  R is validated positive definite on grid nodes; its smallest
    eigenvalue is recorded separately since it plays a different role.
    """

    n: int
    m: int
    A: Callable
    B: Callable
    R: Callable
    x0: Callable
    G0: np.ndarray
    gamma: float
    quadratic: bool = True
    Q: Callable | None = None
    Qx: Callable | None = None
    Mx: Callable | None = None
    K_G: float | None = None
    # caller declares constant-in-first-argument A and B (enables the
    # sweep fast path; verified by probes and the final residual check)
    time_homogeneous: bool = False

    def __post_init__(self):
        self.G0 = np.asarray(self.G0, dtype=float)
        if self.quadratic:
            if self.Q is None:
                raise ValueError("quadratic spec requires the Q matrix evaluator")
            qmat = self.Q
            g0 = self.G0
            if self.Qx is None:
                self.Qx = lambda t, x: 2.0 * _mv(qmat(t), x)
            if self.Mx is None:
                self.Mx = lambda x: 2.0 * (g0 @ np.asarray(x, dtype=float))
        else:
            if self.Qx is None or self.Mx is None:
                raise ValueError("non-quadratic spec requires Qx and Mx gradients")


def _r_inverse_cache(spec: LqSpec, grid: TimeGrid):
    """Per-node cache of R(t)^-1; f is evaluated O(N^2) times per sweep.

    A control penalty that is constant along the grid collapses the lookup
    to a captured matrix.
    """
    n_nodes = grid.N + 1
    rinv = np.empty((n_nodes, spec.m, spec.m))
    for i, ti in enumerate(grid.t):
        r = np.atleast_2d(np.asarray(spec.R(ti), dtype=float))
        eigs = np.linalg.eigvalsh(0.5 * (r + r.T))
        if eigs.min() <= 0:
            raise ValueError(
                f"R(t) is singular or indefinite at node {i} (t={ti:.6g}), eigenvalues {eigs}"
            )
        rinv[i] = np.linalg.inv(r)
    if np.all(np.abs(rinv - rinv[0]) <= 1e-14 * (1.0 + np.abs(rinv[0]).max())):
        r0 = rinv[0].copy()
        return (lambda s: r0), rinv

    inv_h = 1.0 / grid.h
    t_hi = grid.T

    def lookup(s):
        idx = np.rint(np.asarray(s) * inv_h).astype(int)
        if np.any(np.abs(np.asarray(s) - idx * grid.h) > 1e-9 * max(1.0, t_hi)):
            # off-grid time: fall back to a direct inverse
            s_arr = np.atleast_1d(np.asarray(s, dtype=float))
            out = np.stack([np.linalg.inv(np.atleast_2d(spec.R(si))) for si in s_arr])
            return out if np.ndim(s) else out[0]
        return rinv[idx]

    return lookup, rinv


def build_lq_problem(spec: LqSpec, grid: TimeGrid) -> FbvieProblem:
    """Assemble the coupled optimality system of a linear-convex instance.

    The forward drift combines the state matrix with the feedback that the
    stationarity condition induces, the kernel transposes the control matrix,
    and the backward data carries the cost gradients:

        f(t,s,x,y,z,xT) = A(t,s) x - (1/2) B(t,s) R(s)^-1 z
                          - (1/2) B(t,s) R(s)^-1 B(T,s)^T Mx(xT)
        K(s,r) = B(r,s)^T
        g(t,s,x,y) = A(s,t)^T y
        h(t,x,xT)  = Qx(t,x) + A(T,t)^T Mx(xT)
        G = Mx
    """
    A, B, Mx, Qx = spec.A, spec.B, spec.Mx, spec.Qx
    T = grid.T
    rinv, _ = _r_inverse_cache(spec, grid)

    if spec.time_homogeneous:
        # constant A and B: capture them and skip the broadcast machinery
        A0 = np.atleast_2d(np.asarray(A(T, 0.0), dtype=float))
        B0 = np.atleast_2d(np.asarray(B(T, 0.0), dtype=float))
        A0T, B0T = A0.T.copy(), B0.T.copy()

        def f(t, s, x, y, z, xT):
            w = _mv(rinv(s), np.asarray(z, dtype=float) + B0T @ Mx(xT))
            return _mv(A0, x) - 0.5 * _mv(B0, w)

        def g(t, s, x, y):
            return _mv(A0T, y)

        def h(t, x, xT, z=None):
            adj = A0T @ Mx(xT)
            return Qx(t, x) + np.broadcast_to(adj, np.shape(np.asarray(x)))

        def K(s, r):
            shape = np.broadcast_shapes(np.shape(s), np.shape(r))
            return np.broadcast_to(B0T, shape + B0T.shape)

    else:

        def f(t, s, x, y, z, xT):
            w = _mv(rinv(s), np.asarray(z, dtype=float) + _mv(_mt(B(T, s)), Mx(xT)))
            return _mv(A(t, s), x) - 0.5 * _mv(B(t, s), w)

        def g(t, s, x, y):
            return _mv(_mt(A(s, t)), y)

        def h(t, x, xT, z=None):
            return Qx(t, x) + _mv(_mt(A(T, t)), Mx(xT))

        def K(s, r):
            return _mt(B(r, s))

    g0 = np.asarray(spec.G0, dtype=float)
    if spec.K_G is not None:
        k_g = spec.K_G
    else:
        lam_max = float(np.linalg.eigvalsh(g0).max()) if g0.size else 0.0
        k_g = 2.0 * np.sqrt(lam_max) if lam_max > 0 else 1.0
    g_matrix = 2.0 * g0 if spec.quadratic else None
    return FbvieProblem(
        n=spec.n, f=f, g=g, h=h, K=K, x0=spec.x0, G=Mx, G0=g0,
        gamma=spec.gamma, K_G=k_g, kernel_dim=spec.m,
        G_matrix=g_matrix, time_homogeneous=spec.time_homogeneous,
        lq=spec, name="lq",
    )


# ---------------------------------------------------------------------------
# The nonlinear example family
# ---------------------------------------------------------------------------


@dataclass
class NonlinearSpec:
    """Coefficients of the nonlinear coupled family.

        X(t) = x0(t) + int_0^t [A(t,s) X(s) + B(t,s) a(s, X(s)) - B(t,s) Z(s)] ds
        Y(t) = b(t, X(t)) + phi(t, Z(t))
               + int_t^T [A(s,t)^T Y(s) + psi-term] ds

    with Z(s) = int_s^T B(r,s)^T Y(r) dr.  ``psi_at_outer_time`` controls the
    state argument of the psi term: True evaluates psi(t, s, X(t)) (the form
    whose margin is lambda - L_a^2/2 - L_phi^2/2 - L_psi*T), False evaluates
    psi(t, s, X(s)), a genuinely non-local coupling that escapes any pointwise
    margin.  The declared Lipschitz/monotonicity constants are metadata.
    """

    n: int
    lambda_: float
    L_a: float = 0.0
    L_b: float | None = None
    L_phi: float = 0.0
    L_psi: float = 0.0
    A: Callable | None = None
    B: Callable | None = None
    a: Callable | None = None
    b: Callable | None = None
    phi: Callable | None = None
    psi: Callable | None = None
    psi_at_outer_time: bool = True
    time_homogeneous: bool = False

    def __post_init__(self):
        if self.L_b is None:
            self.L_b = abs(self.lambda_)
        if self.A is None:
            self.A = const_matrix(np.zeros((self.n, self.n)))
        if self.B is None:
            self.B = const_matrix(np.zeros((self.n, self.n)))


def build_nonlinear_problem(spec: NonlinearSpec, grid: TimeGrid) -> FbvieProblem:
    """Assemble the nonlinear family as a coefficient bundle.

    The psi term integrates over the backward variable; with
    ``psi_at_outer_time`` it is a function of (t, X(t)) only and is folded
    into the backward boundary data via grid quadrature.  The computed margin
    is lambda - L_a^2/2 - L_phi^2/2 - L_psi*T; a non-positive value flags the
    instance instead of rejecting it, so the monotonicity checker can report.
    """
    n = spec.n
    A, B = spec.A, spec.B
    a_fn, b_fn, phi, psi = spec.a, spec.b, spec.phi, spec.psi
    w_up = grid.weights_upper()
    t_nodes = grid.t
    inv_h = 1.0 / grid.h

    if spec.time_homogeneous:
        A0 = np.atleast_2d(np.asarray(A(grid.T, 0.0), dtype=float))
        B0 = np.atleast_2d(np.asarray(B(grid.T, 0.0), dtype=float))
        B0T = B0.T.copy()

        def f(t, s, x, y, z, xT):
            out = _mv(A0, x) - _mv(B0, z)
            if a_fn is not None:
                out = out + _mv(B0, a_fn(s, x))
            return out

        def K(s, r):
            shape = np.broadcast_shapes(np.shape(s), np.shape(r))
            return np.broadcast_to(B0T, shape + B0T.shape)

    else:

        def f(t, s, x, y, z, xT):
            out = _mv(A(t, s), x) - _mv(B(t, s), z)
            if a_fn is not None:
                out = out + _mv(B(t, s), a_fn(s, x))
            return out

        def K(s, r):
            return _mt(B(r, s))

    def _psi_quad(t, x):
        # integral over [t, T] of psi(t, s, x) ds, t on the grid
        idx = int(round(float(t) * inv_h))
        if abs(t_nodes[idx] - t) > 1e-9 * max(1.0, grid.T):
            raise ValueError(f"psi quadrature requires grid times, got t={t}")
        vals = np.asarray(psi(t, t_nodes[idx:], x), dtype=float)
        return w_up[idx, idx:] @ np.atleast_2d(vals)

    if spec.time_homogeneous:
        A0T = np.atleast_2d(np.asarray(A(grid.T, 0.0), dtype=float)).T.copy()
        adj = lambda t, s, y: _mv(A0T, y)
    else:
        adj = lambda t, s, y: _mv(_mt(A(s, t)), y)

    if spec.psi_at_outer_time or psi is None:

        def g(t, s, x, y):
            return adj(t, s, y)

        def h(t, x, xT, z=None):
            out = np.zeros(np.shape(x)) if b_fn is None else np.asarray(b_fn(t, x), dtype=float)
            if phi is not None:
                out = out + phi(t, z)
            if psi is not None:
                ts = np.atleast_1d(np.asarray(t, dtype=float))
                if ts.size == 1:
                    out = out + _psi_quad(ts[0], x)
                else:
                    x_arr = np.asarray(x, dtype=float)
                    out = out + np.stack(
                        [_psi_quad(ti, x_arr[i]) for i, ti in enumerate(ts)]
                    ).reshape(np.shape(out))
            return out

    else:

        def g(t, s, x, y):
            return adj(t, s, y) + psi(t, s, x)

        def h(t, x, xT, z=None):
            out = np.zeros(np.shape(x)) if b_fn is None else np.asarray(b_fn(t, x), dtype=float)
            if phi is not None:
                out = out + phi(t, z)
            return out

    gamma = (spec.lambda_ - 0.5 * spec.L_a ** 2 - 0.5 * spec.L_phi ** 2
             - spec.L_psi * grid.T)
    flags = () if gamma > 0 else ("nonpositive-margin",)
    zeros = np.zeros((n, n))
    lip = max(abs(spec.lambda_), spec.L_a, spec.L_b, spec.L_phi, spec.L_psi, 1.0)
    return FbvieProblem(
        n=n, f=f, g=g, h=h, K=K, x0=const_path(np.ones(n)),
        G=lambda xT: np.zeros(n), G0=zeros, gamma=gamma, K_G=1.0, L=lip,
        h_uses_z=phi is not None, G_matrix=zeros,
        time_homogeneous=spec.time_homogeneous,
        nonlinear=spec, flags=flags, name="nonlinear",
    )


# ---------------------------------------------------------------------------
# Reduction to the time-homogeneous two-point system
# ---------------------------------------------------------------------------


@dataclass
class FbdeReduction:
    """Outcome of probing the coefficients for first-argument independence."""

    reducible: bool
    max_deviation: float
    tolerance: float
    witness: tuple | None = None
    f_const: Callable | None = None
    g_const: Callable | None = None
    h_const: Callable | None = None
    lq_fbde: tuple | None = None  # (a(s,p,q), b(s,p,q), psi(p)) for LQ data


def _probe_states(problem: FbvieProblem):
    rng = np.random.default_rng(2024)
    n, p = problem.n, problem.kernel_dim
    alt = np.ones(n)
    alt[1::2] = -1.0
    draws = [np.zeros(n), np.ones(n), alt, rng.standard_normal(n)]
    zs = [np.zeros(p), np.ones(p), rng.standard_normal(p)]
    return [(x, y, z, xT)
            for x, y in zip(draws, draws[::-1])
            for z in zs[:2]
            for xT in (draws[1], draws[3])] + [(draws[3], draws[2], zs[2], draws[0])]


def reduce_to_fbde(problem: FbvieProblem, grid: TimeGrid, tol: float) -> FbdeReduction:
    """Test whether f, g, h depend on their first (outer) time argument.

    Samples each coefficient at paired outer times with every other argument
    fixed; if the largest deviation stays within ``tol`` the instance
    degenerates to a two-point ODE system and the collapsed coefficients are
    returned, otherwise the witnessing sample is reported.
    """
    t = grid.t
    idx = np.unique(np.linspace(0, grid.N, 7).astype(int))
    states = _probe_states(problem)
    worst = 0.0
    witness = None

    def track(dev, info):
        nonlocal worst, witness
        if dev > worst:
            worst = dev
            witness = info

    for s_i in idx:
        s = t[s_i]
        outer_f = t[idx[idx >= s_i]]
        outer_g = t[idx[idx <= s_i]]
        for (x, y, z, xT) in states:
            if outer_f.size > 1:
                ref = problem.f(t[-1], s, x, y, z, xT)
                for a in outer_f[:-1]:
                    dev = float(np.max(np.abs(problem.f(a, s, x, y, z, xT) - ref)))
                    track(dev, ("f", float(a), float(t[-1]), float(s)))
            if outer_g.size > 1:
                ref = problem.g(t[0], s, x, y)
                for a in outer_g[1:]:
                    dev = float(np.max(np.abs(problem.g(a, s, x, y) - ref)))
                    track(dev, ("g", float(a), float(t[0]), float(s)))
    for (x, y, z, xT) in states:
        ref = problem.h(t[0], x, xT, z[: problem.kernel_dim])
        for a in t[idx[1:]]:
            dev = float(np.max(np.abs(problem.h(a, x, xT, z[: problem.kernel_dim]) - ref)))
            track(dev, ("h", float(a), float(t[0]), None))

    if worst > tol:
        return FbdeReduction(False, worst, tol, witness=witness)

    f_ref, g_ref, h_ref = problem.f, problem.g, problem.h
    t_hi, t_lo = t[-1], t[0]
    red = FbdeReduction(
        True, worst, tol,
        f_const=lambda s, x, y, z, xT: f_ref(t_hi, s, x, y, z, xT),
        g_const=lambda s, x, y: g_ref(t_lo, s, x, y),
        h_const=lambda x, xT, z=None: h_ref(t_lo, x, xT, z),
    )
    if problem.lq is not None and problem.lq.quadratic:
        spec = problem.lq
        A0 = np.asarray(spec.A(t_hi, t_lo), dtype=float)
        B0 = np.asarray(spec.B(t_hi, t_lo), dtype=float)
        rinv, _ = _r_inverse_cache(spec, grid)
        Mx, Qx = spec.Mx, spec.Qx

        def a_fbde(s, p, q):
            return _mv(A0, p) - 0.5 * _mv(B0, _mv(rinv(s), _mv(B0.T, q)))

        def b_fbde(s, p, q):
            return Qx(s, p) + _mv(A0.T, q)

        red.lq_fbde = (a_fbde, b_fbde, lambda p: Mx(p))
    return red


# ---------------------------------------------------------------------------
# Monotonicity-condition path differences
# ---------------------------------------------------------------------------


@dataclass
class Mc2Bundle:
    """Path differences feeding the monotonicity functional.

    ``f_hat(i, js)`` and ``g_hat(i, js)`` evaluate the coefficient
    differences at outer node i and inner nodes js.  In mode 'full' the f
    difference swaps every argument between the two path tuples; in mode
    'terminal-only' only the terminal argument varies, all path arguments
    taken from the first tuple.
    """

    grid: TimeGrid
    mode: str
    x_hat: VectorPath
    y_hat: VectorPath
    h_hat: VectorPath
    G_hat: np.ndarray
    f_hat: Callable
    g_hat: Callable
    z1: VectorPath
    z2: VectorPath


def mc2_differences(problem: FbvieProblem, x1: VectorPath, y1: VectorPath,
                    x2: VectorPath, y2: VectorPath,
                    mode: str = "full", _z=None) -> Mc2Bundle:
    if mode not in ("full", "terminal-only"):
        raise ValueError(f"mode must be 'full' or 'terminal-only', got {mode!r}")
    grid = x1.grid
    for path in (y1, x2, y2):
        if path.grid.N != grid.N or path.grid.T != grid.T:
            raise ValueError("all four paths must share one grid")
        if path.dim != problem.n:
            raise ValueError("path dimension does not match the problem")
    t = grid.t
    if _z is not None:
        z1, z2 = _z
    else:
        z1 = kernel_convolve(grid, problem.K, y1)
        z2 = kernel_convolve(grid, problem.K, y2)
    x1v, y1v, z1v = x1.values, y1.values, z1.values
    x2v, y2v, z2v = x2.values, y2.values, z2.values
    x1T, x2T = x1v[-1], x2v[-1]

    h1 = problem.h(t, x1v, x1T, z1v)
    h2 = problem.h(t, x2v, x2T, z2v)
    h_hat = VectorPath(grid, np.asarray(h1, dtype=float) - np.asarray(h2, dtype=float))

    def g_hat(i, js):
        return (np.asarray(problem.g(t[i], t[js], x1v[js], y1v[js]), dtype=float)
                - np.asarray(problem.g(t[i], t[js], x2v[js], y2v[js]), dtype=float))

    if mode == "full":

        def f_hat(i, js):
            return (np.asarray(problem.f(t[i], t[js], x1v[js], y1v[js], z1v[js], x1T),
                               dtype=float)
                    - np.asarray(problem.f(t[i], t[js], x2v[js], y2v[js], z2v[js], x2T),
                                 dtype=float))

    else:

        def f_hat(i, js):
            return (np.asarray(problem.f(t[i], t[js], x1v[js], y1v[js], z1v[js], x1T),
                               dtype=float)
                    - np.asarray(problem.f(t[i], t[js], x1v[js], y1v[js], z1v[js], x2T),
                                 dtype=float))

    return Mc2Bundle(
        grid=grid, mode=mode,
        x_hat=VectorPath(grid, x1v - x2v),
        y_hat=VectorPath(grid, y1v - y2v),
        h_hat=h_hat,
        G_hat=np.asarray(problem.G(x1T), dtype=float) - np.asarray(problem.G(x2T), dtype=float),
        f_hat=f_hat, g_hat=g_hat, z1=z1, z2=z2,
    )
