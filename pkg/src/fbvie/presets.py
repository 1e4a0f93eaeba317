"""Builtin problem instances used by the CLI, the tests, and the examples.

The linear-quadratic presets are the control-derived family with known
closed forms; the nonlinear presets use the linear representatives of their
declared Lipschitz classes, chosen so the analytic margin

    lambda - L_a^2 / 2 - L_phi^2 / 2 - L_psi * T

is attained (not just bounded) by extremal path quadruples.  The broken
preset moves the psi coupling to the inner time argument, a genuinely
non-local term that violates the margin condition for every positive gamma;
it exists so the falsification checker has something real to find.
"""

from __future__ import annotations

import numpy as np

from .grid import TimeGrid
from .problem import (FbvieProblem, LqSpec, NonlinearSpec, build_lq_problem,
                      build_nonlinear_problem, const_matrix, const_path)

__all__ = [
    "lq_scalar",
    "lq_scalar_terminal",
    "lq_matrix",
    "nonlinear_example",
    "broken_nonlinear",
    "build_preset",
    "PRESET_NAMES",
]

PRESET_NAMES = ("lq-scalar", "lq-matrix", "nonlinear-example")


def lq_scalar(grid: TimeGrid) -> FbvieProblem:
    """Scalar instance: A=0, B=1, Q=1, R=1, G0=0, x0=1.

    Closed forms on [0, 1]: X(t) = cosh(T-t)/cosh(T), optimal cost tanh(T),
    margin 2 from the running-cost gradient.
    """
    spec = LqSpec(
        n=1, m=1,
        A=const_matrix([[0.0]]),
        B=const_matrix([[1.0]]),
        R=lambda t: np.array([[1.0]]),
        Q=lambda t: np.broadcast_to(np.array([[1.0]]), np.shape(t) + (1, 1)),
        x0=const_path([1.0]),
        G0=np.zeros((1, 1)),
        gamma=2.0,
        time_homogeneous=True,
    )
    return build_lq_problem(spec, grid)


def lq_scalar_terminal(grid: TimeGrid) -> FbvieProblem:
    """Scalar instance with terminal weight G0=1.

    On [0, 1] the feedback gain is constant: X(t) = exp(-t), cost 1.
    """
    spec = LqSpec(
        n=1, m=1,
        A=const_matrix([[0.0]]),
        B=const_matrix([[1.0]]),
        R=lambda t: np.array([[1.0]]),
        Q=lambda t: np.broadcast_to(np.array([[1.0]]), np.shape(t) + (1, 1)),
        x0=const_path([1.0]),
        G0=np.array([[1.0]]),
        gamma=2.0,
        time_homogeneous=True,
    )
    return build_lq_problem(spec, grid)


def lq_matrix(grid: TimeGrid) -> FbvieProblem:
    """Two-state, one-control instance with rotation coupling and G0 != 0."""
    a0 = np.array([[0.0, 0.5], [-0.5, 0.0]])
    b0 = np.array([[1.0], [0.5]])
    g0 = np.diag([0.5, 0.25])

    def x0(t):
        t = np.asarray(t, dtype=float)
        return np.stack([1.0 + 0.1 * t, -0.5 * np.ones_like(t)], axis=-1)

    spec = LqSpec(
        n=2, m=1,
        A=const_matrix(a0),
        B=const_matrix(b0),
        R=lambda t: np.array([[1.0]]),
        Q=lambda t: np.broadcast_to(np.eye(2), np.shape(t) + (2, 2)),
        x0=x0,
        G0=g0,
        gamma=2.0,
        time_homogeneous=True,
    )
    return build_lq_problem(spec, grid)


def nonlinear_example(grid: TimeGrid, lambda_: float = 2.0, L_a: float = 0.5,
                      L_phi: float = 0.5, L_psi: float = 0.1) -> FbvieProblem:
    """Scalar monotone instance with every coupling channel active.

    a(s,x) = L_a x, b(t,x) = lambda x, phi(t,v) = -L_phi v and
    psi(t,s,x) = -L_psi x evaluated at the outer time; the signs make the
    Young-inequality bound tight, so the attainable margin equals the
    declared one.
    """
    spec = NonlinearSpec(
        n=1, lambda_=lambda_, L_a=L_a, L_phi=L_phi, L_psi=L_psi,
        A=const_matrix([[0.0]]),
        B=const_matrix([[1.0]]),
        a=(lambda s, x: L_a * np.asarray(x, dtype=float)) if L_a else None,
        b=lambda t, x: lambda_ * np.asarray(x, dtype=float),
        phi=(lambda t, v: -L_phi * np.asarray(v, dtype=float)) if L_phi else None,
        psi=(lambda t, s, x: -L_psi * _spread(s, x)) if L_psi else None,
        psi_at_outer_time=True,
        time_homogeneous=True,
    )
    return build_nonlinear_problem(spec, grid)


def broken_nonlinear(grid: TimeGrid, lambda_: float = 0.1,
                     L_psi: float = 1.0) -> FbvieProblem:
    """Deliberately broken instance: psi(t,s,x) = x at the inner time.

    The backward coupling then pairs xhat(t) against the running integral of
    xhat, which no pointwise margin controls; the checker must find
    violations.  The declared margin lambda - L_psi*T is negative, so the
    instance carries the warning flag from construction.
    """
    spec = NonlinearSpec(
        n=1, lambda_=lambda_, L_psi=L_psi,
        b=lambda t, x: lambda_ * np.asarray(x, dtype=float),
        psi=lambda t, s, x: L_psi * _spread(s, x),
        psi_at_outer_time=False,
        time_homogeneous=True,
    )
    return build_nonlinear_problem(spec, grid)


def _spread(s, x):
    """Broadcast a single state against an inner-time array.

    psi evaluators return one row per inner time; when the state is a single
    vector and s is an array, replicate it, otherwise shapes already agree.
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    if x.ndim == 2 or s.ndim == 0:
        return x
    return np.broadcast_to(x, s.shape + x.shape)


def build_preset(name: str, grid: TimeGrid, overrides: dict | None = None) -> FbvieProblem:
    """CLI-facing factory; ``overrides`` adjusts the nonlinear constants."""
    overrides = dict(overrides or {})
    if name == "lq-scalar":
        return lq_scalar(grid)
    if name == "lq-matrix":
        return lq_matrix(grid)
    if name == "nonlinear-example":
        at_outer = bool(overrides.pop("psi_at_state_time", True))
        kwargs = {}
        for key, target in (("lambda", "lambda_"), ("l_a", "L_a"),
                            ("l_phi", "L_phi"), ("l_psi", "L_psi")):
            if key in overrides:
                kwargs[target] = float(overrides.pop(key))
        if overrides:
            raise ValueError(f"unknown problem overrides: {sorted(overrides)}")
        if at_outer:
            return nonlinear_example(grid, **kwargs)
        kwargs.setdefault("lambda_", 0.1)
        kwargs.setdefault("L_psi", 1.0)
        kwargs.pop("L_a", None)
        kwargs.pop("L_phi", None)
        return broken_nonlinear(grid, lambda_=kwargs["lambda_"],
                                L_psi=kwargs["L_psi"])
    raise ValueError(f"unknown problem preset {name!r}")
