"""Theory-derived invariant checks on computed solutions.

Every check states its tolerance explicitly and reports the measured
quantity next to it.  The bridge functional

    B(t) = int_t^T <Xfield(s, t), Y(s)> ds + <G(X(T)), Xfield(T, t)>

is the object the uniqueness argument differentiates; its chain rule along
solution differences is checked as an equality first (isolating
discretization error) and only then as the margin inequality.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .continuation import (ContinuationParams, assemble_para, cold_start_guess,
                           continuation_solve, diagonal_residuals,
                           extend_to_fields)
from .errors import ContinuationFailure, NoConvergence, NumericalError
from .grid import TimeGrid, VectorPath
from .monotonicity import _mc1_vector
from .oracle_lq import DiscreteLq, solve_direct
from .problem import FbvieProblem, reduce_to_fbde
from .solution import DiagonalSolution, FieldSolution

__all__ = [
    "CheckResult",
    "VerificationReport",
    "fbvie_residual",
    "bridge_value",
    "bridge_monotonicity_check",
    "hu_peng_transform_check",
    "lq_value_identity",
    "uniqueness_probe",
]


@dataclass
class CheckResult:
    name: str
    status: str  # "pass" | "fail" | "inconclusive"
    measured: float
    tolerance: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "status": self.status,
            "measured": float(self.measured),
            "tolerance": float(self.tolerance),
            "details": self.details,
        }


@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)

    def add(self, check: CheckResult) -> CheckResult:
        self.checks.append(check)
        return check

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.as_dict() for c in self.checks]}


# ---------------------------------------------------------------------------
# Residuals and the bridge
# ---------------------------------------------------------------------------


def fbvie_residual(problem: FbvieProblem, diagonal: DiagonalSolution):
    """Sup-norm defects of both defining identities, evaluated from scratch."""
    return diagonal_residuals(assemble_para(problem, 1.0), diagonal)


def bridge_value(problem: FbvieProblem, fields: FieldSolution, t_index: int) -> float:
    """B(t_i) by trapezoid over [t_i, T]; at t = T only the terminal pairing."""
    grid = fields.diagonal.grid
    if not (0 <= t_index <= grid.N):
        raise ValueError(f"t_index {t_index} outside grid")
    w_up = grid.weights_upper()
    fx = fields.field_x.values
    Y = fields.diagonal.Y.values
    xT = fields.diagonal.X.values[-1]
    i = t_index
    integral = float(np.einsum("j,ja,ja->", w_up[i, i:], fx[i:, i], Y[i:]))
    terminal = float(np.asarray(problem.G(xT), dtype=float) @ fx[-1, i])
    return integral + terminal


def _bridge_vector(problem, fields_a: FieldSolution, fields_b: FieldSolution):
    """Difference bridge over all nodes for two solutions of one problem."""
    grid = fields_a.diagonal.grid
    w_up = grid.weights_upper()
    dx = fields_a.field_x.values - fields_b.field_x.values
    dy = fields_a.diagonal.Y.values - fields_b.diagonal.Y.values
    g_hat = (np.asarray(problem.G(fields_a.diagonal.X.values[-1]), dtype=float)
             - np.asarray(problem.G(fields_b.diagonal.X.values[-1]), dtype=float))
    m = grid.N + 1
    out = np.empty(m)
    for i in range(m):
        out[i] = np.einsum("j,ja,ja->", w_up[i, i:], dy[i:], dx[i:, i]) \
            + g_hat @ dx[-1, i]
    return out


def bridge_monotonicity_check(problem: FbvieProblem, grid: TimeGrid,
                              x0_a, x0_b,
                              params: ContinuationParams | None = None,
                              tol_factor: float = 20.0) -> VerificationReport:
    """Chain rule of the difference bridge: equality first, then the margin.

    Solves the problem under both initial paths, grows the fields, and forms
    B(t) from the differences.  Check (a) compares the centered difference of
    B against the displayed right-hand side (the same functional the
    monotonicity checker evaluates, with the two computed solutions as the
    path pair) within tol_factor * h; only if that passes is (b) evaluated:
    dB/dt <= -gamma |Xhat(t,t)|^2 + tol_factor * h at interior nodes.
    """
    report = VerificationReport()
    params = params or ContinuationParams()
    sol_a, _ = continuation_solve(problem.with_initial_path(x0_a), grid, params)
    sol_b, _ = continuation_solve(problem.with_initial_path(x0_b), grid, params)
    fields_a = extend_to_fields(problem.with_initial_path(x0_a), sol_a)
    fields_b = extend_to_fields(problem.with_initial_path(x0_b), sol_b)

    bridge = _bridge_vector(problem, fields_a, fields_b)
    h = grid.h
    db = (bridge[2:] - bridge[:-2]) / (2.0 * h)
    rhs, xhat_sq = _mc1_vector(problem, sol_a.X, sol_a.Y, sol_b.X, sol_b.Y,
                               mode="full")
    tol = tol_factor * h
    eq_dev = float(np.max(np.abs(db - rhs[1:-1]))) if db.size else 0.0
    eq = report.add(CheckResult(
        name="bridge-chain-rule-equality",
        status="pass" if eq_dev <= tol else "fail",
        measured=eq_dev, tolerance=tol,
        details={"nodes": int(db.size)},
    ))
    if not eq.passed:
        report.add(CheckResult(
            name="bridge-margin-inequality", status="inconclusive",
            measured=float("nan"), tolerance=tol,
            details={"reason": "equality check failed; inequality not separable "
                               "from discretization error"},
        ))
        return report
    margin = db + problem.gamma * xhat_sq[1:-1]
    worst = float(margin.max()) if margin.size else 0.0
    report.add(CheckResult(
        name="bridge-margin-inequality",
        status="pass" if worst <= tol else "fail",
        measured=worst, tolerance=tol,
        details={"gamma": problem.gamma},
    ))
    return report


# ---------------------------------------------------------------------------
# Transform and value checks for the control-derived instances
# ---------------------------------------------------------------------------


def hu_peng_transform_check(problem: FbvieProblem, diagonal: DiagonalSolution,
                            tol_factor: float = 10.0,
                            eps_res: float = 1e-10) -> VerificationReport:
    """Check the (p, q) transform of a time-homogeneous instance.

    p = X and q(t) = int_t^T Y ds + Mx(X(T)) turn the coupled system into a
    plain two-point ODE system

        p' = A p - 1/2 B R(s)^-1 B^T q,   -q' = Qx(s, p) + A^T q,
        p(0) = x0(0),                      q(T) = Mx(p(T)).

    Defects are measured in derivative form with centered differences, which
    carries the O(h^2) content (the integral form of the transform is an
    algebraic consequence of the discrete identities and sits at the solve
    residual; it is reported as a consistency diagnostic).
    """
    report = VerificationReport()
    if problem.lq is None:
        raise ValueError("transform check needs an instance with control data")
    grid = diagonal.grid
    red = reduce_to_fbde(problem, grid, tol=1e-9)
    if not red.reducible:
        raise ValueError(
            f"instance is not time-homogeneous; witness {red.witness}")
    spec = problem.lq
    t = grid.t
    h = grid.h
    w_up = grid.weights_upper()
    X, Y = diagonal.X.values, diagonal.Y.values
    mx = np.asarray(spec.Mx(X[-1]), dtype=float)
    p = X
    q = w_up @ Y + mx

    A0 = np.atleast_2d(np.asarray(spec.A(grid.T, 0.0), dtype=float))
    B0 = np.atleast_2d(np.asarray(spec.B(grid.T, 0.0), dtype=float))
    drift_p = np.empty_like(p)
    drift_q = np.empty_like(q)
    for i in range(grid.N + 1):
        r_i = np.atleast_2d(np.asarray(spec.R(t[i]), dtype=float))
        drift_p[i] = A0 @ p[i] - 0.5 * B0 @ np.linalg.solve(r_i, B0.T @ q[i])
        drift_q[i] = -(np.asarray(spec.Qx(t[i], p[i]), dtype=float) + A0.T @ q[i])
    dp = (p[2:] - p[:-2]) / (2.0 * h)
    dq = (q[2:] - q[:-2]) / (2.0 * h)
    defect = max(float(np.max(np.abs(dp - drift_p[1:-1]))),
                 float(np.max(np.abs(dq - drift_q[1:-1]))))

    # integral-form consistency: same sums as the discrete identities
    w_low = grid.weights_lower()
    fwd = p - (p[0] + w_low @ drift_p)
    bwd = q - (mx - w_up @ drift_q)
    integral_defect = max(float(np.max(np.abs(fwd))), float(np.max(np.abs(bwd))))
    boundary = float(np.max(np.abs(q[-1] - mx)))

    tol = tol_factor * h * h + eps_res
    report.add(CheckResult(
        name="two-point-transform-derivative-defect",
        status="pass" if defect <= tol else "fail",
        measured=defect, tolerance=tol,
        details={"integral_form_defect": integral_defect,
                 "terminal_boundary_defect": boundary},
    ))
    return report


def lq_value_identity(problem: FbvieProblem, fields: FieldSolution,
                      oracle_cost: float, tol_factor: float = 10.0) -> VerificationReport:
    """Bridge-at-zero value identity against the oracle cost.

    Convention, fixed numerically on closed-form cases: half the bridge at
    t = 0 (with the problem's terminal map inside the pairing) equals the
    optimal cost.  The factor arises because the backward path carries the
    gradient of the quadratic form, twice the costate.
    """
    report = VerificationReport()
    if problem.lq is None or not problem.lq.quadratic:
        raise ValueError("value identity applies to quadratic-cost instances only")
    grid = fields.diagonal.grid
    value = 0.5 * bridge_value(problem, fields, 0)
    dev = abs(value - oracle_cost) / (1.0 + abs(oracle_cost))
    tol = tol_factor * grid.h ** 2
    report.add(CheckResult(
        name="value-identity",
        status="pass" if dev <= tol else "fail",
        measured=dev, tolerance=tol,
        details={"bridge_half_value": value, "oracle_cost": oracle_cost,
                 "convention": "cost = bridge(0) / 2 with the terminal map G "
                               "inside the pairing"},
    ))
    return report


# ---------------------------------------------------------------------------
# Uniqueness probe
# ---------------------------------------------------------------------------


def uniqueness_probe(problem: FbvieProblem, grid: TimeGrid,
                     params: ContinuationParams | None = None,
                     k: int = 5, seed: int = 0) -> VerificationReport:
    """Re-solve from k random initial guesses and compare the fixed points.

    The backward path of each guess is drawn uniformly at the scale of the
    initial data; all runs must land on the same discrete solution within
    100 picard_tol in joint sup norm.  A run that fails to converge makes the
    probe inconclusive rather than failed.
    """
    if k < 2:
        raise ValueError("probe needs at least two starts")
    params = params or ContinuationParams()
    report = VerificationReport()
    x_scale = 1.0 + float(np.max(np.abs(
        np.asarray(problem.x0(grid.t), dtype=float))))
    seeds = np.random.SeedSequence(seed).spawn(k)
    solutions = []
    for run, s in enumerate(seeds):
        rng = np.random.default_rng(s)
        guess = cold_start_guess(problem, grid)
        guess.Y.values[:] = x_scale * rng.uniform(-1.0, 1.0,
                                                  size=guess.Y.values.shape)
        try:
            sol, _ = continuation_solve(problem, grid, params,
                                        initial_guess=guess)
        except (ContinuationFailure, NoConvergence, NumericalError) as exc:
            report.add(CheckResult(
                name="uniqueness-probe", status="inconclusive",
                measured=float("nan"), tolerance=100.0 * params.picard_tol,
                details={"failed_run": run, "reason": str(exc)},
            ))
            return report
        solutions.append(sol)
    worst = 0.0
    for a in range(k):
        for b in range(a + 1, k):
            worst = max(worst, solutions[a].sup_distance(solutions[b]))
    tol = 100.0 * params.picard_tol
    report.add(CheckResult(
        name="uniqueness-probe",
        status="pass" if worst <= tol else "fail",
        measured=worst, tolerance=tol,
        details={"starts": k, "seed": seed},
    ))
    return report
