"""Command-line entry point.

    fbvie solve|verify|check-mono|convergence --config <path> [--out <dir>] [--seed <u64>]

Exit codes: 0 success, 1 configuration error, 2 convergence or check
failure, 3 internal numerical error.  All file writes are atomic
(write-temp-then-rename) and locale-independent; identical config and seed
produce byte-identical outputs, so wall-clock timings are logged to stderr
instead of being embedded in the reports.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .continuation import continuation_solve, extend_to_fields
from .errors import ContinuationFailure, NoConvergence, NumericalError, SolverFailure
from .monotonicity import check_mc1, check_mc3
from .oracle_lq import assemble_discrete_lq, compare_with_fbvie, solve_direct
from .problem import const_path
from .verify import (CheckResult, VerificationReport, bridge_monotonicity_check,
                     bridge_value, fbvie_residual, hu_peng_transform_check,
                     lq_value_identity, uniqueness_probe)

_EXIT_OK = 0
_EXIT_CONFIG = 1
_EXIT_CHECK = 2
_EXIT_NUMERIC = 3


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: Path, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _report_envelope(cfg: RunConfig, body: dict) -> dict:
    return {"config": cfg.raw, "version": __version__, **body}


def _solution_csv(sol) -> str:
    n, p = sol.X.dim, sol.Z.dim
    buf = io.StringIO()
    cols = (["t"] + [f"X_{k + 1}" for k in range(n)]
            + [f"Y_{k + 1}" for k in range(n)] + [f"Z_{k + 1}" for k in range(p)])
    buf.write(",".join(cols) + "\n")
    for i, ti in enumerate(sol.grid.t):
        row = [_fmt(ti)]
        row += [_fmt(v) for v in sol.X.values[i]]
        row += [_fmt(v) for v in sol.Y.values[i]]
        row += [_fmt(v) for v in sol.Z.values[i]]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def _field_csv(field, prefix: str) -> str:
    grid = field.grid
    n = field.values.shape[2]
    buf = io.StringIO()
    buf.write(",".join(["t", "s"] + [f"{prefix}_{k + 1}" for k in range(n)]) + "\n")
    t = grid.t
    for i in range(grid.N + 1):
        js = range(i + 1) if field.orientation == "lower" else range(i, grid.N + 1)
        for j in js:
            row = [_fmt(t[i]), _fmt(t[j])] + [_fmt(v) for v in field.values[i, j]]
            buf.write(",".join(row) + "\n")
    return buf.getvalue()


def _solve(cfg: RunConfig):
    grid = cfg.make_grid()
    problem = cfg.build_problem(grid)
    started = time.perf_counter()
    sol, report = continuation_solve(problem, grid, cfg.params)
    elapsed = time.perf_counter() - started
    print(f"solved {cfg.problem_type} on N={grid.N} in {elapsed:.2f}s "
          f"({report.total_picard_iterations} inner iterations)", file=sys.stderr)
    return grid, problem, sol, report


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    try:
        grid, problem, sol, report = _solve(cfg)
    except ContinuationFailure as exc:
        body = {"status": "continuation-failure", "reason": str(exc)}
        if exc.report is not None:
            body["solve"] = exc.report.as_dict()
        _write_json(out / "report.json", _report_envelope(cfg, body))
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_CHECK
    fields = extend_to_fields(problem, sol)
    _atomic_write(out / "solution.csv", _solution_csv(sol))
    _atomic_write(out / "fields_x.csv", _field_csv(fields.field_x, "X"))
    _atomic_write(out / "fields_y.csv", _field_csv(fields.field_y, "Y"))
    _write_json(out / "report.json", _report_envelope(cfg, {
        "status": "ok",
        "solve": report.as_dict(),
        "field_diagonal_defect": fields.diag_defect,
    }))
    return _EXIT_OK


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    try:
        grid, problem, sol, solve_report = _solve(cfg)
    except ContinuationFailure as exc:
        _write_json(out / "verify.json", _report_envelope(cfg, {
            "status": "continuation-failure", "reason": str(exc)}))
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_CHECK

    report = VerificationReport()
    rf, rb = fbvie_residual(problem, sol)
    report.add(CheckResult(
        name="discrete-residuals",
        status="pass" if max(rf, rb) <= cfg.params.residual_target else "fail",
        measured=max(rf, rb), tolerance=cfg.params.residual_target,
        details={"forward": rf, "backward": rb}))

    offset = const_path(np.asarray(problem.x0(0.0), dtype=float)
                        - cfg.bridge_offset * np.ones(problem.n))
    bridge = bridge_monotonicity_check(problem, grid, problem.x0, offset,
                                       cfg.params, cfg.bridge_tol_factor)
    report.checks.extend(bridge.checks)

    probe = uniqueness_probe(problem, grid, cfg.params, k=cfg.probe_starts,
                             seed=cfg.probe_seed)
    report.checks.extend(probe.checks)

    if problem.lq is not None and problem.lq.quadratic:
        report.checks.extend(hu_peng_transform_check(
            problem, sol, eps_res=cfg.params.residual_target).checks)
        oracle = assemble_discrete_lq(problem.lq, grid)
        # the transcription's endpoint adjoint is first-order, so the control
        # gate cannot sit below h on coarse grids
        comparison = compare_with_fbvie(
            problem.lq, sol, oracle,
            u_tol=max(5e-3, grid.h),
            j_tol=max(1e-3, 10.0 * grid.h ** 2))
        report.add(CheckResult(
            name="oracle-comparison",
            status="pass" if comparison["passed"] else "fail",
            measured=comparison["control_deviation"],
            tolerance=comparison["tolerances"]["control"],
            details=comparison))
        fields = extend_to_fields(problem, sol)
        report.checks.extend(lq_value_identity(
            problem, fields, comparison["oracle_cost"]).checks)

    _write_json(out / "verify.json", _report_envelope(cfg, {
        "status": "ok",
        "solve": solve_report.as_dict(),
        **report.as_dict(),
    }))
    return _EXIT_OK if report.passed else _EXIT_CHECK


def cmd_check_mono(cfg: RunConfig, out: Path) -> int:
    grid = cfg.make_grid()
    problem = cfg.build_problem(grid)
    full = check_mc1(problem, grid, cfg.checker, mode="full")
    terminal = check_mc1(problem, grid, cfg.checker, mode="terminal-only")
    mc3 = check_mc3(problem, cfg.checker)
    _write_json(out / "monotonicity.json", _report_envelope(cfg, {
        "status": "ok",
        "declared_gamma": problem.gamma,
        "problem_flags": list(problem.flags),
        "mc1_full": full.as_dict(),
        "mc1_terminal_only": terminal.as_dict(),
        "mc3": mc3.as_dict(),
    }))
    print(f"mc1 full mode: {len(full.violations)} violations in {full.samples} "
          f"samples, estimated margin {full.estimated_gamma:.6g}", file=sys.stderr)
    return _EXIT_OK if not full.violated else _EXIT_CHECK


def _closed_form_reference(cfg: RunConfig, grid):
    if cfg.problem_type == "lq-scalar":
        return (np.cosh(grid.T - grid.t) / np.cosh(grid.T))[:, None]
    return None


def cmd_convergence(cfg: RunConfig, out: Path) -> int:
    ns = sorted(cfg.convergence_list)
    if len(ns) < 2:
        raise ConfigError("convergence needs at least two grid sizes")
    solutions = {}
    for n_intervals in ns:
        sub = RunConfig(**{**cfg.__dict__, "grid_N": n_intervals})
        grid, _, sol, _ = _solve(sub)
        solutions[n_intervals] = (grid, sol)

    finest = ns[-1]
    errors = {}
    for n_intervals in ns:
        grid, sol = solutions[n_intervals]
        ref = _closed_form_reference(cfg, grid)
        if ref is not None:
            errors[n_intervals] = float(np.max(np.abs(sol.X.values - ref)))
        elif n_intervals != finest:
            if finest % n_intervals:
                raise ConfigError(
                    f"{finest} is not a multiple of {n_intervals}; node sets "
                    "do not align for the reference comparison")
            stride = finest // n_intervals
            ref_vals = solutions[finest][1].X.values[::stride]
            errors[n_intervals] = float(np.max(np.abs(sol.X.values - ref_vals)))

    measured = sorted(errors)
    orders = {}
    for a, b in zip(measured, measured[1:]):
        orders[b] = float(np.log(errors[a] / errors[b]) / np.log(b / a))

    buf = io.StringIO()
    buf.write("N,sup_error,observed_order\n")
    for n_intervals in ns:
        err = errors.get(n_intervals, float("nan"))
        order = orders.get(n_intervals, float("nan"))
        buf.write(f"{n_intervals},{_fmt(err)},{_fmt(order)}\n")
    _atomic_write(out / "convergence.csv", buf.getvalue())

    worst = min(orders.values()) if orders else float("nan")
    print(f"observed orders: { {k: round(v, 3) for k, v in orders.items()} }",
          file=sys.stderr)
    return _EXIT_OK if orders and worst >= 1.7 else _EXIT_CHECK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fbvie",
        description="Coupled forward-backward Volterra integral equation solver")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "verify", "check-mono", "convergence"):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="run configuration file")
        cmd.add_argument("--out", default=".", help="output directory")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the checker seed")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, seed_override=args.seed)
        out = Path(args.out)
        handler = {
            "solve": cmd_solve,
            "verify": cmd_verify,
            "check-mono": cmd_check_mono,
            "convergence": cmd_convergence,
        }[args.command]
        return handler(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except ContinuationFailure as exc:
        print(f"continuation failure: {exc}", file=sys.stderr)
        return _EXIT_CHECK
    except (NumericalError, SolverFailure, NoConvergence) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return _EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
