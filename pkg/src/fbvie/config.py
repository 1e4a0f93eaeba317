"""Run configuration: sectioned key-value files, strictly validated.

The format is INI-style with a fixed schema; unknown sections or keys are
rejected with the offending name so a typo cannot silently fall back to a
default.  Custom problems supply coefficient samples as CSV matrices that
are interpolated bilinearly in (t, s) (linearly in t for the one-argument
coefficients).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .continuation import ContinuationParams
from .grid import TimeGrid, make_grid
from .monotonicity import SamplerConfig
from .problem import FbvieProblem, LqSpec, build_lq_problem
from .presets import build_preset

__all__ = ["RunConfig", "load_config", "ConfigError"]


class ConfigError(ValueError):
    """Invalid run configuration; message carries section/key diagnostics."""


_SCHEMA = {
    "problem": {"type", "lambda", "l_a", "l_phi", "l_psi", "psi_at_state_time",
                "n", "m", "a_csv", "b_csv", "q_csv", "r_csv", "g0", "x0_csv",
                "gamma"},
    "grid": {"horizon", "intervals"},
    "continuation": {"delta_init", "delta_min", "damping", "picard_tol",
                     "picard_cap", "residual_target", "warm_start"},
    "checker": {"samples", "seed", "knots", "box", "roughness"},
    "verify": {"probe_starts", "probe_seed", "bridge_tol_factor",
               "bridge_offset"},
    "convergence": {"intervals_list"},
}

_PROBLEM_TYPES = ("lq-scalar", "lq-matrix", "nonlinear-example", "custom-tabular")


@dataclass
class RunConfig:
    problem_type: str
    grid_T: float
    grid_N: int
    params: ContinuationParams
    checker: SamplerConfig
    problem_overrides: dict = field(default_factory=dict)
    custom: dict | None = None
    probe_starts: int = 5
    probe_seed: int = 0
    bridge_tol_factor: float = 20.0
    bridge_offset: float = 1.0
    convergence_list: tuple = (64, 128, 256)
    raw: dict = field(default_factory=dict)

    def make_grid(self) -> TimeGrid:
        return make_grid(self.grid_T, self.grid_N)

    def build_problem(self, grid: TimeGrid) -> FbvieProblem:
        if self.problem_type == "custom-tabular":
            return _build_custom(self.custom, grid)
        return build_preset(self.problem_type, grid, dict(self.problem_overrides))


def _get(parser, section, key, conv, default=None, required=False):
    if not parser.has_option(section, key):
        if required:
            raise ConfigError(f"missing required key [{section}] {key}")
        return default
    raw = parser.get(section, key)
    try:
        if conv is bool:
            return parser.getboolean(section, key)
        return conv(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from exc


def load_config(path: str | Path, seed_override: int | None = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"),
                                       interpolation=None)
    try:
        parser.read_string(path.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser.options(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key [{section}] {key}")
    for required in ("problem", "grid"):
        if not parser.has_section(required):
            raise ConfigError(f"missing required section [{required}]")

    ptype = _get(parser, "problem", "type", str, required=True)
    if ptype not in _PROBLEM_TYPES:
        raise ConfigError(
            f"unknown problem type {ptype!r}; choose one of {_PROBLEM_TYPES}")

    overrides = {}
    for key in ("lambda", "l_a", "l_phi", "l_psi"):
        val = _get(parser, "problem", key, float)
        if val is not None:
            overrides[key] = val
    flag = _get(parser, "problem", "psi_at_state_time", bool)
    if flag is not None:
        overrides["psi_at_state_time"] = flag
    if overrides and ptype != "nonlinear-example":
        raise ConfigError("nonlinear constants are only valid with "
                          "type = nonlinear-example")

    custom = None
    if ptype == "custom-tabular":
        custom = {
            "n": _get(parser, "problem", "n", int, required=True),
            "m": _get(parser, "problem", "m", int, required=True),
            "gamma": _get(parser, "problem", "gamma", float, required=True),
            "g0": _get(parser, "problem", "g0", str, required=True),
            "base": path.parent,
        }
        for key in ("a_csv", "b_csv", "q_csv", "r_csv", "x0_csv"):
            custom[key] = _get(parser, "problem", key, str, required=True)

    grid_T = _get(parser, "grid", "horizon", float, required=True)
    grid_N = _get(parser, "grid", "intervals", int, required=True)

    try:
        params = ContinuationParams(
            delta_init=_get(parser, "continuation", "delta_init", float, 0.25),
            delta_min=_get(parser, "continuation", "delta_min", float, 1.0 / 1024.0),
            damping=_get(parser, "continuation", "damping", float, 0.5),
            picard_tol=_get(parser, "continuation", "picard_tol", float, 1e-11),
            picard_cap=_get(parser, "continuation", "picard_cap", int, 200),
            residual_target=_get(parser, "continuation", "residual_target",
                                 float, 1e-10),
            warm_start=_get(parser, "continuation", "warm_start", bool, True),
        )
        checker = SamplerConfig(
            num_samples=_get(parser, "checker", "samples", int, 1000),
            seed=(seed_override if seed_override is not None
                  else _get(parser, "checker", "seed", int, 0)),
            knots=_get(parser, "checker", "knots", int, 6),
            box=_get(parser, "checker", "box", float, 1.0),
            roughness=_get(parser, "checker", "roughness", float, 0.0),
        )
        if grid_T <= 0 or grid_N < 2:
            raise ValueError(f"invalid grid ({grid_T}, {grid_N})")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    conv_raw = _get(parser, "convergence", "intervals_list", str, "64,128,256")
    try:
        conv_list = tuple(int(x) for x in conv_raw.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad intervals_list: {conv_raw!r}") from exc

    raw = {s: dict(parser.items(s)) for s in parser.sections()}
    raw.setdefault("checker", {})["seed"] = str(checker.seed)
    return RunConfig(
        problem_type=ptype, grid_T=grid_T, grid_N=grid_N, params=params,
        checker=checker, problem_overrides=overrides, custom=custom,
        probe_starts=_get(parser, "verify", "probe_starts", int, 5),
        probe_seed=_get(parser, "verify", "probe_seed", int, 0),
        bridge_tol_factor=_get(parser, "verify", "bridge_tol_factor", float, 20.0),
        bridge_offset=_get(parser, "verify", "bridge_offset", float, 1.0),
        convergence_list=conv_list, raw=raw,
    )


# ---------------------------------------------------------------------------
# Tabular coefficient loading
# ---------------------------------------------------------------------------


def _load_two_arg_table(path: Path, rows: int, cols: int):
    """CSV with columns t, s, entries (row-major); full rectangular lattice."""
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] != 2 + rows * cols:
        raise ConfigError(
            f"{path}: expected {2 + rows * cols} columns, found {data.shape[1]}")
    ts = np.unique(data[:, 0])
    ss = np.unique(data[:, 1])
    if data.shape[0] != ts.size * ss.size:
        raise ConfigError(f"{path}: samples do not form a full (t, s) lattice")
    table = np.full((ts.size, ss.size, rows, cols), np.nan)
    ti = np.searchsorted(ts, data[:, 0])
    si = np.searchsorted(ss, data[:, 1])
    table[ti, si] = data[:, 2:].reshape(-1, rows, cols)
    if not np.all(np.isfinite(table)):
        raise ConfigError(f"{path}: lattice has missing or non-finite entries")

    def evaluate(t, s):
        tq = np.asarray(t, dtype=float)
        sq = np.asarray(s, dtype=float)
        shape = np.broadcast_shapes(tq.shape, sq.shape)
        tq = np.broadcast_to(tq, shape).reshape(-1)
        sq = np.broadcast_to(sq, shape).reshape(-1)
        it = np.clip(np.searchsorted(ts, tq, side="right") - 1, 0, ts.size - 2) \
            if ts.size > 1 else np.zeros(tq.size, dtype=int)
        js = np.clip(np.searchsorted(ss, sq, side="right") - 1, 0, ss.size - 2) \
            if ss.size > 1 else np.zeros(sq.size, dtype=int)
        if ts.size > 1:
            wt = (tq - ts[it]) / (ts[it + 1] - ts[it])
            wt = np.clip(wt, 0.0, 1.0)[:, None, None]
            top = table[it + 1]
            bot = table[it]
        else:
            wt = np.zeros(tq.size)[:, None, None]
            top = bot = table[it]
        if ss.size > 1:
            ws = (sq - ss[js]) / (ss[js + 1] - ss[js])
            ws = np.clip(ws, 0.0, 1.0)[:, None, None]
            out = ((1 - wt) * ((1 - ws) * bot[np.arange(tq.size), js]
                               + ws * bot[np.arange(tq.size), js + 1])
                   + wt * ((1 - ws) * top[np.arange(tq.size), js]
                           + ws * top[np.arange(tq.size), js + 1]))
        else:
            out = (1 - wt) * bot[:, 0] + wt * top[:, 0]
        out = out.reshape(shape + (rows, cols))
        return out if shape else out.reshape(rows, cols)

    return evaluate


def _load_one_arg_table(path: Path, entries: int):
    """CSV with columns t, entries; linear interpolation in t."""
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] != 1 + entries:
        raise ConfigError(
            f"{path}: expected {1 + entries} columns, found {data.shape[1]}")
    order = np.argsort(data[:, 0])
    ts = data[order, 0]
    vals = data[order, 1:]

    def evaluate(t):
        tq = np.asarray(t, dtype=float)
        out = np.stack([np.interp(tq, ts, vals[:, k])
                        for k in range(entries)], axis=-1)
        return out

    return evaluate


def _build_custom(custom: dict, grid: TimeGrid) -> FbvieProblem:
    n, m = custom["n"], custom["m"]
    base = custom["base"]
    g0_entries = [float(x) for x in custom["g0"].split(",")]
    if len(g0_entries) != n * n:
        raise ConfigError(f"g0 needs {n * n} entries, found {len(g0_entries)}")
    g0 = np.array(g0_entries).reshape(n, n)

    A = _load_two_arg_table(base / custom["a_csv"], n, n)
    B = _load_two_arg_table(base / custom["b_csv"], n, m)
    q_tab = _load_one_arg_table(base / custom["q_csv"], n * n)
    r_tab = _load_one_arg_table(base / custom["r_csv"], m * m)
    x0_tab = _load_one_arg_table(base / custom["x0_csv"], n)

    def Q(t):
        return q_tab(t).reshape(np.shape(t) + (n, n))

    def R(t):
        return r_tab(t).reshape(np.shape(t) + (m, m))

    spec = LqSpec(n=n, m=m, A=A, B=B, R=R, Q=Q, x0=x0_tab, G0=g0,
                  gamma=custom["gamma"])
    try:
        return build_lq_problem(spec, grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
