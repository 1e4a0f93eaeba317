"""Sampling-based falsification of the declared monotonicity margins.

The margin condition quantifies over quadruples of continuous paths, so it
can never be certified numerically; the checker draws random piecewise-linear
path quadruples, evaluates the coupling functional

    LHS(t) = int_t^T <yhat(s), fhat(s,t)> ds
             - <hhat(t) + int_t^T ghat(t,s) ds, xhat(t)>
             + <G(x1(T)) - G(x2(T)), fhat(T,t)>

at every grid node, and reports margins of LHS(t) + gamma |xhat(t)|^2
against a quadrature-scaled tolerance.  A report with zero violations says
"no violation found in S samples", nothing stronger.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EstimationFailure
from .grid import TimeGrid, VectorPath, kernel_weight_tensor
from .problem import FbvieProblem, mc2_differences

__all__ = [
    "SamplerConfig",
    "MonotonicityReport",
    "Mc3Report",
    "mc1_lhs",
    "check_mc1",
    "check_mc3",
    "estimate_gamma",
]

_XHAT_FLOOR = 1e-8


@dataclass
class SamplerConfig:
    """Random path quadruples: piecewise linear over ``knots`` equispaced
    knots with node values uniform in [-box, box], plus an optional
    per-grid-node perturbation of relative size ``roughness``."""

    num_samples: int
    seed: int = 0
    knots: int = 6
    box: float = 1.0
    roughness: float = 0.0

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError("need at least one sample")
        if self.knots < 2:
            raise ValueError("need at least two knots")
        if self.box <= 0 or self.roughness < 0:
            raise ValueError("box must be positive and roughness nonnegative")

    def nominal_scale(self) -> float:
        return self.box * (1.0 + self.roughness)


@dataclass
class MonotonicityReport:
    samples: int
    mode: str
    gamma: float
    tolerance: float
    worst_margin: float
    violations: list = field(default_factory=list)
    estimated_gamma: float = float("nan")
    admissible_points: int = 0

    @property
    def violated(self) -> bool:
        return len(self.violations) > 0

    def as_dict(self) -> dict:
        return {
            "samples": self.samples,
            "mode": self.mode,
            "gamma": self.gamma,
            "tolerance": self.tolerance,
            "worst_margin": self.worst_margin,
            "violations": [
                {"sample": int(s), "node": int(i), "margin": float(m)}
                for (s, i, m) in self.violations
            ],
            "estimated_gamma": self.estimated_gamma,
            "admissible_points": self.admissible_points,
        }


@dataclass
class Mc3Report:
    samples: int
    tolerance: float
    worst_alignment_margin: float
    worst_lipschitz_margin: float
    violations_alignment: list = field(default_factory=list)
    violations_lipschitz: list = field(default_factory=list)

    @property
    def violated(self) -> bool:
        return bool(self.violations_alignment or self.violations_lipschitz)

    def as_dict(self) -> dict:
        return {
            "samples": self.samples,
            "tolerance": self.tolerance,
            "worst_alignment_margin": self.worst_alignment_margin,
            "worst_lipschitz_margin": self.worst_lipschitz_margin,
            "violations_alignment": [
                {"sample": int(s), "margin": float(m)}
                for (s, m) in self.violations_alignment
            ],
            "violations_lipschitz": [
                {"sample": int(s), "margin": float(m)}
                for (s, m) in self.violations_lipschitz
            ],
        }


# ---------------------------------------------------------------------------
# The coupling functional
# ---------------------------------------------------------------------------


def _paired_difference_tables(problem, grid, x1v, y1v, z1v, x2v, y2v, z2v, mode):
    """Evaluate fhat and ghat over whole index triangles in two flat calls.

    Requires the coefficient evaluators to broadcast elementwise over paired
    time arrays; the caller verifies a probe against rowwise evaluation and
    falls back if the problem's closures cannot do this.
    """
    t = grid.t
    m = grid.N + 1
    n = problem.n
    x1T, x2T = x1v[-1], x2v[-1]
    aa, bb = np.tril_indices(m)
    f1 = np.asarray(problem.f(t[aa], t[bb], x1v[bb], y1v[bb], z1v[bb], x1T), dtype=float)
    if mode == "full":
        f2 = np.asarray(problem.f(t[aa], t[bb], x2v[bb], y2v[bb], z2v[bb], x2T), dtype=float)
    else:
        f2 = np.asarray(problem.f(t[aa], t[bb], x1v[bb], y1v[bb], z1v[bb], x2T), dtype=float)
    f_tab = np.zeros((m, m, n))
    f_tab[aa, bb] = f1 - f2
    ii, jj = np.triu_indices(m)
    g1 = np.asarray(problem.g(t[ii], t[jj], x1v[jj], y1v[jj]), dtype=float)
    g2 = np.asarray(problem.g(t[ii], t[jj], x2v[jj], y2v[jj]), dtype=float)
    g_tab = np.zeros((m, m, n))
    g_tab[ii, jj] = g1 - g2
    return f_tab, g_tab


def _rowwise_difference_tables(bundle, grid):
    m = grid.N + 1
    n = bundle.x_hat.dim
    f_tab = np.zeros((m, m, n))
    g_tab = np.zeros((m, m, n))
    for a in range(m):
        js = np.arange(a + 1)
        f_tab[a, : a + 1] = np.atleast_2d(bundle.f_hat(a, js))
        ks = np.arange(a, m)
        g_tab[a, a:] = np.atleast_2d(bundle.g_hat(a, ks))
    return f_tab, g_tab


def _mc1_vector(problem: FbvieProblem, x1, y1, x2, y2, mode,
                z_pair=None, fast=True):
    """LHS(t) at every node, plus |xhat(t)|^2."""
    grid = x1.grid
    bundle = mc2_differences(problem, x1, y1, x2, y2, mode, _z=z_pair)
    x1v, y1v = x1.values, y1.values
    x2v, y2v = x2.values, y2.values
    z1v, z2v = bundle.z1.values, bundle.z2.values
    w_up = grid.weights_upper()

    tables = None
    if fast:
        try:
            tables = _paired_difference_tables(
                problem, grid, x1v, y1v, z1v, x2v, y2v, z2v, mode)
            # spot-verify three entries against the rowwise definition
            m = grid.N + 1
            probes = [(m - 1, 0), (m - 1, m - 1), (m // 2, m // 4)]
            for (a, b) in probes:
                if b > a:
                    continue
                ref = np.atleast_2d(bundle.f_hat(a, np.array([b])))[0]
                if not np.allclose(tables[0][a, b], ref,
                                   atol=1e-10 * (1.0 + np.abs(ref).max()), rtol=1e-8):
                    tables = None
                    break
        except Exception:
            tables = None
    if tables is None:
        tables = _rowwise_difference_tables(bundle, grid)
    f_tab, g_tab = tables

    yhat = bundle.y_hat.values
    xhat = bundle.x_hat.values
    term1 = np.einsum("ij,jk,jik->i", w_up, yhat, f_tab)
    g_sum = np.einsum("ij,ijk->ik", w_up, g_tab)
    term2 = -np.einsum("ik,ik->i", bundle.h_hat.values + g_sum, xhat)
    term3 = f_tab[-1] @ bundle.G_hat
    lhs = term1 + term2 + term3
    xhat_sq = np.einsum("ik,ik->i", xhat, xhat)
    return lhs, xhat_sq


def mc1_lhs(problem: FbvieProblem, x1: VectorPath, y1: VectorPath,
            x2: VectorPath, y2: VectorPath, t_index: int,
            mode: str = "full") -> float:
    """The coupling functional at one grid node."""
    grid = x1.grid
    if not (0 <= t_index <= grid.N):
        raise ValueError(f"t_index {t_index} outside grid")
    lhs, _ = _mc1_vector(problem, x1, y1, x2, y2, mode)
    return float(lhs[t_index])


# ---------------------------------------------------------------------------
# Samplers and checks
# ---------------------------------------------------------------------------


def _draw_path(grid: TimeGrid, rng, cfg: SamplerConfig, n: int) -> np.ndarray:
    knot_t = np.linspace(0.0, grid.T, cfg.knots)
    knot_v = rng.uniform(-cfg.box, cfg.box, size=(cfg.knots, n))
    vals = np.empty((grid.N + 1, n))
    for k in range(n):
        vals[:, k] = np.interp(grid.t, knot_t, knot_v[:, k])
    if cfg.roughness > 0:
        vals += cfg.roughness * cfg.box * rng.uniform(-1.0, 1.0,
                                                      size=(grid.N + 1, n))
    return vals


def _scan(problem: FbvieProblem, grid: TimeGrid, cfg: SamplerConfig, mode: str):
    """Yield (sample index, lhs vector, xhat_sq vector) deterministically.

    Each sample draws from its own spawned generator, so a parallel
    evaluation with the same seeds would reproduce the serial report.
    """
    kernel_tensor = kernel_weight_tensor(grid, problem.K, problem.n)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.num_samples)
    for k in range(cfg.num_samples):
        rng = np.random.default_rng(seeds[k])
        x1 = VectorPath(grid, _draw_path(grid, rng, cfg, problem.n))
        y1 = VectorPath(grid, _draw_path(grid, rng, cfg, problem.n))
        x2 = VectorPath(grid, _draw_path(grid, rng, cfg, problem.n))
        y2 = VectorPath(grid, _draw_path(grid, rng, cfg, problem.n))
        z1 = VectorPath(grid, np.einsum("ijab,jb->ia", kernel_tensor, y1.values))
        z2 = VectorPath(grid, np.einsum("ijab,jb->ia", kernel_tensor, y2.values))
        lhs, xhat_sq = _mc1_vector(problem, x1, y1, x2, y2, mode,
                                   z_pair=(z1, z2))
        yield k, lhs, xhat_sq


def check_mc1(problem: FbvieProblem, grid: TimeGrid, cfg: SamplerConfig,
              mode: str = "full") -> MonotonicityReport:
    """Scan random path quadruples for margin violations.

    Margins are measured against the problem's declared gamma with a single
    tolerance 10 h^2 max(1, nominal path scale)^2 absorbing the quadrature
    error of the discrete functional.  Violations are data, not errors.
    """
    tol = 10.0 * grid.h ** 2 * max(1.0, cfg.nominal_scale()) ** 2
    floor = _XHAT_FLOOR * max(1.0, cfg.nominal_scale()) ** 2
    worst = -np.inf
    violations = []
    best_gamma = np.inf
    admissible = 0
    for k, lhs, xhat_sq in _scan(problem, grid, cfg, mode):
        margin = lhs + problem.gamma * xhat_sq
        worst = max(worst, float(margin.max()))
        bad = np.nonzero(margin > tol)[0]
        for i in bad:
            violations.append((k, int(i), float(margin[i])))
        ok = xhat_sq >= floor
        if np.any(ok):
            admissible += int(ok.sum())
            best_gamma = min(best_gamma, float(np.min(-lhs[ok] / xhat_sq[ok])))
    return MonotonicityReport(
        samples=cfg.num_samples, mode=mode, gamma=problem.gamma,
        tolerance=tol, worst_margin=worst, violations=violations,
        estimated_gamma=best_gamma if np.isfinite(best_gamma) else float("nan"),
        admissible_points=admissible,
    )


def estimate_gamma(problem: FbvieProblem, grid: TimeGrid, cfg: SamplerConfig,
                   mode: str = "full") -> float:
    """Largest margin consistent with the sampled quadruples.

    min over samples and nodes of -LHS(t)/|xhat(t)|^2 where |xhat(t)|^2 stays
    above a relative floor.  This is a falsification witness bound, not a
    certificate.
    """
    floor = _XHAT_FLOOR * max(1.0, cfg.nominal_scale()) ** 2
    best = np.inf
    seen = 0
    for _, lhs, xhat_sq in _scan(problem, grid, cfg, mode):
        ok = xhat_sq >= floor
        if np.any(ok):
            seen += int(ok.sum())
            best = min(best, float(np.min(-lhs[ok] / xhat_sq[ok])))
    if seen == 0:
        raise EstimationFailure("no sample points with admissible |xhat|^2")
    return best


def _g0_sqrt(problem: FbvieProblem) -> np.ndarray:
    eigvals, eigvecs = np.linalg.eigh(problem.G0)
    if eigvals.min() < -1e-12 * max(1.0, float(np.abs(eigvals).max())):
        raise ValueError(f"G0 is not positive semi-definite: eigenvalues {eigvals}")
    clipped = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(clipped)) @ eigvecs.T


def check_mc3(problem: FbvieProblem, cfg: SamplerConfig) -> Mc3Report:
    """Check both terminal-map inequalities on sampled terminal pairs.

    Alignment: <G(x1) - G(x2), x1 - x2> >= |G0^(1/2)(x1 - x2)|^2.
    Lipschitz: |G(x1) - G(x2)| <= K_G |G0^(1/2)(x1 - x2)|.
    Margins are positive when violated.
    """
    sqrt_g0 = _g0_sqrt(problem)
    tol = 1e-10 * max(1.0, cfg.box) ** 2
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.num_samples)
    worst_a = -np.inf
    worst_l = -np.inf
    viol_a, viol_l = [], []
    for k in range(cfg.num_samples):
        rng = np.random.default_rng(seeds[k])
        x1T = rng.uniform(-cfg.box, cfg.box, size=problem.n)
        x2T = rng.uniform(-cfg.box, cfg.box, size=problem.n)
        d = x1T - x2T
        g_hat = (np.asarray(problem.G(x1T), dtype=float)
                 - np.asarray(problem.G(x2T), dtype=float))
        half = sqrt_g0 @ d
        m_align = float(half @ half - g_hat @ d)
        m_lip = float(np.linalg.norm(g_hat) - problem.K_G * np.linalg.norm(half))
        worst_a = max(worst_a, m_align)
        worst_l = max(worst_l, m_lip)
        if m_align > tol:
            viol_a.append((k, m_align))
        if m_lip > tol:
            viol_l.append((k, m_lip))
    return Mc3Report(
        samples=cfg.num_samples, tolerance=tol,
        worst_alignment_margin=worst_a, worst_lipschitz_margin=worst_l,
        violations_alignment=viol_a, violations_lipschitz=viol_l,
    )
