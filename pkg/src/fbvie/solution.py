"""Solution containers: diagonal paths and two-parameter triangular fields."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import TimeGrid, VectorPath

__all__ = ["DiagonalSolution", "TriangularField", "FieldSolution"]


@dataclass
class DiagonalSolution:
    """Diagonal unknowns (X, Y) plus the kernel convolution Z on one grid.

    X and Y are the paths the coupled system is written in; Z_i collects the
    weighted kernel sum over Y_j for j >= i.  The two residuals are the
    sup-norm defects of the discrete forward and backward identities,
    evaluated from scratch by whichever solver produced the object.
    """

    grid: TimeGrid
    X: VectorPath
    Y: VectorPath
    Z: VectorPath
    residual_forward: float = float("nan")
    residual_backward: float = float("nan")

    def __post_init__(self):
        for p in (self.X, self.Y, self.Z):
            if p.grid.N != self.grid.N or p.grid.T != self.grid.T:
                raise ValueError("all solution paths must share the grid")
        if self.X.dim != self.Y.dim:
            raise ValueError("X and Y must have equal dimension")

    @property
    def dim(self) -> int:
        return self.X.dim

    def sup_distance(self, other: "DiagonalSolution") -> float:
        """Joint sup-norm distance over (X, Y)."""
        dx = np.max(np.abs(self.X.values - other.X.values))
        dy = np.max(np.abs(self.Y.values - other.Y.values))
        return float(max(dx, dy))


@dataclass
class TriangularField:
    """Two-parameter field on one triangle of [0, T]^2.

    ``values[i, j]`` holds the field at (t_i, s_j); only j <= i is populated
    for orientation 'lower' and only j >= i for 'upper'.  Off-triangle
    entries are NaN so accidental reads surface immediately.
    """

    grid: TimeGrid
    orientation: str
    values: np.ndarray

    def __post_init__(self):
        if self.orientation not in ("lower", "upper"):
            raise ValueError(f"orientation must be lower or upper, got {self.orientation!r}")
        m = self.grid.N + 1
        if self.values.shape[:2] != (m, m):
            raise ValueError("field array must be (N+1, N+1, n)")
        mask = self.triangle_mask()
        if not np.all(np.isfinite(self.values[mask])):
            raise ValueError("field contains non-finite entries on its triangle")

    def triangle_mask(self) -> np.ndarray:
        m = self.grid.N + 1
        i, j = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        return j <= i if self.orientation == "lower" else j >= i

    def diagonal(self) -> np.ndarray:
        m = self.grid.N + 1
        return self.values[np.arange(m), np.arange(m)]


@dataclass
class FieldSolution:
    """Extended fields plus the diagonal they were grown from."""

    diagonal: DiagonalSolution
    field_x: TriangularField
    field_y: TriangularField
    diag_defect: float = field(init=False)

    def __post_init__(self):
        dx = np.max(np.abs(self.field_x.diagonal() - self.diagonal.X.values))
        dy = np.max(np.abs(self.field_y.diagonal() - self.diagonal.Y.values))
        self.diag_defect = float(max(dx, dy))
