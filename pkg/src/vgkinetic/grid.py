"""Cell grids on the truncated state space and cell-averaged densities."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .model import ModelParams, critical_conductance


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Uniform ``n_v x n_g`` cell grid on ``[v_min, v_max) x [0, g_max]``."""

    n_v: int
    n_g: int
    g_max: float
    v_min: float = 0.0
    v_max: float = 1.0

    def __post_init__(self):
        if self.n_v < 1 or self.n_g < 1:
            raise GridError(f"grid needs at least one cell per axis, got {self.n_v}x{self.n_g}")
        if not self.g_max > 0:
            raise GridError(f"g_max must be > 0, got {self.g_max!r}")
        if not self.v_max > self.v_min:
            raise GridError("empty voltage interval")

    @classmethod
    def for_params(cls, params: ModelParams, n_v: int, n_g: int,
                   g_max: float | None = None) -> "GridSpec":
        """Grid over ``[V_R, V_F)``; when ``g_max`` is omitted it is chosen as the
        smallest value ``>= g_in + 6 sqrt(a)`` that puts a cell face on ``g_F``."""
        if g_max is None:
            g_floor = params.g_in + 6.0 * math.sqrt(params.a)
            g_F = critical_conductance(params)
            k = math.floor(n_g * g_F / g_floor)
            g_max = n_g * g_F / k if k >= 1 else g_floor
        return cls(n_v=n_v, n_g=n_g, g_max=float(g_max), v_min=params.V_R, v_max=params.V_F)

    @property
    def dv(self) -> float:
        return (self.v_max - self.v_min) / self.n_v

    @property
    def dg(self) -> float:
        return self.g_max / self.n_g

    @property
    def cell_area(self) -> float:
        return self.dv * self.dg

    @property
    def v_edges(self) -> np.ndarray:
        return np.linspace(self.v_min, self.v_max, self.n_v + 1)

    @property
    def g_edges(self) -> np.ndarray:
        return np.linspace(0.0, self.g_max, self.n_g + 1)

    @property
    def v_centers(self) -> np.ndarray:
        return self.v_min + (np.arange(self.n_v) + 0.5) * self.dv

    @property
    def g_centers(self) -> np.ndarray:
        return (np.arange(self.n_g) + 0.5) * self.dg

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_v, self.n_g)

    def has_face_at(self, g: float, rtol: float = 1e-9) -> bool:
        k = g / self.dg
        return abs(k - round(k)) <= rtol * max(1.0, abs(k))

    def validate_solver_grid(self, params: ModelParams) -> None:
        """Constraints for the PDE solver: resolution, tail truncation, face at ``g_F``."""
        if self.n_v < 8 or self.n_g < 8:
            raise GridError(f"solver grid needs n_v, n_g >= 8, got {self.n_v}x{self.n_g}")
        g_floor = params.g_in + 6.0 * math.sqrt(params.a)
        if self.g_max < g_floor * (1 - 1e-12):
            raise GridError(f"g_max={self.g_max!r} below g_in + 6 sqrt(a) = {g_floor!r}")
        if abs(self.v_min - params.V_R) > 1e-12 or abs(self.v_max - params.V_F) > 1e-12:
            raise GridError("solver grid must span [V_R, V_F)")
        g_F = critical_conductance(params)
        if 0 < g_F < self.g_max and not self.has_face_at(g_F):
            raise GridError(
                f"no cell face at g_F={g_F!r} (dg={self.dg!r}, g_F/dg={g_F / self.dg!r}); "
                f"the boundary type at V_F changes there, pick g_max = n_g*g_F/k for an integer k")

    def same_as(self, other: "GridSpec") -> bool:
        return (self.n_v == other.n_v and self.n_g == other.n_g
                and np.isclose(self.g_max, other.g_max, rtol=1e-12, atol=0)
                and np.isclose(self.v_min, other.v_min, rtol=0, atol=1e-12)
                and np.isclose(self.v_max, other.v_max, rtol=0, atol=1e-12))


@dataclass
class DensityField:
    """Cell-averaged density on a :class:`GridSpec`.

    ``values`` has shape ``(n_v, n_g)``. Mass above ``g_max`` (particle
    histograms only) is kept in ``overflow_mass`` with its mean conductance
    ``overflow_g``.
    """

    grid: GridSpec
    values: np.ndarray
    t: float = 0.0
    overflow_mass: float = 0.0
    overflow_g: float = float("nan")
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise GridError(f"values shape {self.values.shape} != grid {self.grid.shape}")

    def masses(self) -> np.ndarray:
        return self.values * self.grid.cell_area

    def total_mass(self) -> float:
        return float(self.masses().sum() + self.overflow_mass)

    def g_marginal(self) -> np.ndarray:
        """Density of the conductance marginal per g-cell."""
        return self.values.sum(axis=0) * self.grid.dv

    def v_marginal(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.grid.dg

    def with_values(self, values, t=None) -> "DensityField":
        return replace(self, values=values, t=self.t if t is None else t, meta={})


def check_same_grid(a: DensityField, b: DensityField) -> None:
    if not a.grid.same_as(b.grid):
        raise GridError(f"grid mismatch: {a.grid} vs {b.grid}")


def total_variation(a: DensityField, b: DensityField) -> float:
    """Total variation distance ``sup_A |a(A) - b(A)|``, i.e. half the L1 distance of the cell masses."""
    check_same_grid(a, b)
    diff = np.abs(a.masses() - b.masses()).sum() + abs(a.overflow_mass - b.overflow_mass)
    return 0.5 * float(diff)


def coarsening_factor(n: int, target: int) -> int:
    """Smallest factor ``f`` dividing ``n`` with ``n // f <= target``."""
    for f in range(1, n + 1):
        if n % f == 0 and n // f <= target:
            return f
    return n


def coarsen(fld: DensityField, fv: int, fg: int) -> DensityField:
    """Merge ``fv x fg`` blocks of cells, preserving mass."""
    g = fld.grid
    if g.n_v % fv or g.n_g % fg:
        raise GridError(f"factors ({fv}, {fg}) do not divide grid {g.shape}")
    new = GridSpec(g.n_v // fv, g.n_g // fg, g.g_max, g.v_min, g.v_max)
    m = fld.masses().reshape(new.n_v, fv, new.n_g, fg).sum(axis=(1, 3))
    return DensityField(new, m / new.cell_area, fld.t, fld.overflow_mass, fld.overflow_g)


def coarsen_to(fld: DensityField, max_cells_v: int = 20, max_cells_g: int = 20) -> DensityField:
    return coarsen(fld, coarsening_factor(fld.grid.n_v, max_cells_v),
                   coarsening_factor(fld.grid.n_g, max_cells_g))


def histogram(v, g, grid: GridSpec, t: float = 0.0, weights=None) -> DensityField:
    """Normalized 2-D histogram of points; ``g > g_max`` goes to the overflow bin."""
    v = np.asarray(v, dtype=float)
    g = np.asarray(g, dtype=float)
    n = v.size
    if n == 0:
        raise ValueError("cannot histogram an empty sample")
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, float) / np.sum(weights)
    inside = g <= grid.g_max
    iv = np.clip(((v[inside] - grid.v_min) / grid.dv).astype(np.int64), 0, grid.n_v - 1)
    ig = np.clip((g[inside] / grid.dg).astype(np.int64), 0, grid.n_g - 1)
    m = np.bincount(iv * grid.n_g + ig, weights=w[inside],
                    minlength=grid.n_v * grid.n_g).reshape(grid.shape)
    over = ~inside
    o_mass = float(w[over].sum())
    o_g = float(np.sum(w[over] * g[over]) / o_mass) if o_mass > 0 else float("nan")
    return DensityField(grid, m / grid.cell_area, t, o_mass, o_g)
