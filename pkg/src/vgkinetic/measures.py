"""Initial measures usable by both the particle simulator and the PDE solver.

Each measure can draw particle samples (``sample(rng, size)``) and project
itself onto a solver grid (``to_field(grid)``).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import DensityField, GridSpec, histogram


@dataclass(frozen=True)
class PointMass:
    v: float
    g: float

    def sample(self, rng, size):
        return np.full(size, self.v), np.full(size, self.g)

    def to_field(self, grid: GridSpec) -> DensityField:
        # the cell containing the atom takes all of the mass
        return histogram([self.v], [self.g], grid)


@dataclass(frozen=True)
class UniformBox:
    """Uniform law on ``[v_lo, v_hi) x [g_lo, g_hi]``."""

    v_lo: float
    v_hi: float
    g_lo: float
    g_hi: float

    def __post_init__(self):
        if not (self.v_hi > self.v_lo and self.g_hi > self.g_lo and self.g_lo >= 0):
            raise ValueError(f"degenerate or invalid box {self}")

    def sample(self, rng, size):
        u = rng.random((2, size))
        return (self.v_lo + (self.v_hi - self.v_lo) * u[0],
                self.g_lo + (self.g_hi - self.g_lo) * u[1])

    def to_field(self, grid: GridSpec) -> DensityField:
        """Exact cell-overlap projection."""
        def overlap(edges, lo, hi):
            return np.clip(np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo), 0, None)

        fv = overlap(grid.v_edges, self.v_lo, self.v_hi)
        fg = overlap(grid.g_edges, self.g_lo, self.g_hi)
        mass = np.outer(fv, fg) / ((self.v_hi - self.v_lo) * (self.g_hi - self.g_lo))
        g_over = max(0.0, self.g_hi - max(self.g_lo, grid.g_max))
        o_mass = g_over / (self.g_hi - self.g_lo)
        o_g = 0.5 * (max(self.g_lo, grid.g_max) + self.g_hi) if o_mass > 0 else float("nan")
        return DensityField(grid, mass / grid.cell_area, 0.0, o_mass, o_g)


@dataclass(frozen=True)
class SampleSet:
    """Empirical law of user-provided ``(v, g)`` samples.

    When asked for as many particles as there are rows, rows are used in
    order; otherwise rows are resampled with replacement.
    """

    v: tuple
    g: tuple

    @classmethod
    def from_csv(cls, path) -> "SampleSet":
        data = np.loadtxt(Path(path), delimiter=",", comments="#", ndmin=2)
        if data.shape[1] < 2:
            raise ValueError(f"{path}: need two columns v, g")
        return cls(tuple(data[:, 0]), tuple(data[:, 1]))

    def sample(self, rng, size):
        v, g = np.asarray(self.v), np.asarray(self.g)
        if size == v.size:
            return v.copy(), g.copy()
        idx = rng.integers(0, v.size, size)
        return v[idx], g[idx]

    def to_field(self, grid: GridSpec) -> DensityField:
        return histogram(self.v, self.g, grid)


@dataclass(frozen=True, eq=False)
class FieldMeasure:
    """Piecewise-uniform law of a :class:`DensityField`, e.g. a PDE steady state."""

    field: DensityField

    def sample(self, rng, size):
        g = self.field.grid
        p = np.clip(self.field.masses().ravel(), 0, None)
        cell = rng.choice(p.size, size=size, p=p / p.sum())
        u = rng.random((2, size))
        iv, ig = np.divmod(cell, g.n_g)
        return g.v_min + (iv + u[0]) * g.dv, (ig + u[1]) * g.dg

    def to_field(self, grid: GridSpec) -> DensityField:
        if not grid.same_as(self.field.grid):
            raise ValueError("field measure lives on a different grid")
        return self.field.with_values(self.field.values.copy(), t=0.0)


def parse_measure(text: str, stationary: DensityField | None = None):
    """Parse ``point:v,g``, ``uniform:v_lo,v_hi,g_lo,g_hi``, ``file:PATH`` or ``stationary``.

    ``stationary`` needs the steady field to be passed in.
    """
    kind, _, rest = text.strip().partition(":")
    kind = kind.strip().lower()
    if kind == "stationary":
        if stationary is None:
            raise ValueError("'stationary' needs a steady-state field")
        return FieldMeasure(stationary)
    if kind == "file":
        return SampleSet.from_csv(rest.strip())
    nums = [float(x) for x in rest.split(",")] if rest.strip() else []
    if kind == "point" and len(nums) == 2:
        return PointMass(*nums)
    if kind == "uniform" and len(nums) == 4:
        return UniformBox(*nums)
    raise ValueError(f"cannot parse initial measure {text!r}")
