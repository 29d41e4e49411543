"""
Finite-volume solver for the voltage-conductance Fokker-Planck equation

    dp/dt + d/dv (J p) = d/dg ((g - g_in) p) + a d^2p/dg^2

on ``[V_R, V_F) x [0, g_max]``.

Discretization
--------------
* v: first-order upwind fluxes with the sign of ``J`` at each face.
* g: Chang-Cooper (Scharfetter-Gummel) fluxes for drift ``-(g - g_in)`` and
  diffusion ``a``; zero flux at ``g = 0`` and ``g = g_max``. For the linear
  OU drift the discrete zero-flux state is the Gaussian sampled at cell
  centres, exactly.
* v = V_F face: in a row with ``J(V_F, g) > 0`` the outgoing flux re-enters
  the same row through the ``v = V_R`` face. Elsewhere the face carries no
  flux and the ``v = V_R`` face has no inflow, the discrete Dirichlet case.

The assembled matrix ``A`` (``dp/dt = A p`` on cell values, C-order
``(n_v, n_g)``) has zero column sums and non-negative off-diagonal entries,
so backward Euler conserves mass and preserves positivity.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import exprel

from .grid import DensityField, GridSpec
from .model import ModelParams, critical_conductance, velocity


class SolverError(RuntimeError):
    """Numerical failure; ``residual`` is the last measured residual when known."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CFLError(SolverError):
    pass


def bernoulli(w):
    """``B(w) = w / (e^w - 1)``, with ``B(0) = 1``."""
    return 1.0 / exprel(w)


def ou_operator(params: ModelParams, n_g: int, g_max: float) -> sp.csr_matrix:
    """Chang-Cooper generator of the reflected OU density on ``[0, g_max]``.

    Acts on cell values of a 1-D density; columns sum to zero.
    """
    dg = g_max / n_g
    g_face = dg * np.arange(1, n_g)
    w = -(g_face - params.g_in) * dg / params.a
    down = params.a / dg**2 * bernoulli(-w)   # coefficient of p_j in flux j -> j+1
    up = params.a / dg**2 * bernoulli(w)      # coefficient of p_{j+1} in flux j+1 -> j
    j = np.arange(n_g - 1)
    rows = np.concatenate([j, j + 1, j, j + 1])
    cols = np.concatenate([j, j, j + 1, j + 1])
    vals = np.concatenate([-down, down, up, -up])
    return sp.csr_matrix(sp.coo_matrix((vals, (rows, cols)), shape=(n_g, n_g)))


@dataclass
class FpOperator:
    """Assembled generator plus the boundary data needed for flux diagnostics.

    ``outflow_speed[j]`` is ``J(V_F, g_j)`` in rows that fire and 0 elsewhere.
    Factorizations of ``I - dt A`` are memoized per ``dt``.
    """

    params: ModelParams
    grid: GridSpec
    matrix: sp.csc_matrix
    outflow_speed: np.ndarray
    reinject_rows: np.ndarray
    _lu: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return self.grid.n_v * self.grid.n_g

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (self.matrix @ values.ravel()).reshape(self.grid.shape)

    def factor(self, dt: float):
        if dt not in self._lu:
            M = (sp.identity(self.size, format="csc") - dt * self.matrix).tocsc()
            self._lu[dt] = (M, spla.splu(M))
        return self._lu[dt]

    def cfl_bound(self) -> float:
        """Largest explicit Euler step keeping ``I + dt A`` entrywise non-negative."""
        return 1.0 / float(np.max(-self.matrix.diagonal()))


def assemble(params: ModelParams, grid: GridSpec) -> FpOperator:
    """Build the sparse generator for ``params`` on ``grid``.

    Raises
    ------
    vgkinetic.grid.GridError
        If the grid is too coarse, truncates too much of the Gaussian tail, or
        has no cell face at ``g_F``.
    """
    grid.validate_solver_grid(params)
    n_v, n_g = grid.shape
    dv = grid.dv
    gc = grid.g_centers
    idx = np.arange(n_v * n_g).reshape(n_v, n_g)
    rows, cols, vals = [], [], []

    def add(r, c, x):
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(np.broadcast_to(x, r.shape).ravel())

    # v-advection through interior faces
    if n_v > 1:
        vf = grid.v_edges[1:-1][:, None]
        Jf = velocity(params, vf, gc[None, :])
        jp, jm = np.maximum(Jf, 0.0) / dv, np.minimum(Jf, 0.0) / dv
        left, right = idx[:-1], idx[1:]
        add(left, left, -jp)
        add(right, left, jp)
        add(left, right, -jm)
        add(right, right, jm)

    # threshold face: outflow re-enters at V_R in the same row
    J_F = velocity(params, params.V_F, gc)
    fire = J_F > 0
    speed = np.where(fire, J_F, 0.0)
    last, first = idx[-1, fire], idx[0, fire]
    add(last, last, -speed[fire] / dv)
    add(first, last, speed[fire] / dv)

    # g-direction, identical in every voltage column
    A_g = ou_operator(params, n_g, grid.g_max).tocoo()
    for i in range(n_v):
        add(idx[i, A_g.row], idx[i, A_g.col], A_g.data)

    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_v * n_g,) * 2).tocsc()
    A.sum_duplicates()
    return FpOperator(params, grid, A, speed, np.flatnonzero(fire))


def step(op: FpOperator, fld: DensityField, dt: float, scheme: str = "implicit",
         check_tol: float = 1e-9) -> DensityField:
    """Advance a density by ``dt``.

    ``scheme="implicit"`` solves ``(I - dt A) p_new = p`` with a cached sparse
    LU factorization; ``"explicit"`` is forward Euler and refuses steps above
    :meth:`FpOperator.cfl_bound`.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if not fld.grid.same_as(op.grid):
        raise ValueError("field and operator grids differ")
    p = fld.values.ravel()
    if scheme == "explicit":
        bound = op.cfl_bound()
        if dt > bound:
            raise CFLError(f"dt={dt!r} exceeds the explicit stability bound {bound!r}")
        new = p + dt * (op.matrix @ p)
    elif scheme == "implicit":
        M, lu = op.factor(dt)
        new = lu.solve(p)
        res = np.abs(M @ new - p).sum() * op.grid.cell_area
        if not res <= check_tol * max(1.0, np.abs(p).sum() * op.grid.cell_area):
            raise SolverError(f"linear solve residual {res:.3e} above {check_tol:.1e}", res)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return fld.with_values(new.reshape(op.grid.shape), t=fld.t + dt)


def evolve(op: FpOperator, fld: DensityField, dt: float, n_steps: int,
           scheme: str = "implicit", every: int = 1, callback=None) -> DensityField:
    """Take ``n_steps`` steps; ``callback(field)`` is called every ``every`` steps."""
    for k in range(1, n_steps + 1):
        fld = step(op, fld, dt, scheme)
        if callback is not None and k % every == 0:
            callback(fld)
    return fld


def residual(op: FpOperator, values: np.ndarray) -> float:
    """``sum |A p| dv dg``: the stationarity defect in mass per unit time."""
    return float(np.abs(op.matrix @ values.ravel()).sum() * op.grid.cell_area)


def steady_state(op: FpOperator, dt: float = 100.0, tol: float = 1e-10, max_iter: int = 200,
                 seed_field: DensityField | None = None) -> DensityField:
    """Stationary density by inverse-power iteration on ``I - dt A``.

    Each iteration applies ``(I - dt A)^{-1}`` and renormalizes to unit mass.
    The iteration stops once ``sum |A p| dv dg <= tol``.
    """
    g = op.grid
    if seed_field is None:
        p = np.full(op.size, 1.0 / (g.n_v * g.n_g * g.cell_area))
    else:
        p = np.asarray(seed_field.values, float).ravel().copy()
        if np.any(p < 0) or p.sum() <= 0:
            raise ValueError("seed field must be non-negative with positive mass")
    _, lu = op.factor(dt)
    res = np.inf
    for it in range(1, max_iter + 1):
        p = lu.solve(p)
        p /= p.sum() * g.cell_area
        res = residual(op, p)
        if res <= tol:
            out = DensityField(g, p.reshape(g.shape), t=np.inf)
            out.meta.update(residual=res, iterations=it)
            return out
    raise SolverError(f"steady state not converged after {max_iter} iterations, "
                      f"residual {res:.3e}", res)


def boundary_flux_profile(op: FpOperator, fld: DensityField, face: str) -> np.ndarray:
    """Per-g-cell flux ``J p`` through ``face`` (``"V_R"`` or ``"V_F"``).

    These are the fluxes the scheme itself uses: the upwind outflow at
    ``V_F`` and the reinjected inflow at ``V_R``.
    """
    out = op.outflow_speed * fld.values[-1]
    if face == "V_F":
        return out
    if face == "V_R":
        inflow = np.zeros_like(out)
        inflow[op.reinject_rows] = out[op.reinject_rows]
        return inflow
    raise ValueError(f"face must be 'V_R' or 'V_F', got {face!r}")


def firing_rate(op: FpOperator, fld: DensityField) -> float:
    """Probability flux through the threshold, ``sum_j J(V_F, g_j) p(V_F^-, g_j) dg``."""
    return float(boundary_flux_profile(op, fld, "V_F").sum() * op.grid.dg)


def g_marginal(fld: DensityField) -> np.ndarray:
    return fld.g_marginal()
