"""
Cross-checks between the particle and PDE solvers and against structural
identities of the model: boundary flux matching, the closed conductance
marginal equation, the stationary conductance law and the firing rate.

Each check returns a :class:`CheckResult` carrying the measured value, its
tolerance and the runs that produced it; :func:`run_validation` bundles the
full suite into a :class:`ValidationReport`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fpsolver, io
from .grid import DensityField, GridSpec, coarsen_to, coarsening_factor, histogram, total_variation
from .measures import UniformBox
from .model import ModelParams
from .particle import SimConfig, SpikeRecords, firing_rate, simulate_ensemble
from .reference import stationary_g_cell_masses


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tolerance: float
    passed: bool
    provenance: str
    detail: str = ""
    evidence: dict = field(default_factory=dict, compare=False)


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    def add(self, check: CheckResult) -> CheckResult:
        self.checks.append(check)
        return check

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary(self) -> dict:
        out = {"passed": self.passed, "n_checks": len(self.checks)}
        for c in self.checks:
            out[f"{c.name}.value"] = c.value
            out[f"{c.name}.tolerance"] = c.tolerance
            out[f"{c.name}.passed"] = c.passed
            out[f"{c.name}.provenance"] = c.provenance
            if c.detail:
                out[f"{c.name}.detail"] = c.detail
        return out

    def write(self, out_dir, header: str) -> list[Path]:
        out_dir = Path(out_dir)
        paths = [io.write_summary(out_dir / "validation_summary.txt", self.summary(), header)]
        for c in self.checks:
            if c.evidence:
                paths.append(io.write_csv(out_dir / f"evidence_{c.name}.csv", c.evidence, header))
        return paths


def _check(name, value, tol, provenance, detail="", evidence=None) -> CheckResult:
    value = float(value)
    return CheckResult(name, value, float(tol), bool(value <= tol), provenance, detail,
                       evidence or {})


def bump(g, lo: float, hi: float) -> np.ndarray:
    """Smooth bump ``exp(-1 / (1 - x^2))`` on ``(lo, hi)``, zero outside."""
    x = (2.0 * np.asarray(g, float) - (lo + hi)) / (hi - lo)
    out = np.zeros_like(x)
    m = np.abs(x) < 1
    out[m] = np.exp(-1.0 / (1.0 - x[m] ** 2))
    return out


def _bump_family(lo: float, hi: float, k: int = 3):
    """``k`` overlapping bumps covering ``(lo, hi)`` plus one spanning it."""
    w = (hi - lo) / (k + 1)
    out = [(lo + i * w, lo + (i + 2) * w) for i in range(k)]
    return out + [(lo, hi)]


# -- boundary structure -------------------------------------------------------


def check_boundary_fluxes(op: fpsolver.FpOperator, steady: DensityField,
                          tol: float = 1e-12) -> CheckResult:
    """Flux matching above ``g_F`` and vanishing boundary flux below it.

    Measures the largest of: per-cell ``|flux(V_F) - flux(V_R)|`` on
    ``g > g_F``; the bump-weighted difference of the two face fluxes on
    ``(g_F, g_max)``; and the bump-weighted flux through either face on
    ``(0, g_F)``.
    """
    grid, gF = op.grid, op.params.g_F
    gc, dg = grid.g_centers, grid.dg
    out = fpsolver.boundary_flux_profile(op, steady, "V_F")
    inn = fpsolver.boundary_flux_profile(op, steady, "V_R")
    above = gc > gF
    cell_gap = float(np.max(np.abs(out - inn)[above], initial=0.0))
    upper = [abs(float((bump(gc, lo, hi) * (out - inn)).sum() * dg))
             for lo, hi in _bump_family(gF, grid.g_max)]
    lower = [abs(float((bump(gc, lo, hi) * f).sum() * dg))
             for lo, hi in _bump_family(0.0, gF) for f in (out, inn)]
    value = max(cell_gap, *upper, *lower)
    detail = (f"cell_gap_above_gF={cell_gap:.3e} weighted_gap_above_gF={max(upper):.3e} "
              f"weighted_flux_below_gF={max(lower):.3e}")
    return _check("boundary_fluxes", value, tol, f"pde:{grid.n_v}x{grid.n_g} steady", detail,
                  {"g": gc, "flux_V_F": out, "flux_V_R": inn})


def check_reinjection_profile(op: fpsolver.FpOperator, steady: DensityField,
                              spikes: SpikeRecords, window, max_bins: int = 20,
                              tol: float = 0.1, provenance: str = "particle") -> CheckResult:
    """TV between the normalized spike-conductance histogram and the PDE threshold flux."""
    t0, t1 = window
    sel = (spikes.spike_time > t0) & (spikes.spike_time <= t1)
    gs = spikes.g_at_spike[sel]
    grid = op.grid
    f = coarsening_factor(grid.n_g, max_bins)
    edges = grid.g_edges[::f]
    pde = fpsolver.boundary_flux_profile(op, steady, "V_F").reshape(-1, f).sum(axis=1)
    pde = np.append(pde, 0.0)
    if gs.size == 0:
        return _check("reinjection_profile", math.inf, tol, provenance, "no spikes in window")
    emp = np.append(np.histogram(gs, edges)[0], np.count_nonzero(gs > edges[-1])).astype(float)
    pde_n, emp_n = pde / pde.sum(), emp / emp.sum()
    value = 0.5 * np.abs(pde_n - emp_n).sum()
    mids = np.append(0.5 * (edges[1:] + edges[:-1]), np.inf)
    return _check("reinjection_profile", value, tol, f"pde+{provenance}",
                  f"spikes={gs.size} window=({t0}, {t1}]",
                  {"g_mid": mids, "pde": pde_n, "particle": emp_n})


# -- conductance marginal -----------------------------------------------------


def evolve_g_marginal(params: ModelParams, grid: GridSpec, m0: np.ndarray, dt: float,
                      n_steps: int) -> list[np.ndarray]:
    """Implicit steps of the 1-D reflected OU operator; returns ``n_steps + 1`` densities."""
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla

    A = fpsolver.ou_operator(params, grid.n_g, grid.g_max)
    lu = spla.splu((sp.identity(grid.n_g, format="csc") - dt * A).tocsc())
    out = [np.asarray(m0, float)]
    for _ in range(n_steps):
        out.append(lu.solve(out[-1]))
    return out


def check_marginal_equation(params: ModelParams, fields, dt: float, steps_between: int = 1,
                            tol: float = 1e-8) -> CheckResult:
    """Compare the g-marginals of a PDE run with the 1-D OU equation run on its own.

    ``fields`` are consecutive PDE states ``steps_between`` implicit steps
    of size ``dt`` apart.
    """
    fields = list(fields)
    grid = fields[0].grid
    ref = evolve_g_marginal(params, grid, fields[0].g_marginal(), dt,
                            steps_between * (len(fields) - 1))[::steps_between]
    tv = [0.5 * float(np.abs(f.g_marginal() - r).sum() * grid.dg) for f, r in zip(fields, ref)]
    return _check("marginal_equation", max(tv), tol, f"pde:{grid.n_v}x{grid.n_g} dt={dt}",
                  f"max over {len(fields)} times",
                  {"t": [f.t for f in fields], "tv": tv})


def _g_bins(grid: GridSpec, max_bins: int):
    f = coarsening_factor(grid.n_g, max_bins)
    return f, grid.g_edges[::f]


def _binned_tv(samples, edges, masses) -> float:
    """TV between a sample histogram and cell masses, with an overflow bin above ``edges[-1]``."""
    n = samples.size
    counts = np.histogram(samples, edges)[0] / n
    over = np.count_nonzero(samples > edges[-1]) / n
    return 0.5 * float(np.abs(counts - masses[:-1]).sum() + abs(over - masses[-1]))


def check_particle_marginal(params: ModelParams, grid: GridSpec, mu0, g_samples, t: float,
                            dt: float = 0.01, max_bins: int = 20, tol: float = 0.02,
                            provenance: str = "particle") -> CheckResult:
    """Particle g-histogram at time ``t`` against the 1-D OU equation from the same start."""
    m0 = mu0.to_field(grid).g_marginal()
    m_t = evolve_g_marginal(params, grid, m0, dt, round(t / dt))[-1]
    f, edges = _g_bins(grid, max_bins)
    masses = np.append((m_t * grid.dg).reshape(-1, f).sum(axis=1), 0.0)
    value = _binned_tv(np.asarray(g_samples), edges, masses)
    return _check("particle_g_marginal", value, tol, f"1d-pde:{grid.n_g} dt={dt}+{provenance}",
                  f"t={t} bins={edges.size - 1}")


def check_stationary_marginal_particle(params: ModelParams, g_samples, edges, tol: float = 0.02,
                                       provenance: str = "particle") -> CheckResult:
    """Particle g-histogram against quadrature masses of the stationary truncated Gaussian."""
    edges = np.asarray(edges, float)
    masses = stationary_g_cell_masses(params, edges)
    masses = np.append(masses, 1.0 - masses.sum())
    value = _binned_tv(np.asarray(g_samples), edges, masses)
    return _check("stationary_g_marginal_particle", value, tol, f"quadrature+{provenance}",
                  f"bins={edges.size - 1} width={edges[1] - edges[0]:.4g}",
                  {"g_lo": edges[:-1], "oracle_mass": masses[:-1]})


def check_stationary_marginal_pde(params: ModelParams, steady: DensityField,
                                  tol: float = 1e-3) -> CheckResult:
    """Largest per-cell gap between the PDE steady g-marginal and the exact cell average."""
    grid = steady.grid
    exact = stationary_g_cell_masses(params, grid.g_edges, upper=grid.g_max) / grid.dg
    got = steady.g_marginal()
    err = np.abs(got - exact)
    return _check("stationary_g_marginal_pde", err.max(), tol,
                  f"quadrature+pde:{grid.n_v}x{grid.n_g} steady",
                  f"max_rel_err_bulk={np.max(err[exact > 1e-3] / exact[exact > 1e-3]):.3e}",
                  {"g": grid.g_centers, "pde": got, "oracle": exact})


# -- cross-solver agreement ---------------------------------------------------


@dataclass(frozen=True)
class Budget:
    """Frozen tolerance law ``C1 sqrt(K / n) + C2 (dv + dg)``.

    ``K`` is the number of comparison cells, ``n`` the ensemble size and
    ``dv, dg`` the PDE grid spacing. The constants come from the reference
    run in ``demos/calibrate_budget.py`` and must not be retuned.
    """

    C1: float = 0.36
    C2: float = 0.14

    def tolerance(self, n: int, n_cells: int, dv: float, dg: float) -> float:
        return self.C1 * math.sqrt(n_cells / n) + self.C2 * (dv + dg)

    def explain(self, n, n_cells, dv, dg) -> str:
        return (f"{self.C1}*sqrt({n_cells}/{n}) + {self.C2}*({dv:.4g}+{dg:.4g}) "
                f"= {self.tolerance(n, n_cells, dv, dg):.4g}")


FROZEN_BUDGET = Budget()


def pde_snapshots(op: fpsolver.FpOperator, mu0, times, dt: float = 0.01) -> dict:
    """PDE fields at ``times`` (multiples of ``dt``) starting from ``mu0``."""
    fld = mu0.to_field(op.grid)
    targets = sorted(set(float(t) for t in times))
    out = {}
    if targets and targets[0] == 0.0:
        out[0.0] = fld
    k = 0
    for t in targets:
        n = round(t / dt)
        if abs(n * dt - t) > 1e-9 * max(1.0, t):
            raise ValueError(f"time {t} is not a multiple of dt={dt}")
        if n > k:
            fld = fpsolver.evolve(op, fld, dt, n - k)
            k = n
        out[t] = fld
    return out


def compare_to_pde(particle_v, particle_g, pde_field: DensityField, n: int,
                   budget: Budget = FROZEN_BUDGET, max_cells: int = 20):
    """``(tv, tolerance, explanation)`` for one snapshot on the coarsened PDE grid."""
    coarse = coarsen_to(pde_field, max_cells, max_cells)
    hist = histogram(particle_v, particle_g, coarse.grid)
    fine = pde_field.grid
    k = coarse.grid.n_v * coarse.grid.n_g
    tv = total_variation(hist, coarse)
    return tv, budget.tolerance(n, k, fine.dv, fine.dg), budget.explain(n, k, fine.dv, fine.dg)


def cross_validate(params: ModelParams, mu0, times, n_particles: int, grid: GridSpec,
                   seed: int = 0, pde_dt: float = 0.01, particle_dt: float = 0.01,
                   budget: Budget = FROZEN_BUDGET, threads: int = 1,
                   op: fpsolver.FpOperator | None = None, result=None) -> CheckResult:
    """TV between particle histograms and PDE fields at each time, against the frozen budget.

    A precomputed particle ``result`` with snapshots at ``times`` may be
    passed to avoid rerunning the ensemble.
    """
    times = tuple(float(t) for t in times)
    op = op or fpsolver.assemble(params, grid)
    if result is None:
        cfg = SimConfig(particle_dt, max(times), n_particles, seed, times)
        result = simulate_ensemble(params, cfg, mu0, threads=threads)
    fields = pde_snapshots(op, mu0, times, pde_dt)
    rows = []
    for t in times:
        s = result.at(t)
        rows.append((t, *compare_to_pde(s.v, s.g, fields[t], s.v.size, budget)))
    worst = max(rows, key=lambda r: r[1] - r[2])
    tol = rows[0][2]
    return _check("cross_validate", max(r[1] for r in rows), tol,
                  f"pde:{grid.n_v}x{grid.n_g} dt={pde_dt}+particle:n={result.v.shape[1]} "
                  f"dt={particle_dt} seed={seed}",
                  f"budget {worst[3]}; worst t={worst[0]} tv={worst[1]:.4g}",
                  {"t": [r[0] for r in rows], "tv": [r[1] for r in rows],
                   "tolerance": [r[2] for r in rows]})


def check_steady_vs_particle(steady: DensityField, particle_v, particle_g,
                             budget: Budget = FROZEN_BUDGET, provenance: str = "particle"):
    n = np.asarray(particle_v).size
    tv, tol, text = compare_to_pde(particle_v, particle_g, steady, n, budget)
    return _check("steady_vs_particle", tv, tol, f"pde steady+{provenance}", f"budget {text}")


# -- firing rate --------------------------------------------------------------


def _relative_gap(a: float, b: float) -> float:
    if a == 0 and b == 0:
        return 0.0
    if b == 0:
        return math.inf
    return abs(a - b) / abs(b)


def check_firing_rate(op: fpsolver.FpOperator, steady: DensityField, spikes: SpikeRecords,
                      window, n_particles: int, tol: float = 0.05,
                      provenance: str = "particle") -> CheckResult:
    """Relative gap between the empirical spike rate and the PDE threshold flux."""
    pde = fpsolver.firing_rate(op, steady)
    emp = firing_rate(spikes, window, n_particles)
    return _check("firing_rate", _relative_gap(emp, pde), tol, f"pde steady+{provenance}",
                  f"empirical={emp:.6g} pde={pde:.6g} window={tuple(window)}")


def check_dt_robustness(params: ModelParams, mu0, n_particles: int, window, dt: float,
                        seed: int = 0, tol: float = 0.01, threads: int = 1,
                        coarse_spikes: SpikeRecords | None = None) -> CheckResult:
    """Relative change of the empirical firing rate when ``dt`` is halved."""
    rates = []
    for step in (dt, dt / 2):
        if step == dt and coarse_spikes is not None:
            spikes = coarse_spikes
        else:
            cfg = SimConfig(step, window[1], n_particles, seed)
            spikes = simulate_ensemble(params, cfg, mu0, threads=threads).spikes
        rates.append(firing_rate(spikes, window, n_particles))
    return _check("dt_robustness", _relative_gap(rates[1], rates[0]), tol,
                  f"particle:n={n_particles} dt={dt},{dt / 2} seed={seed}",
                  f"rate(dt)={rates[0]:.6g} rate(dt/2)={rates[1]:.6g}")


# -- full suite ---------------------------------------------------------------


@dataclass(frozen=True)
class ValidationConfig:
    n_v: int = 200
    n_g: int = 200
    g_max: float = 8.0
    n_particles: int = 100_000
    particle_dt: float = 0.01
    pde_dt: float = 0.01
    seed: int = 0
    times: tuple = (1.0, 5.0, 20.0)
    window: tuple = (10.0, 20.0)
    marginal_time: float = 2.0
    stationary_time: float = 10.0
    initial: object = UniformBox(0.0, 1.0, 0.0, 2.0)
    budget: Budget = FROZEN_BUDGET
    check_dt: bool = True

    def grid(self) -> GridSpec:
        return GridSpec(self.n_v, self.n_g, self.g_max)


def run_validation(params: ModelParams, cfg: ValidationConfig = ValidationConfig(),
                   threads: int = 1) -> ValidationReport:
    """Every check on one shared particle ensemble and one PDE operator."""
    report = ValidationReport()
    grid = cfg.grid()
    op = fpsolver.assemble(params, grid)
    steady = fpsolver.steady_state(op)
    mu0 = cfg.initial
    horizon = max(max(cfg.times), cfg.window[1], cfg.stationary_time, cfg.marginal_time)
    snaps = sorted({*cfg.times, cfg.marginal_time, cfg.stationary_time, horizon})
    sim = SimConfig(cfg.particle_dt, horizon, cfg.n_particles, cfg.seed, tuple(snaps))
    res = simulate_ensemble(params, sim, mu0, threads=threads)
    prov = f"particle:n={cfg.n_particles} dt={cfg.particle_dt} seed={cfg.seed}"

    report.add(check_boundary_fluxes(op, steady))
    report.add(check_reinjection_profile(op, steady, res.spikes, cfg.window, provenance=prov))
    report.add(check_stationary_marginal_pde(params, steady))
    stat_edges = _g_bins(grid, 20)[1]
    report.add(check_stationary_marginal_particle(params, res.at(cfg.stationary_time).g,
                                                  stat_edges, provenance=prov))
    report.add(check_particle_marginal(params, grid, mu0, res.at(cfg.marginal_time).g,
                                       cfg.marginal_time, cfg.pde_dt, provenance=prov))

    every = max(1, round(0.1 / cfg.pde_dt))
    fields = [mu0.to_field(grid)]
    fpsolver.evolve(op, fields[0], cfg.pde_dt, every * round(cfg.marginal_time / 0.1),
                    every=every, callback=fields.append)
    report.add(check_marginal_equation(params, fields, cfg.pde_dt, every))

    report.add(cross_validate(params, mu0, cfg.times, cfg.n_particles, grid, cfg.seed,
                              cfg.pde_dt, cfg.particle_dt, cfg.budget, op=op, result=res))
    last = res.at(horizon)
    report.add(check_steady_vs_particle(steady, last.v, last.g, cfg.budget, prov))
    report.add(check_firing_rate(op, steady, res.spikes, cfg.window, cfg.n_particles,
                                 provenance=prov))
    if cfg.check_dt:
        report.add(check_dt_robustness(params, mu0, cfg.n_particles, cfg.window,
                                       cfg.particle_dt, cfg.seed, threads=threads,
                                       coarse_spikes=res.spikes if horizon == cfg.window[1]
                                       else None))
    return report
