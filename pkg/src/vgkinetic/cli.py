"""
Command-line driver.

    vgkinetic {simulate,solve,ergodicity,validate,constants} --config FILE
              [--out DIR] [--seed N] [--threads N]

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 validation failure. Every artifact starts with a provenance line holding
the config hash, the seed and the tool version; the thread count never
changes any output byte.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import ergodicity as erg
from . import fpsolver, io
from .config import ConfigError, RunConfig, load_config
from .grid import GridError
from .measures import parse_measure
from .model import HarrisConstructionError, ParameterError
from .particle import (ParticleAbortError, SimConfig, SimulationError, firing_rate,
                       initial_states, simulate_ensemble, simulate_ids)
from .validate import Budget, FROZEN_BUDGET, ValidationConfig, run_validation

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 2, 3, 4


class _Ctx:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.run["out"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.header = io.provenance(cfg.sha256, cfg.seed)
        self.threads = cfg.run["threads"]

    def csv(self, name, columns):
        return io.write_csv(self.out / name, columns, self.header)

    def summary(self, name, items):
        return io.write_summary(self.out / name, items, self.header)


def _log(msg):
    print(msg, file=sys.stderr)


# -- simulate -----------------------------------------------------------------


def _trajectory_columns(params, res, spikes):
    """Per-step path of one particle with the threshold/reset pairs spliced in."""
    t, v, g = res.times, res.v[:, 0], res.g[:, 0]
    ev = np.zeros(t.size, dtype=np.int8)
    st, sg = spikes.spike_time, spikes.g_at_spike
    t = np.concatenate([t, st, st])
    v = np.concatenate([v, np.full(st.size, params.V_F), np.full(st.size, params.V_R)])
    g = np.concatenate([g, sg, sg])
    ev = np.concatenate([ev, np.ones(st.size, np.int8), np.full(st.size, 2, np.int8)])
    order = np.lexsort((np.where(ev == 0, 3, ev), t))
    names = np.array(["step", "threshold", "reset"])
    return {"t": t[order], "v": v[order], "g": g[order], "event": names[ev[order]]}


def cmd_simulate(ctx: _Ctx) -> int:
    cfg, p, pa = ctx.cfg, ctx.cfg.params, ctx.cfg.particle
    mu = parse_measure(pa["initial"])
    sim = SimConfig(pa["dt"], pa["horizon"], pa["n_particles"], cfg.seed,
                    tuple(pa["snapshot_times"]), pa["conductance_mode"])
    try:
        res = simulate_ensemble(p, sim, mu, threads=ctx.threads)
    except ParticleAbortError as exc:
        _log(f"error: {exc}")
        return EXIT_NUMERIC
    n = sim.n_particles
    ctx.csv("snapshots.csv", {
        "t": np.repeat(res.times, n), "particle": np.tile(res.particle_ids, res.times.size),
        "v": res.v.ravel(), "g": res.g.ravel(), "local_time": res.local_time.ravel(),
        "spike_count": res.spike_count.ravel()})
    sp = res.spikes
    ctx.csv("spikes.csv", {"particle": sp.particle_id, "t": sp.spike_time, "g": sp.g_at_spike})

    # particle 0 again with every step recorded; same id, so the same path
    v0, g0 = initial_states(mu, cfg.seed, [0])
    steps = tuple(k * sim.dt for k in range(sim.n_steps + 1))
    one = simulate_ids(p, SimConfig(sim.dt, sim.horizon, 1, cfg.seed, steps,
                                    sim.conductance_mode), [0], v0, g0)
    ctx.csv("trajectory_particle0.csv", _trajectory_columns(p, one, one.spikes))
    rate = firing_rate(sp, pa["window"] or (0.0, sim.horizon), n)
    print(f"simulated {n} particle(s) to t={sim.horizon}; spikes={len(sp)} rate={rate:.6g}")
    return EXIT_OK


# -- solve --------------------------------------------------------------------


def cmd_solve(ctx: _Ctx) -> int:
    cfg, p, pd = ctx.cfg, ctx.cfg.params, ctx.cfg.pde
    op = fpsolver.assemble(p, cfg.pde_grid())
    grid = op.grid
    if pd["steady"]:
        steady = fpsolver.steady_state(op)
        ctx.csv("steady_density.csv", io.density_columns(steady))
        ctx.csv("flux_profiles.csv", {
            "g": grid.g_centers,
            "flux_V_F": fpsolver.boundary_flux_profile(op, steady, "V_F"),
            "flux_V_R": fpsolver.boundary_flux_profile(op, steady, "V_R")})
        ctx.csv("steady_g_marginal.csv", {"g": grid.g_centers, "density": steady.g_marginal()})
        ctx.summary("steady_summary.txt", {
            "n_v": grid.n_v, "n_g": grid.n_g, "g_max": grid.g_max,
            "residual": steady.meta["residual"], "iterations": steady.meta["iterations"],
            "mass": steady.total_mass(), "min_value": float(steady.values.min()),
            "firing_rate": fpsolver.firing_rate(op, steady)})
        print(f"steady state: residual={steady.meta['residual']:.3e} "
              f"firing_rate={fpsolver.firing_rate(op, steady):.6g}")
    if pd["transient"]:
        fld = parse_measure(pd["initial"]).to_field(grid)
        m0 = fld.total_mass()
        log = {"step": [0], "t": [0.0], "mass": [m0], "drift": [0.0],
               "min_value": [float(fld.values.min())]}
        for k in range(1, pd["steps"] + 1):
            fld = fpsolver.step(op, fld, pd["dt"], pd["scheme"])
            if k % pd["record_every"] == 0 or k == pd["steps"]:
                log["step"].append(k)
                log["t"].append(fld.t)
                log["mass"].append(fld.total_mass())
                log["drift"].append(abs(fld.total_mass() - m0))
                log["min_value"].append(float(fld.values.min()))
        ctx.csv("mass_drift.csv", log)
        ctx.csv("transient_density.csv", io.density_columns(fld))
        print(f"transient: {pd['steps']} {pd['scheme']} steps, max mass drift "
              f"{max(log['drift']):.3e}, min value {min(log['min_value']):.3e}")
    return EXIT_OK


# -- ergodicity ---------------------------------------------------------------


def _minorization_items(rep: erg.MinorizationReport, prefix=""):
    return {f"{prefix}R": rep.R, f"{prefix}T": rep.T, f"{prefix}status": rep.status,
            f"{prefix}eta_hat": rep.eta_hat, f"{prefix}eta_lcb": rep.eta_lcb,
            f"{prefix}confidence": rep.confidence, f"{prefix}n_per_point": rep.n_per_point,
            f"{prefix}n_points": len(rep.probe_points), f"{prefix}min_count": rep.min_count,
            f"{prefix}target_box": rep.target_box, f"{prefix}nu_density": 1.0 / rep.nu_area,
            f"{prefix}worst_point": rep.worst_point}


def cmd_ergodicity(ctx: _Ctx) -> int:
    cfg, p, er = ctx.cfg, ctx.cfg.params, ctx.cfg.ergodicity
    harris = cfg.model.harris()
    ctx.summary("harris_constants.txt", harris.as_dict())
    tasks = er["tasks"]
    failed = []

    if "lyapunov" in tasks:
        pts = erg.small_set_grid(p, er["lyapunov_R"], *er["lyapunov_points"])
        rep = erg.lyapunov_probe(p, pts, er["lyapunov_horizon"], er["lyapunov_n"],
                                 er["lyapunov_times"], er["particle_dt"], cfg.seed, harris,
                                 threads=ctx.threads)
        P, K = rep.f_hat.shape
        ctx.csv("lyapunov.csv", {
            "point": np.repeat(np.arange(P), K), "v0": np.repeat(pts[:, 0], K),
            "g0": np.repeat(pts[:, 1], K), "t": np.tile(rep.times, P),
            "f_hat": rep.f_hat.ravel(), "se": rep.se.ravel(), "bound": rep.bound.ravel()})
        first = rep.violations[0] if rep.violations else {}
        ctx.summary("lyapunov_summary.txt", {
            "passed": rep.passed, "R": er["lyapunov_R"], "n_points": P, "n_times": K,
            "n_per_point": rep.n, "margin": rep.margin, "T": rep.T, "alpha1": rep.alpha1,
            "alpha2": rep.alpha2, "violations": len(rep.violations),
            "first_violation_point": first.get("point", ""),
            "first_violation_t": first.get("t", "")})
        print(f"lyapunov: {'pass' if rep.passed else 'FAIL'} margin={rep.margin:.4g}")
        if not rep.passed:
            failed.append("lyapunov")

    mono = None
    if "monotonicity" in tasks:
        mono = erg.minorization_monotonicity(
            p, er["R_values"], tuple(er["probe_density"]), er["n_per_point"], cfg.model.v_r,
            cfg.model.g_r, cfg.seed, dt=er["particle_dt"], threads=ctx.threads)
        etas = [r.eta_hat for r in mono]
        ok = all(b <= a for a, b in zip(etas, etas[1:]))
        ctx.csv("monotonicity.csv", {
            "R": [r.R for r in mono], "T": [r.T for r in mono], "eta_hat": etas,
            "eta_lcb": [r.eta_lcb for r in mono], "status": [r.status for r in mono],
            "n_points": [len(r.probe_points) for r in mono]})
        print(f"minorization monotonicity in R: {'pass' if ok else 'FAIL'} eta_hat={etas}")
        if not ok:
            failed.append("monotonicity")

    if "minorization" in tasks:
        rep = None
        if mono is not None and mono[0].R == harris.R:
            rep = mono[0]
        if rep is None:
            rep = erg.minorization_probe(p, harris, tuple(er["probe_density"]),
                                         er["n_per_point"], seed=cfg.seed,
                                         dt=er["particle_dt"], threads=ctx.threads)
        ctx.summary("minorization_summary.txt", _minorization_items(rep))
        ctx.csv("minorization_points.csv", {"v": rep.probe_points[:, 0],
                                            "g": rep.probe_points[:, 1],
                                            "min_prob_in_K": rep.point_minima})
        print(f"minorization: {rep.status} eta_hat={rep.eta_hat:.4g} "
              f"lcb={rep.eta_lcb:.4g} T={rep.T:.6g}")
        if rep.status == "structural_failure":
            failed.append("minorization")
        elif rep.status != "pass":
            _log(f"warning: minorization {rep.status}; increase n_per_point")

    if "convergence" in tasks:
        op = fpsolver.assemble(p, cfg.pde_grid("ergodicity"))
        steady = fpsolver.steady_state(op)
        labels = list(er["initial_measures"])
        measures = [parse_measure(m, stationary=steady) for m in labels]
        wcfg = erg.WeightedTvConfig(cfg.model.beta, op.grid, p.g_in)
        reps = erg.convergence_study(
            p, measures, er["horizon"], wcfg, er["solver"], steady, op, er["pde_dt"],
            er["record_every"], er["n_particles"], er["particle_dt"], cfg.seed,
            er["transient_fraction"], harris, labels, threads=ctx.threads)
        cols = {"label": [], "mode": [], "t": [], "distance": []}
        items = {"beta": cfg.model.beta, "T": harris.T, "n_fits": len(reps)}
        for k, r in enumerate(reps):
            cols["label"] += [r.label] * r.times.size
            cols["mode"] += [r.mode] * r.times.size
            cols["t"] += list(r.times)
            cols["distance"] += list(r.distances)
            ctx.csv(f"decay_{k}_{r.mode}.csv", {"t": r.times, "distance": r.distances})
            items.update({f"fit{k}.label": r.label, f"fit{k}.mode": r.mode,
                          f"fit{k}.status": r.status, f"fit{k}.lambda": r.lam,
                          f"fit{k}.lambda_ci": r.lam_ci, f"fit{k}.C": r.C, f"fit{k}.r2": r.r2,
                          f"fit{k}.theta": r.theta, f"fit{k}.window": r.window,
                          f"fit{k}.noise_floor": r.noise_floor,
                          f"fit{k}.monotone": r.monotone})
            print(f"convergence [{r.mode}] {r.label}: {r.status} lambda={r.lam:.4g} "
                  f"r2={r.r2:.5g} monotone={r.monotone}")
            if r.status == "inconclusive":
                _log(f"warning: fit for {r.label} ({r.mode}) is inconclusive")
            if r.mode == "pde" and r.status == "ok" and not r.monotone:
                failed.append(f"convergence:{r.label}")
        ctx.csv("convergence.csv", cols)
        ctx.summary("rate_fit_summary.txt", items)

    if failed:
        _log(f"failed: {', '.join(failed)}")
        return EXIT_VALIDATION
    return EXIT_OK


# -- validate -----------------------------------------------------------------


def cmd_validate(ctx: _Ctx) -> int:
    cfg, va = ctx.cfg, ctx.cfg.validate
    budget = Budget(va["C1"] if va["C1"] is not None else FROZEN_BUDGET.C1,
                    va["C2"] if va["C2"] is not None else FROZEN_BUDGET.C2)
    vcfg = ValidationConfig(va["n_v"], va["n_g"], va["g_max"], va["n_particles"],
                            va["particle_dt"], va["pde_dt"], cfg.seed, tuple(va["times"]),
                            tuple(va["window"]), va["marginal_time"], va["stationary_time"],
                            parse_measure(va["initial"]), budget, va["check_dt"])
    report = run_validation(cfg.params, vcfg, threads=ctx.threads)
    report.write(ctx.out, ctx.header)
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.4g} <= {c.tolerance:.4g}"
              + (f"  ({c.detail})" if c.detail else ""))
    return EXIT_OK if report.passed else EXIT_VALIDATION


# -- constants ----------------------------------------------------------------


def cmd_constants(ctx: _Ctx) -> int:
    p = ctx.cfg.params
    items = {"g_L": p.g_L, "V_E": p.V_E, "V_R": p.V_R, "V_F": p.V_F, "a": p.a,
             "g_in": p.g_in, "g_F": p.g_F, **ctx.cfg.model.harris().as_dict()}
    ctx.summary("constants.txt", items)
    for k, v in items.items():
        print(f"{k} = {io.format_value(v)}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "solve": cmd_solve, "ergodicity": cmd_ergodicity,
            "validate": cmd_validate, "constants": cmd_constants}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vgkinetic", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    helps = {"simulate": "particle ensemble, spike log and a sample trajectory",
             "solve": "finite-volume steady state and/or transient run",
             "ergodicity": "Lyapunov, minorization and convergence-rate diagnostics",
             "validate": "cross-checks between the two solvers",
             "constants": "print the Harris construction constants"}
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides [run] out)")
        p.add_argument("--seed", type=int, metavar="N", help="master seed (overrides [run] seed)")
        p.add_argument("--threads", type=int, metavar="N", help="worker threads; never changes results")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        text = Path(args.config).read_text() if Path(args.config).is_file() else None
        if text is not None and not text.strip():
            parser.print_usage(sys.stderr)
            _log(f"error: config {args.config} is empty")
            return EXIT_CONFIG
        cfg = load_config(args.config, seed=args.seed, out=args.out, threads=args.threads)
        ctx = _Ctx(cfg)
    except (ConfigError, ParameterError, GridError, HarrisConstructionError) as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](ctx)
    except (fpsolver.SolverError, SimulationError) as exc:
        _log(f"numerical failure: {exc}")
        return EXIT_NUMERIC
    except (ConfigError, GridError, HarrisConstructionError) as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
