"""
Run configuration: one INI-style file, one section per module.

    [model]        g_L V_E V_R V_F a g_in
    [particle]     dt horizon n_particles initial snapshot_times conductance_mode window
    [pde]          n_v n_g g_max dt scheme steps steady transient initial record_every
    [ergodicity]   beta R v_r g_r tasks ...
    [validate]     n_v n_g g_max n_particles particle_dt pde_dt times window ...
    [run]          seed out threads

Unknown sections or keys, unparsable values and invalid parameter
combinations raise :class:`ConfigError` naming the offending key before any
computation starts.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .grid import GridError, GridSpec
from .io import config_hash
from .measures import parse_measure
from .model import (HARRIS_KEYS, MODEL_KEYS, HarrisConstructionError, ModelConfig,
                    ParameterError, model_config_from_mapping)


class ConfigError(ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(x) for x in text.replace(",", " ").split())


def _measures(text):
    return tuple(s.strip() for s in text.split(";") if s.strip())


def _words(text):
    return tuple(text.replace(",", " ").split())


def _opt_float(text):
    return None if text.strip().lower() in ("", "auto", "none") else float(text)


SCHEMA = {
    "particle": {
        "dt": (float, 0.01), "horizon": (float, 1.0), "n_particles": (int, 1),
        "initial": (str, "point:0.0,1.0"), "snapshot_times": (_floats, None),
        "conductance_mode": (str, "ou"), "window": (_floats, None),
    },
    "pde": {
        "n_v": (int, 200), "n_g": (int, 200), "g_max": (_opt_float, None),
        "dt": (float, 0.01), "scheme": (str, "implicit"), "steps": (int, 100),
        "steady": (_bool, True), "transient": (_bool, False),
        "initial": (str, "uniform:0,1,0,2"), "record_every": (int, 10),
    },
    "ergodicity": {
        "beta": (float, 1.0), "R": (float, 1.0), "v_r": (_opt_float, None),
        "g_r": (_opt_float, None),
        "tasks": (_words, ("lyapunov", "minorization", "monotonicity", "convergence")),
        "lyapunov_R": (float, 9.0), "lyapunov_points": (_ints, (4, 4)),
        "lyapunov_n": (int, 10_000), "lyapunov_horizon": (float, 5.0),
        "lyapunov_times": (int, 20),
        "probe_density": (_ints, (8, 8)), "n_per_point": (int, 10_000),
        "R_values": (_floats, (1.0, 4.0)), "particle_dt": (float, 0.01),
        "initial_measures": (_measures, ("point:0.1,0.2", "uniform:0,1,0,3")),
        "horizon": (float, 10.0), "solver": (str, "pde"), "n_v": (int, 200),
        "n_g": (int, 200), "g_max": (_opt_float, None), "pde_dt": (float, 0.02),
        "record_every": (float, 0.1), "n_particles": (int, 100_000),
        "transient_fraction": (float, 0.2),
    },
    "validate": {
        "n_v": (int, 200), "n_g": (int, 200), "g_max": (float, 8.0),
        "n_particles": (int, 100_000), "particle_dt": (float, 0.01), "pde_dt": (float, 0.01),
        "times": (_floats, (1.0, 5.0, 20.0)), "window": (_floats, (10.0, 20.0)),
        "marginal_time": (float, 2.0), "stationary_time": (float, 10.0),
        "initial": (str, "uniform:0,1,0,2"), "C1": (_opt_float, None),
        "C2": (_opt_float, None), "check_dt": (_bool, True),
    },
    "run": {"seed": (int, 0), "out": (str, "out"), "threads": (int, 1)},
}
SECTIONS = ("model",) + tuple(SCHEMA)
ERGODICITY_TASKS = ("lyapunov", "minorization", "monotonicity", "convergence")


@dataclass
class RunConfig:
    model: ModelConfig
    particle: dict
    pde: dict
    ergodicity: dict
    validate: dict
    run: dict
    sha256: str = ""
    sections_present: tuple = field(default=())

    @property
    def params(self):
        return self.model.params

    @property
    def seed(self) -> int:
        return self.run["seed"]

    def pde_grid(self, section: str = "pde") -> GridSpec:
        s = getattr(self, section)
        return GridSpec.for_params(self.params, s["n_v"], s["n_g"], s["g_max"])


def _parse_section(name, items, path_prefix):
    schema = SCHEMA[name]
    out = {k: default for k, (_, default) in schema.items()}
    for key, text in items:
        full = f"{path_prefix}{name}.{key}"
        if key not in schema:
            raise ConfigError(f"unknown key {full!r}", key=full)
        try:
            out[key] = schema[key][0](text)
        except ValueError as exc:
            raise ConfigError(f"{full}: {exc}", key=full) from None
    return out


def parse_config(text: str, seed: int | None = None, out: str | None = None,
                 threads: int | None = None) -> RunConfig:
    """Parse and fully validate a configuration; command-line overrides win."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}".splitlines()[0]) from None
    for s in parser.sections():
        if s not in SECTIONS:
            raise ConfigError(f"unknown section [{s}]", key=s)
    erg_items = parser.items("ergodicity") if parser.has_section("ergodicity") else []
    model_items = parser.items("model") if parser.has_section("model") else []
    for key, _ in model_items:
        if key not in MODEL_KEYS:
            raise ConfigError(f"unknown key 'model.{key}'", key=f"model.{key}")
    try:
        harris_items = [(k, v) for k, v in erg_items if k in HARRIS_KEYS
                        and v.strip().lower() not in ("auto", "none")]
        model = model_config_from_mapping(model_items + harris_items)
    except ParameterError as exc:
        section = "ergodicity" if exc.key in HARRIS_KEYS else "model"
        raise ConfigError(f"{section}.{exc.key}: {exc}", key=f"{section}.{exc.key}") from None

    sec = {name: _parse_section(name, parser.items(name) if parser.has_section(name) else [], "")
           for name in SCHEMA}
    if seed is not None:
        sec["run"]["seed"] = seed
    if out is not None:
        sec["run"]["out"] = out
    if threads is not None:
        sec["run"]["threads"] = threads
    cfg = RunConfig(model, sec["particle"], sec["pde"], sec["ergodicity"], sec["validate"],
                    sec["run"], config_hash(text), tuple(parser.sections()))
    _validate(cfg)
    return cfg


def load_config(path, **overrides) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, **overrides)


def _require(cond, key, message):
    if not cond:
        raise ConfigError(f"{key}: {message}", key=key)


def _check_measure(text, key, allow_stationary=False):
    if allow_stationary and text.strip().lower() == "stationary":
        return
    try:
        parse_measure(text)
    except (ValueError, OSError) as exc:
        raise ConfigError(f"{key}: {exc}", key=key) from None


def _validate(cfg: RunConfig) -> None:
    p, pa, pd, er, va, run = (cfg.params, cfg.particle, cfg.pde, cfg.ergodicity, cfg.validate,
                              cfg.run)
    _require(run["seed"] >= 0, "run.seed", "must be >= 0")
    _require(run["threads"] >= 1, "run.threads", "must be >= 1")

    _require(pa["dt"] > 0, "particle.dt", "must be > 0")
    _require(pa["horizon"] > 0, "particle.horizon", "must be > 0")
    _require(pa["n_particles"] >= 1, "particle.n_particles", "must be >= 1")
    _require(pa["conductance_mode"] in ("ou", "deterministic", "frozen"),
             "particle.conductance_mode", "must be ou, deterministic or frozen")
    if pa["snapshot_times"] is None:
        pa["snapshot_times"] = (0.0, pa["horizon"])
    for t in pa["snapshot_times"]:
        k = round(t / pa["dt"])
        _require(0 <= t <= pa["horizon"] and abs(k * pa["dt"] - t) <= 1e-9 * max(1, t),
                 "particle.snapshot_times", f"{t} is not a multiple of dt in [0, horizon]")
    if pa["window"] is not None:
        _require(len(pa["window"]) == 2 and 0 <= pa["window"][0] < pa["window"][1]
                 <= pa["horizon"], "particle.window", "need t0 < t1 inside [0, horizon]")
    _check_measure(pa["initial"], "particle.initial")

    _require(pd["dt"] > 0, "pde.dt", "must be > 0")
    _require(pd["steps"] >= 1, "pde.steps", "must be >= 1")
    _require(pd["record_every"] >= 1, "pde.record_every", "must be >= 1")
    _require(pd["scheme"] in ("implicit", "explicit"), "pde.scheme",
             "must be implicit or explicit")
    _check_measure(pd["initial"], "pde.initial")
    for s in ("pde", "ergodicity"):
        try:
            cfg.pde_grid(s).validate_solver_grid(p)
        except GridError as exc:
            raise ConfigError(f"{s} grid: {exc}", key=f"{s}.n_g") from None

    tasks = er["tasks"]
    for t in tasks:
        _require(t in ERGODICITY_TASKS, "ergodicity.tasks", f"unknown task {t!r}")
    _require(er["solver"] in ("pde", "particle", "both"), "ergodicity.solver",
             "must be pde, particle or both")
    _require(len(er["probe_density"]) == 2 and min(er["probe_density"]) >= 1,
             "ergodicity.probe_density", "need two positive integers")
    _require(len(er["lyapunov_points"]) == 2 and min(er["lyapunov_points"]) >= 1,
             "ergodicity.lyapunov_points", "need two positive integers")
    _require(er["n_per_point"] >= 1, "ergodicity.n_per_point", "must be >= 1")
    _require(er["lyapunov_n"] >= 2, "ergodicity.lyapunov_n", "must be >= 2")
    _require(er["lyapunov_R"] >= 1, "ergodicity.lyapunov_R", "must be >= 1")
    _require(all(r >= 1 for r in er["R_values"]), "ergodicity.R_values", "need R >= 1")
    _require(0 <= er["transient_fraction"] < 1, "ergodicity.transient_fraction",
             "must lie in [0, 1)")
    for m in er["initial_measures"]:
        _check_measure(m, "ergodicity.initial_measures", allow_stationary=True)
    try:
        cfg.model.harris()
        for R in er["R_values"]:
            ModelConfig(p, R, cfg.model.v_r, cfg.model.g_r, cfg.model.beta).harris()
    except (HarrisConstructionError, ParameterError) as exc:
        raise ConfigError(f"ergodicity: {exc}", key="ergodicity.g_r") from None

    _require(va["n_particles"] >= 1, "validate.n_particles", "must be >= 1")
    _require(len(va["window"]) == 2 and va["window"][0] < va["window"][1], "validate.window",
             "need t0 < t1")
    _check_measure(va["initial"], "validate.initial")
    try:
        GridSpec(va["n_v"], va["n_g"], va["g_max"]).validate_solver_grid(p)
    except GridError as exc:
        raise ConfigError(f"validate grid: {exc}", key="validate.n_g") from None
