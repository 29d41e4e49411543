"""
Particle simulation of the jump-reset SDE.

The conductance is a reflected Ornstein-Uhlenbeck process,
``dG = -(G - g_in) dt + sqrt(2a) dB + dL``, and the voltage follows
``dV/dt = J(V, G)`` on ``[V_R, V_F)`` with an instantaneous reset to ``V_R``
whenever it reaches ``V_F``.

Each step of size ``dt`` first advances ``G`` with the exact OU transition
followed by reflection at 0, then flows ``V`` with the new conductance held
fixed. With ``g`` frozen the voltage equation is linear, so the flow and the
threshold crossing times are evaluated in closed form.

Randomness is counter based: particle ``i`` reads column ``i % BLOCK_SIZE``
of a Philox stream keyed by ``(master_seed, i // BLOCK_SIZE)``. A particle's
path therefore depends only on the seed and its id, never on the ensemble
size, the work split or the thread count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .grid import DensityField, GridSpec, histogram
from .model import ModelParams

BLOCK_SIZE = 1024
NOISE_STREAM = 0
INIT_STREAM = 1
_MASK64 = (1 << 64) - 1
# (steps x particles) noise buffered per refill
_NOISE_BUFFER = 1 << 21

CONDUCTANCE_MODES = ("ou", "deterministic", "frozen")


class SimulationError(RuntimeError):
    pass


class ParticleAbortError(SimulationError):
    """Some particles exceeded the crossing guard; ``result`` holds the full run."""

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


def block_generator(master_seed: int, block: int, stream: int = NOISE_STREAM) -> np.random.Generator:
    """Philox generator keyed by ``(master_seed, stream, block)``."""
    key = np.array([int(master_seed) & _MASK64, (int(stream) << 48) | int(block)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class ParticleState:
    v: float
    g: float
    local_time: float = 0.0
    spike_count: int = 0

    def validate(self, params: ModelParams) -> None:
        if not (params.V_R <= self.v < params.V_F):
            raise ValueError(f"v={self.v!r} outside [V_R, V_F)")
        if not self.g >= 0:
            raise ValueError(f"g={self.g!r} must be >= 0")
        if not self.local_time >= 0:
            raise ValueError("local_time must be >= 0")


@dataclass(frozen=True)
class SimConfig:
    """Time stepping and ensemble settings.

    ``snapshot_times`` must lie on the ``dt`` grid. ``conductance_mode`` is
    ``"ou"`` for the model, ``"deterministic"`` for the noiseless relaxation
    of ``g`` and ``"frozen"`` to hold ``g`` at its initial value.
    """

    dt: float = 0.01
    horizon: float = 1.0
    n_particles: int = 1
    master_seed: int = 0
    snapshot_times: tuple = ()
    conductance_mode: str = "ou"

    def __post_init__(self):
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt!r}")
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if not 0 <= int(self.master_seed) <= _MASK64:
            raise ValueError("master_seed must fit in 64 bits")
        if self.conductance_mode not in CONDUCTANCE_MODES:
            raise ValueError(f"conductance_mode must be one of {CONDUCTANCE_MODES}")
        ts = self.snapshot_times
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError("snapshot_times must be sorted")
        if ts and (ts[0] < 0 or ts[-1] > self.horizon * (1 + 1e-12)):
            raise ValueError("snapshot_times must lie in [0, horizon]")
        self.step_index(self.horizon)
        for t in ts:
            self.step_index(t)

    @property
    def n_steps(self) -> int:
        return self.step_index(self.horizon)

    def step_index(self, t: float) -> int:
        k = round(t / self.dt)
        if abs(k * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t!r} is not a multiple of dt={self.dt!r}")
        return k


@dataclass
class SpikeRecords:
    """Pooled spikes, sorted by particle then time."""

    particle_id: np.ndarray
    spike_time: np.ndarray
    g_at_spike: np.ndarray

    def __len__(self):
        return self.particle_id.size

    @classmethod
    def empty(cls):
        return cls(np.zeros(0, np.int64), np.zeros(0), np.zeros(0))

    @classmethod
    def concat(cls, parts) -> "SpikeRecords":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        pid = np.concatenate([p.particle_id for p in parts])
        t = np.concatenate([p.spike_time for p in parts])
        g = np.concatenate([p.g_at_spike for p in parts])
        order = np.lexsort((t, pid))
        return cls(pid[order], t[order], g[order])

    def for_particle(self, i: int) -> "SpikeRecords":
        m = self.particle_id == i
        return SpikeRecords(self.particle_id[m], self.spike_time[m], self.g_at_spike[m])


@dataclass
class EnsembleState:
    t: float
    v: np.ndarray
    g: np.ndarray
    local_time: np.ndarray
    spike_count: np.ndarray


@dataclass
class EnsembleResult:
    """Snapshots have shape ``(n_snapshots, n_particles)``."""

    times: np.ndarray
    v: np.ndarray
    g: np.ndarray
    local_time: np.ndarray
    spike_count: np.ndarray
    spikes: SpikeRecords
    aborted: np.ndarray
    g_max: np.ndarray
    particle_ids: np.ndarray = field(default=None)

    @property
    def n_aborted(self) -> int:
        return int(self.aborted.sum())

    def snapshot(self, k: int) -> EnsembleState:
        return EnsembleState(float(self.times[k]), self.v[k], self.g[k],
                             self.local_time[k], self.spike_count[k])

    def at(self, t: float) -> EnsembleState:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t={t!r}")
        return self.snapshot(k)


def step_conductance(g, dt, noise, g_in=1.0, a=1.0):
    """Exact OU transition over ``dt`` followed by reflection at 0.

    Returns ``(g_next, local_time_increment)`` where the increment is the
    part of the proposal that fell below zero.
    """
    decay = math.exp(-dt)
    scale = math.sqrt(a * -math.expm1(-2.0 * dt))
    proposal = g_in + (g - g_in) * decay + scale * np.asarray(noise)
    return np.abs(proposal), np.maximum(0.0, -proposal)


def _frozen_flow(params: ModelParams, g):
    kappa = params.g_L + g
    v_inf = (params.g_L * params.V_R + g * params.V_E) / kappa
    return kappa, v_inf


def _time_to_threshold(params: ModelParams, v, kappa, v_inf):
    """Exact hitting time of ``V_F`` from ``v`` under the frozen flow; inf if never."""
    v = np.asarray(v, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    v_inf = np.asarray(v_inf, dtype=float)
    gap = v_inf - params.V_F
    out = np.full(np.broadcast(v, kappa, v_inf).shape, np.inf)
    ok = np.broadcast_to(gap > 0, out.shape)
    if ok.any():
        vb, kb, gb = (np.broadcast_to(x, out.shape)[ok] for x in (v, kappa, gap))
        out[ok] = np.log1p((params.V_F - vb) / gb) / kb
    return out


def step_voltage(params: ModelParams, v, g_frozen, dt):
    """Flow the voltage for ``dt`` with the conductance held at ``g_frozen``.

    Returns ``(v_next, crossed, crossing_offset)``. Without a crossing,
    ``v_next = v_inf + (v - v_inf) exp(-kappa dt)`` with ``kappa = g_L + g``.
    When the threshold is reached within ``(0, dt]``, ``v_next`` is ``V_F``
    (the state just before the reset) and ``crossing_offset`` is the exact
    hitting time; otherwise the offset is ``nan``.
    """
    kappa, v_inf = _frozen_flow(params, np.asarray(g_frozen, dtype=float))
    hit_time = _time_to_threshold(params, v, kappa, v_inf)
    crossed = hit_time <= dt
    v_next = v_inf + (np.asarray(v, dtype=float) - v_inf) * np.exp(-kappa * dt)
    v_next = np.where(crossed, params.V_F, v_next)
    offset = np.where(crossed, hit_time, np.nan)
    if np.ndim(v_next) == 0:
        return float(v_next), bool(crossed), float(offset)
    return v_next, crossed, offset


def crossing_limit(params: ModelParams, dt, g_max):
    """Largest number of threshold crossings possible within one step.

    Consecutive spikes are at least ``(V_F - V_R) / ((V_E - V_R) max G)``
    apart, so at most ``1 + floor(dt / gap)`` of them fit in ``dt``.
    """
    rate = (params.V_E - params.V_R) * np.asarray(g_max) / (params.V_F - params.V_R)
    return 1 + np.floor(dt * rate)


class _NoiseSource:
    """Serves standard normals for a fixed set of particle ids, step after step."""

    def __init__(self, master_seed, ids, n_steps):
        self.ids = np.asarray(ids, dtype=np.int64)
        blocks = self.ids // BLOCK_SIZE
        self.blocks = np.unique(blocks)
        self.gens = {int(b): block_generator(master_seed, int(b)) for b in self.blocks}
        self.slot = np.searchsorted(self.blocks, blocks) * BLOCK_SIZE + self.ids % BLOCK_SIZE
        self.chunk = max(1, min(n_steps, _NOISE_BUFFER // (BLOCK_SIZE * self.blocks.size)))
        self.buffer = None
        self.pos = self.chunk

    def next(self):
        if self.pos == self.chunk:
            draws = [self.gens[int(b)].standard_normal((self.chunk, BLOCK_SIZE)) for b in self.blocks]
            self.buffer = np.concatenate(draws, axis=1)[:, self.slot]
            self.pos = 0
        row = self.buffer[self.pos]
        self.pos += 1
        return row


def initial_states(sampler, master_seed: int, ids) -> tuple[np.ndarray, np.ndarray]:
    """Initial ``(v, g)`` for the given particle ids, keyed like the noise."""
    ids = np.asarray(ids, dtype=np.int64)
    v = np.empty(ids.size)
    g = np.empty(ids.size)
    for b in np.unique(ids // BLOCK_SIZE):
        rng = block_generator(master_seed, int(b), INIT_STREAM)
        vb, gb = sampler.sample(rng, BLOCK_SIZE)
        sel = ids // BLOCK_SIZE == b
        v[sel] = np.asarray(vb, float)[ids[sel] % BLOCK_SIZE]
        g[sel] = np.asarray(gb, float)[ids[sel] % BLOCK_SIZE]
    return v, g


@njit(cache=True, nogil=True)
def _step_kernel(v, g, lt, gmax, noise, mode, dt, decay, scale, g_L, V_E, V_R, V_F, g_in,
                 first_hit, period, n_cross):
    """One splitting step for every particle, in place.

    Crossing particles get ``n_cross >= 1``, the offset of their first
    crossing and the reset-to-threshold period of the frozen flow.
    """
    below_VF = np.nextafter(V_F, -np.inf)
    for i in range(v.size):
        gi = g[i]
        if mode == 0:
            prop = g_in + (gi - g_in) * decay + scale * noise[i]
            if prop < 0.0:
                lt[i] += -prop
                prop = -prop
            gi = prop
        elif mode == 1:
            gi = g_in + (gi - g_in) * decay
        g[i] = gi
        if gi > gmax[i]:
            gmax[i] = gi
        kappa = g_L + gi
        v_inf = (g_L * V_R + gi * V_E) / kappa
        vi = v[i]
        n_cross[i] = 0
        e = np.exp(-kappa * dt)
        v_next = v_inf + (vi - v_inf) * e
        if v_next >= V_F and v_inf > V_F:
            hit = min(np.log1p((V_F - vi) / (v_inf - V_F)) / kappa, dt)
            per = np.log1p((V_F - V_R) / (v_inf - V_F)) / kappa
            m = 1
            elapsed = hit
            while elapsed + per <= dt:
                elapsed += per
                m += 1
            first_hit[i] = hit
            period[i] = per
            n_cross[i] = m
            v_next = v_inf + (V_R - v_inf) * np.exp(-kappa * (dt - elapsed))
        v[i] = min(v_next, below_VF)


_MODE_CODE = {"ou": 0, "deterministic": 1, "frozen": 2}


def _run(params: ModelParams, cfg: SimConfig, ids, v, g, local_time, count):
    """Advance the particles ``ids`` through all steps. Pure in its inputs."""
    n = ids.size
    v, g = v.astype(float).copy(), g.astype(float).copy()
    lt = local_time.astype(float).copy()
    count = count.astype(np.int64).copy()
    gmax = g.copy()
    aborted = np.zeros(n, dtype=bool)
    first_hit, period = np.zeros(n), np.zeros(n)
    n_cross = np.zeros(n, dtype=np.int64)
    dt = cfg.dt
    mode = _MODE_CODE[cfg.conductance_mode]
    decay = math.exp(-dt)
    scale = math.sqrt(params.a * -math.expm1(-2.0 * dt))
    zeros = np.zeros(n)
    noise = _NoiseSource(cfg.master_seed, ids, cfg.n_steps) if mode == 0 else None
    snap_idx = [cfg.step_index(t) for t in cfg.snapshot_times]
    snaps = {k: [] for k in ("v", "g", "lt", "count")}
    spike_parts = []

    def record():
        snaps["v"].append(v.copy())
        snaps["g"].append(g.copy())
        snaps["lt"].append(lt.copy())
        snaps["count"].append(count.copy())

    si = 0
    while si < len(snap_idx) and snap_idx[si] == 0:
        record()
        si += 1

    for k in range(cfg.n_steps):
        xi = noise.next() if mode == 0 else zeros
        _step_kernel(v, g, lt, gmax, xi, mode, dt, decay, scale, params.g_L, params.V_E,
                     params.V_R, params.V_F, params.g_in, first_hit, period, n_cross)
        idx = np.flatnonzero(n_cross)
        if idx.size:
            m = n_cross[idx]
            rep = np.repeat(idx, m)
            j = np.arange(rep.size) - np.repeat(np.cumsum(m) - m, m)
            times = k * dt + first_hit[rep] + j * period[rep]
            spike_parts.append(SpikeRecords(ids[rep], times, g[rep]))
            count[idx] += m
            aborted[idx[m > crossing_limit(params, dt, gmax[idx])]] = True
        while si < len(snap_idx) and snap_idx[si] == k + 1:
            record()
            si += 1

    shape = (len(snap_idx), n)
    out = {key: (np.array(val) if val else np.zeros(shape)) for key, val in snaps.items()}
    return out, SpikeRecords.concat(spike_parts), aborted, gmax


def _partition(n_blocks: int, parts: int):
    parts = max(1, min(parts, n_blocks))
    edges = np.linspace(0, n_blocks, parts + 1).round().astype(int)
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def simulate_ids(params: ModelParams, cfg: SimConfig, ids, v0, g0, threads: int = 1,
                 local_time=None, spike_count=None) -> EnsembleResult:
    """Simulate an explicit set of particles; the building block of the public API."""
    ids = np.asarray(ids, dtype=np.int64)
    v0 = np.asarray(v0, dtype=float)
    g0 = np.asarray(g0, dtype=float)
    if np.any(v0 < params.V_R) or np.any(v0 >= params.V_F):
        raise ValueError("initial voltages must lie in [V_R, V_F)")
    if np.any(g0 < 0):
        raise ValueError("initial conductances must be >= 0")
    lt0 = np.zeros(ids.size) if local_time is None else np.asarray(local_time, float)
    c0 = np.zeros(ids.size, np.int64) if spike_count is None else np.asarray(spike_count)

    n_blocks = -(-ids.size // BLOCK_SIZE)
    slices = [slice(a * BLOCK_SIZE, b * BLOCK_SIZE) for a, b in _partition(n_blocks, threads)]

    def task(s):
        return _run(params, cfg, ids[s], v0[s], g0[s], lt0[s], c0[s])

    if len(slices) == 1:
        results = [task(slices[0])]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(task, slices))

    def cat(key):
        return np.concatenate([r[0][key] for r in results], axis=1)

    return EnsembleResult(
        times=np.array(cfg.snapshot_times, dtype=float),
        v=cat("v"), g=cat("g"), local_time=cat("lt"), spike_count=cat("count"),
        spikes=SpikeRecords.concat([r[1] for r in results]),
        aborted=np.concatenate([r[2] for r in results]),
        g_max=np.concatenate([r[3] for r in results]),
        particle_ids=ids,
    )


def simulate_particle(params: ModelParams, config: SimConfig, initial: ParticleState,
                      particle_id: int = 0):
    """Simulate one particle on noise stream ``particle_id``.

    Returns ``(trajectory, spikes)`` where ``trajectory`` is an
    :class:`EnsembleResult` with a single column.
    """
    initial.validate(params)
    res = simulate_ids(params, config, [particle_id], [initial.v], [initial.g],
                       local_time=[initial.local_time], spike_count=[initial.spike_count])
    if res.n_aborted:
        raise ParticleAbortError(f"particle {particle_id} exceeded the crossing guard", res)
    return res, res.spikes


def simulate_ensemble(params: ModelParams, config: SimConfig, initial_sampler,
                      threads: int = 1) -> EnsembleResult:
    """Run ``config.n_particles`` independent particles with ids ``0..n-1``.

    ``initial_sampler`` is any object with ``sample(rng, size) -> (v, g)``,
    e.g. :class:`vgkinetic.measures.PointMass`. Results are bit-identical for
    every value of ``threads``.

    Raises
    ------
    ParticleAbortError
        If any particle tripped the crossing guard; the full result is attached.
    """
    ids = np.arange(config.n_particles, dtype=np.int64)
    v0, g0 = initial_states(initial_sampler, config.master_seed, ids)
    res = simulate_ids(params, config, ids, v0, g0, threads=threads)
    if res.n_aborted:
        bad = np.flatnonzero(res.aborted)
        raise ParticleAbortError(
            f"{bad.size} particle(s) exceeded the crossing guard, first id {int(bad[0])}", res)
    return res


def empirical_measure(snapshot, grid: GridSpec) -> DensityField:
    """Histogram estimate of the law of an :class:`EnsembleState`."""
    return histogram(snapshot.v, snapshot.g, grid, t=snapshot.t)


def firing_rate(spikes: SpikeRecords, window, n_particles: int) -> float:
    """Spikes per particle per unit time inside ``window = (t0, t1]``."""
    t0, t1 = window
    if not t1 > t0:
        raise ValueError(f"empty window {window!r}")
    n = np.count_nonzero((spikes.spike_time > t0) & (spikes.spike_time <= t1))
    return n / (n_particles * (t1 - t0))
