"""
One neuron of the voltage-conductance model with g_L = 1, V_E = 2.

The conductance wanders as a reflected OU process around g_in = 1. While it
stays below g_F = 1 the voltage drifts back toward V_R; once it rises above
g_F the voltage is pushed through the threshold and resets, so spikes come
in bursts during high-conductance episodes.

Writes trajectory.csv (t, v, g, event) for external plotting and prints a
short account of the path.
"""
import sys

import numpy as np

from vgkinetic import io
from vgkinetic.model import ModelParams
from vgkinetic.particle import SimConfig, simulate_ids

params = ModelParams(g_L=1.0, V_E=2.0)
dt, horizon, seed = 0.01, 20.0, 1
steps = tuple(k * dt for k in range(round(horizon / dt) + 1))
res = simulate_ids(params, SimConfig(dt, horizon, 1, seed, steps), [0], [0.0], [1.0])

t, v, g = res.times, res.v[:, 0], res.g[:, 0]
spikes = res.spikes.spike_time
print(f"{len(spikes)} spikes in {horizon} time units")
print(f"fraction of time with g > g_F: {np.mean(g > params.g_F):.3f}")
print(f"g range visited: [{g.min():.3f}, {g.max():.3f}], local time {res.local_time[-1, 0]:.4f}")

# spikes cluster: inter-spike intervals are short inside bursts, long between them
isi = np.diff(spikes)
if isi.size:
    print(f"inter-spike intervals: median {np.median(isi):.3f}, max {isi.max():.3f}")

out = sys.argv[1] if len(sys.argv) > 1 else "trajectory.csv"
io.write_csv(out, {"t": t, "v": v, "g": g}, io.provenance("demo", seed))
print(f"wrote {out}")
