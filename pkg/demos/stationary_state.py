"""
The stationary state seen by both solvers.

The finite-volume steady state and a long particle run should agree on the
conductance marginal (a Gaussian truncated at 0, known in closed form) and on
the firing rate (the probability flux through V_F).
"""
import time

import numpy as np

from vgkinetic import fpsolver
from vgkinetic.grid import GridSpec
from vgkinetic.measures import UniformBox
from vgkinetic.model import ModelParams
from vgkinetic.particle import SimConfig, firing_rate, simulate_ensemble
from vgkinetic.reference import stationary_g_cell_masses

params = ModelParams()

for n in (50, 100, 200, 400):
    t0 = time.time()
    op = fpsolver.assemble(params, GridSpec(n, 200, 8.0))
    steady = fpsolver.steady_state(op)
    print(f"n_v = {n:3d}: firing rate {fpsolver.firing_rate(op, steady):.5f} "
          f"({steady.meta['iterations']} iterations, {time.time() - t0:.1f}s)")

grid = steady.grid
exact = stationary_g_cell_masses(params, grid.g_edges, upper=grid.g_max) / grid.dg
err = np.abs(steady.g_marginal() - exact)
print(f"g-marginal vs quadrature: max abs error {err.max():.2e}")

res = simulate_ensemble(params, SimConfig(0.01, 20.0, 100_000, 0), UniformBox(0, 1, 0, 2))
print(f"particle firing rate on (10, 20]: {firing_rate(res.spikes, (10.0, 20.0), 100_000):.5f}")
