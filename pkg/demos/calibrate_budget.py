"""
Reference run that fixes the cross-solver tolerance law

    tol(n, grid) = C1 * sqrt(K / n) + C2 * (dv + dg)

used by ``vgkinetic.validate``. Run once; the printed constants are copied
into ``validate.Budget`` and never retuned afterwards.

Procedure
---------
1. Grid term. Solve the PDE from the uniform start on [0,1) x [0,2] with
   200x200 and 400x400 cells (g_max = 8). For a first-order scheme the
   200-grid error is about twice the 200-vs-400 gap, so
   C2_raw = max_t 2 TV(200, 400) / (dv + dg)_200.
2. Sampling term. Run 1e5 particles (seed 0) and compare with the 400-grid
   field on the common 20x20 coarsening:
   C1_raw = max_t (TV - C2_raw (dv + dg)_400) / sqrt(K / n).
3. Freeze C1 = 1.5 C1_raw and C2 = 2 C2_raw, rounded up to two digits.

Takes about two minutes on one core.
"""
import math
import time

from vgkinetic import fpsolver
from vgkinetic.grid import GridSpec, coarsen_to, histogram, total_variation
from vgkinetic.measures import UniformBox
from vgkinetic.model import ModelParams
from vgkinetic.particle import SimConfig, simulate_ensemble
from vgkinetic.validate import pde_snapshots

TIMES = (1.0, 5.0, 20.0)
N = 100_000


def ceil2(x):
    e = math.floor(math.log10(x)) - 1
    return math.ceil(x / 10**e) * 10**e


def main():
    params = ModelParams()
    mu0 = UniformBox(0.0, 1.0, 0.0, 2.0)
    fields, h = {}, {}
    for n in (200, 400):
        t0 = time.time()
        grid = GridSpec(n, n, 8.0)
        op = fpsolver.assemble(params, grid)
        fields[n] = {t: coarsen_to(f) for t, f in pde_snapshots(op, mu0, TIMES, 0.01).items()}
        h[n] = grid.dv + grid.dg
        print(f"pde {n}x{n}: {time.time() - t0:.1f}s")

    c2_raw = max(2 * total_variation(fields[200][t], fields[400][t]) / h[200] for t in TIMES)

    res = simulate_ensemble(params, SimConfig(0.01, max(TIMES), N, 0, TIMES), mu0)
    k = 20 * 20
    c1_raw = 0.0
    for t in TIMES:
        s = res.at(t)
        ref = fields[400][t]
        tv = total_variation(histogram(s.v, s.g, ref.grid), ref)
        c1_raw = max(c1_raw, (tv - c2_raw * h[400]) / math.sqrt(k / N))
        print(f"t={t:5.1f}  TV(particle, pde400) = {tv:.5f}")

    c1, c2 = ceil2(1.5 * c1_raw), ceil2(2 * c2_raw)
    print(f"C1_raw = {c1_raw:.4f}  C2_raw = {c2_raw:.4f}")
    print(f"frozen: C1 = {c1}  C2 = {c2}")
    print(f"budget at n=1e5, 200x200: {c1 * math.sqrt(k / N) + c2 * h[200]:.4f}")


if __name__ == "__main__":
    main()
