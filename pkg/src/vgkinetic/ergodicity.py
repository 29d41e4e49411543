"""
Measurable versions of the Harris-theorem ingredients.

* :func:`weighted_tv` -- the TV norm weighted by ``1 + beta W`` with the
  Lyapunov function ``W(v, g) = (g - g_in)^2``.
* :func:`lyapunov_probe` -- Monte Carlo check of the drift bound
  ``E W(X_t) <= e^{-2t} W(x) + a (1 - e^{-2t})``.
* :func:`minorization_probe` -- empirical uniform lower bound ``eta nu`` on
  the time-``T`` transition laws from a grid of points covering ``C(R)``.
* :func:`convergence_study` -- decay of ``||mu_t - pi||_beta`` and a fitted
  exponential rate.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import fpsolver
from .grid import DensityField, GridSpec, check_same_grid, coarsen_to, histogram
from .model import HarrisConstants, ModelParams, harris_constants, small_set_bounds
from .particle import SimConfig, initial_states, simulate_ids


@dataclass(frozen=True)
class WeightedTvConfig:
    beta: float = 1.0
    grid: GridSpec | None = None
    g_in: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta!r}")


def lyapunov_weight(g, beta: float, g_in: float = 1.0):
    return 1.0 + beta * (np.asarray(g, float) - g_in) ** 2


def weighted_tv(h1: DensityField, h2: DensityField, cfg: WeightedTvConfig) -> float:
    """``sum (1 + beta W) |h1 - h2| dv dg`` over cells, plus the overflow bins.

    Overflow mass is weighted at its mean conductance; for two overflow bins
    the term is ``|o1 w(c1) - o2 w(c2)|``.
    """
    check_same_grid(h1, h2)
    w = lyapunov_weight(h1.grid.g_centers, cfg.beta, cfg.g_in)[None, :]
    total = float((w * np.abs(h1.values - h2.values)).sum() * h1.grid.cell_area)

    def over(h):
        if h.overflow_mass <= 0:
            return 0.0
        return h.overflow_mass * float(lyapunov_weight(h.overflow_g, cfg.beta, cfg.g_in))

    return total + abs(over(h1) - over(h2))


def small_set_grid(params: ModelParams, R: float, n_v: int = 8, n_g: int = 8) -> np.ndarray:
    """``(n_v * n_g, 2)`` probe points covering ``C(R) = [V_R, V_F) x [g_lo, M(R)]``.

    Voltages run from ``V_R`` to half a spacing below ``V_F``; conductances
    include both ends of the range.
    """
    g_lo, g_hi = small_set_bounds(params, R)
    step = (params.V_F - params.V_R) / n_v
    vs = params.V_R + step * np.arange(n_v) + (step / 2) * np.arange(n_v) / max(n_v - 1, 1)
    gs = np.linspace(g_lo, g_hi, n_g)
    V, G = np.meshgrid(vs, gs, indexing="ij")
    return np.column_stack([V.ravel(), G.ravel()])


def _dt_for(T: float, dt: float) -> float:
    """Step no larger than ``dt`` that divides ``T`` exactly."""
    return T / math.ceil(T / dt - 1e-9)


# -- Lyapunov drift -----------------------------------------------------------


@dataclass
class LyapunovReport:
    points: np.ndarray
    times: np.ndarray
    f_hat: np.ndarray        # (points, times)
    se: np.ndarray
    bound: np.ndarray
    margin: float
    alpha1: float
    alpha2: float
    T: float
    n: int
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def lyapunov_probe(params: ModelParams, probe_points, horizon: float = 5.0, n: int = 10_000,
                   n_times: int = 20, dt: float = 0.01, seed: int = 0,
                   harris: HarrisConstants | None = None, n_se: float = 4.0,
                   threads: int = 1) -> LyapunovReport:
    """Estimate ``f(t) = E (G_t - g_in)^2`` from each probe point and test the drift bound.

    The bound ``e^{-2t} f(0) + a (1 - e^{-2t})`` is checked with a slack of
    ``n_se`` standard errors at ``n_times`` equally spaced times in
    ``(0, horizon]``. Violations name the point and time.
    """
    pts = np.asarray(probe_points, dtype=float).reshape(-1, 2)
    if n < 2:
        raise ValueError("need at least two particles per point")
    times = np.linspace(horizon / n_times, horizon, n_times)
    dt = _dt_for(times[0], dt)
    cfg = SimConfig(dt=dt, horizon=horizon, n_particles=n * len(pts), master_seed=seed,
                    snapshot_times=tuple(times))
    ids = np.arange(n * len(pts))
    res = simulate_ids(params, cfg, ids, np.repeat(pts[:, 0], n), np.repeat(pts[:, 1], n),
                       threads=threads)
    W = (res.g - params.g_in) ** 2                          # (times, n*P)
    W = W.reshape(len(times), len(pts), n)
    f_hat = W.mean(axis=2).T
    se = (W.std(axis=2, ddof=1) / math.sqrt(n)).T
    w0 = (pts[:, 1] - params.g_in) ** 2
    decay = np.exp(-2.0 * times)
    bound = decay[None, :] * w0[:, None] + params.a * (1.0 - decay)[None, :]
    slack = bound + n_se * se + 1e-12 - f_hat
    violations = [
        dict(point=tuple(pts[i]), t=float(times[j]), f_hat=float(f_hat[i, j]),
             bound=float(bound[i, j]), se=float(se[i, j]))
        for i, j in zip(*np.nonzero(slack < 0))
    ]
    harris = harris or harris_constants(params)
    return LyapunovReport(points=pts, times=times, f_hat=f_hat, se=se, bound=bound,
                          margin=float(slack.min()), alpha1=math.exp(-2 * harris.T),
                          alpha2=params.a * -math.expm1(-2 * harris.T), T=harris.T, n=n,
                          violations=violations)


# -- minorization -------------------------------------------------------------


def default_probe_hist_grid(params: ModelParams) -> GridSpec:
    return GridSpec(10, 10, g_max=params.g_in + 2.0 * math.sqrt(params.a),
                    v_min=params.V_R, v_max=params.V_F)


@dataclass
class MinorizationReport:
    R: float
    T: float
    probe_points: np.ndarray
    hist_grid: GridSpec
    target_cells: tuple          # (i0, i1, j0, j1), half-open cell ranges
    target_box: tuple            # (v_lo, v_hi, g_lo, g_hi)
    eta_hat: float
    eta_lcb: float
    point_minima: np.ndarray     # per probe point: min cell probability inside K
    worst_point: tuple
    min_count: int
    n_per_point: int
    confidence: float
    status: str

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    @property
    def nu_area(self) -> float:
        i0, i1, j0, j1 = self.target_cells
        return (i1 - i0) * (j1 - j0) * self.hist_grid.cell_area


def _point_seed(seed: int, point) -> int:
    bits = np.asarray(point, dtype=np.float64).view(np.uint64)
    ss = np.random.SeedSequence([int(seed), *(int(b) for b in bits)])
    return int(ss.generate_state(1, np.uint64)[0])


def probe_counts(params: ModelParams, points, T: float, n: int, hist_grid: GridSpec,
                 seed: int = 0, dt: float = 0.01, threads: int = 1) -> np.ndarray:
    """Histogram counts of ``(V_T, G_T)`` from each point, shape ``(P, n_v, n_g)``.

    Every point has its own seed derived from its coordinates, so a point's
    counts do not depend on which other points are probed.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    step = _dt_for(T, dt)

    def one(pt):
        cfg = SimConfig(dt=step, horizon=T, n_particles=n, master_seed=_point_seed(seed, pt),
                        snapshot_times=(T,))
        res = simulate_ids(params, cfg, np.arange(n), np.full(n, pt[0]), np.full(n, pt[1]))
        h = histogram(res.v[0], res.g[0], hist_grid)
        return np.rint(h.masses() * n).astype(np.int64)

    if threads > 1 and len(pts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(one, pts))
    else:
        out = [one(pt) for pt in pts]
    return np.array(out)


def _block_minima(counts: np.ndarray, block) -> np.ndarray:
    """Minimum over points and cells of every ``block``-shaped window."""
    bv, bg = block
    pmin = counts.min(axis=0)
    nv, ng = pmin.shape
    out = np.empty((nv - bv + 1, ng - bg + 1), dtype=counts.dtype)
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            out[i, j] = pmin[i:i + bv, j:j + bg].min()
    return out


def minorization_from_counts(points, counts, n: int, R: float, T: float, hist_grid: GridSpec,
                             block=(2, 2), confidence: float = 0.95,
                             min_count: int = 5) -> MinorizationReport:
    """Pick the target block ``K`` and estimate ``eta`` from probe histograms.

    ``K`` is the ``block``-shaped cell window maximizing the smallest count
    over probe points and cells. ``eta_hat = |K| * min density on K``, i.e.
    the number of cells in ``K`` times the smallest cell probability. Its
    lower bound uses one-sided Clopper-Pearson limits with a Bonferroni
    correction over all (point, cell) pairs in ``K``.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    mins = _block_minima(counts, block)
    i0, j0 = np.unravel_index(int(np.argmax(mins)), mins.shape)
    i1, j1 = i0 + block[0], j0 + block[1]
    sub = counts[:, i0:i1, j0:j1].reshape(len(pts), -1)
    n_cells = sub.shape[1]
    cmin = int(sub.min())
    eta_hat = n_cells * cmin / n
    alpha = (1.0 - confidence) / sub.size
    lcb_cells = np.where(sub > 0, stats.beta.ppf(alpha, np.maximum(sub, 1), n - sub + 1), 0.0)
    eta_lcb = float(n_cells * lcb_cells.min())
    point_minima = sub.min(axis=1) / n
    worst = tuple(pts[int(np.argmin(point_minima))])
    if cmin == 0:
        status = "structural_failure"
    elif cmin < min_count or not eta_lcb > 0:
        status = "statistical_insufficiency"
    else:
        status = "pass"
    ve, ge = hist_grid.v_edges, hist_grid.g_edges
    return MinorizationReport(
        R=float(R), T=float(T), probe_points=pts, hist_grid=hist_grid,
        target_cells=(int(i0), int(i1), int(j0), int(j1)),
        target_box=(float(ve[i0]), float(ve[i1]), float(ge[j0]), float(ge[j1])),
        eta_hat=float(eta_hat), eta_lcb=eta_lcb, point_minima=point_minima,
        worst_point=worst, min_count=cmin, n_per_point=n, confidence=confidence, status=status)


def minorization_probe(params: ModelParams, harris: HarrisConstants, probe_density=(8, 8),
                       n_per_point: int = 10_000, T: float | None = None,
                       hist_grid: GridSpec | None = None, block=(2, 2), seed: int = 0,
                       confidence: float = 0.95, probe_points=None, dt: float = 0.01,
                       threads: int = 1) -> MinorizationReport:
    """Empirical minorization constant on ``C(harris.R)`` at time ``T`` (default ``harris.T``)."""
    if n_per_point < 1:
        raise ValueError("n_per_point must be >= 1")
    if not harris.J_star > 0:
        raise ValueError("Harris constants are not valid (J* <= 0)")
    T = harris.T if T is None else float(T)
    hist_grid = hist_grid or default_probe_hist_grid(params)
    pts = (small_set_grid(params, harris.R, *probe_density) if probe_points is None
           else np.asarray(probe_points, float).reshape(-1, 2))
    counts = probe_counts(params, pts, T, n_per_point, hist_grid, seed, dt, threads)
    return minorization_from_counts(pts, counts, n_per_point, harris.R, T, hist_grid,
                                    block, confidence)


def minorization_monotonicity(params: ModelParams, R_values=(1.0, 4.0), probe_density=(8, 8),
                              n_per_point: int = 10_000, v_r=None, g_r=None, seed: int = 0,
                              hist_grid: GridSpec | None = None, block=(2, 2),
                              confidence: float = 0.95, dt: float = 0.01,
                              threads: int = 1) -> list[MinorizationReport]:
    """Minorization reports for increasing ``R`` on nested probe sets.

    The probe set for ``R_k`` is the union of the grids for ``R_1..R_k``.
    ``C(R)`` grows with ``R`` and each point keeps its histogram, so
    ``eta_hat`` can only decrease along the list.
    """
    R_values = sorted(float(r) for r in R_values)
    hist_grid = hist_grid or default_probe_hist_grid(params)
    cache: dict = {}
    reports = []
    pts_all = np.zeros((0, 2))
    for R in R_values:
        harris = harris_constants(params, R, v_r, g_r)
        new = small_set_grid(params, R, *probe_density)
        pts_all = np.unique(np.vstack([pts_all, new]), axis=0)
        todo = [tuple(p) for p in pts_all if tuple(p) not in cache]
        if todo:
            counts = probe_counts(params, todo, harris.T, n_per_point, hist_grid, seed, dt, threads)
            cache.update(zip(todo, counts))
        counts = np.array([cache[tuple(p)] for p in pts_all])
        reports.append(minorization_from_counts(pts_all, counts, n_per_point, R, harris.T,
                                                hist_grid, block, confidence))
    return reports


# -- convergence rate ---------------------------------------------------------


@dataclass
class RateFitReport:
    label: str
    mode: str
    times: np.ndarray
    distances: np.ndarray
    window: tuple
    lam: float
    lam_ci: tuple
    C: float
    r2: float
    theta: float
    T: float
    noise_floor: float
    monotone: bool
    status: str

    @property
    def conclusive(self) -> bool:
        return self.status == "ok"


def fit_exponential(times, distances, n_boot: int = 200, seed: int = 0):
    """Least-squares fit of ``log d = c - lam t``.

    Returns ``(lam, c, r2, (lo, hi))``; the interval is the 2.5-97.5 %
    percentile range of ``lam`` over a residual bootstrap.
    """
    t = np.asarray(times, float)
    y = np.log(np.asarray(distances, float))
    slope, c = np.polyfit(t, y, 1)
    pred = c + slope * t
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    resid = y - pred
    rng = np.random.default_rng(seed)
    boots = np.empty(n_boot)
    for b in range(n_boot):
        yb = pred + rng.choice(resid, size=resid.size, replace=True)
        boots[b] = -np.polyfit(t, yb, 1)[0]
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return float(-slope), float(c), r2, (float(lo), float(hi))


def _expected_histogram_l1(masses: np.ndarray, weights: np.ndarray, n: int) -> float:
    """Mean weighted L1 error of an ``n``-sample histogram, Gaussian approximation."""
    return float((weights * np.sqrt(2.0 * masses * (1.0 - masses) / (math.pi * n))).sum())


def _fit_report(label, mode, times, dists, horizon, floor, transient_fraction, T,
                min_points=5, min_r2=0.9, mono_tol=1e-9, n_boot=200) -> RateFitReport:
    times = np.asarray(times, float)
    dists = np.asarray(dists, float)
    t0 = transient_fraction * horizon
    window = (t0, float(times[-1]))
    post = times >= t0 - 1e-9
    d_post = dists[post]
    # increases below the noise floor do not count
    monotone = bool(np.all(np.diff(d_post) <= np.maximum(mono_tol * d_post[:-1], floor)))
    nan = float("nan")
    if np.all(dists[times > 0] <= floor):
        return RateFitReport(label, mode, times, dists, window, nan, (nan, nan), nan, nan, nan,
                             T, floor, monotone, "already_stationary")
    use = post & (dists > 2.0 * floor)
    if use.sum() < min_points:
        return RateFitReport(label, mode, times, dists, window, nan, (nan, nan), nan, nan, nan,
                             T, floor, monotone, "inconclusive")
    lam, c, r2, ci = fit_exponential(times[use], dists[use], n_boot)
    d0 = dists[0] if times[0] == 0 else nan
    status = "ok" if (r2 >= min_r2 and lam > 0) else "inconclusive"
    return RateFitReport(label, mode, times, dists, window, lam, ci, math.exp(c) / d0, r2,
                         math.exp(-lam * T), T, floor, monotone, status)


def convergence_study(params: ModelParams, initial_measures, horizon: float = 10.0,
                      cfg: WeightedTvConfig | None = None, solver: str = "pde",
                      steady: DensityField | None = None, op=None, dt: float = 0.02,
                      record_every: float = 0.1, n_particles: int = 100_000,
                      particle_dt: float = 0.01, seed: int = 0, transient_fraction: float = 0.2,
                      harris: HarrisConstants | None = None, labels=None,
                      threads: int = 1) -> list[RateFitReport]:
    """Track ``||mu_t - pi||_beta`` for each initial measure and fit ``C e^{-lam t}``.

    ``solver`` is ``"pde"``, ``"particle"`` or ``"both"``. Particle distances
    use histograms on the steady grid coarsened to at most 20 x 20 cells and
    carry a noise floor equal to the expected histogram error under ``pi``.
    """
    if solver not in ("pde", "particle", "both"):
        raise ValueError(f"unknown solver {solver!r}")
    cfg = cfg or WeightedTvConfig(g_in=params.g_in)
    grid = cfg.grid or GridSpec.for_params(params, 200, 200)
    if op is None:
        op = fpsolver.assemble(params, grid)
    if steady is None:
        steady = fpsolver.steady_state(op)
    harris = harris or harris_constants(params)
    labels = labels or [repr(m) for m in initial_measures]
    n_rec = round(horizon / record_every)
    reports = []

    if solver in ("pde", "both"):
        every = max(1, round(record_every / dt))
        for label, mu in zip(labels, initial_measures):
            fld = mu.to_field(op.grid)
            if fld.overflow_mass > 0:
                raise ValueError(f"initial measure {label} has mass above g_max")
            times, dists = [0.0], [weighted_tv(fld, steady, cfg)]

            def rec(f):
                times.append(len(times) * every * dt)
                dists.append(weighted_tv(f, steady, cfg))

            fpsolver.evolve(op, fld, dt, every * n_rec, every=every, callback=rec)
            reports.append(_fit_report(label, "pde", times, dists, horizon, 1e-9,
                                       transient_fraction, harris.T))

    if solver in ("particle", "both"):
        coarse = coarsen_to(steady)
        w = lyapunov_weight(coarse.grid.g_centers, cfg.beta, cfg.g_in)[None, :]
        floor = _expected_histogram_l1(coarse.masses(), w, n_particles)
        times = tuple(k * record_every for k in range(n_rec + 1))
        pdt = _dt_for(record_every, particle_dt)
        sim_cfg = SimConfig(dt=pdt, horizon=horizon, n_particles=n_particles, master_seed=seed,
                            snapshot_times=times)
        for label, mu in zip(labels, initial_measures):
            ids = np.arange(n_particles)
            v0, g0 = initial_states(mu, seed, ids)
            res = simulate_ids(params, sim_cfg, ids, v0, g0, threads=threads)
            dists = [weighted_tv(histogram(res.v[k], res.g[k], coarse.grid), coarse, cfg)
                     for k in range(len(times))]
            reports.append(_fit_report(label, "particle", times, dists, horizon, floor,
                                       transient_fraction, harris.T))
    return reports
