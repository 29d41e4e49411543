import numpy as np
import pytest
import scipy.sparse as sp

from vgkinetic import fpsolver
from vgkinetic.grid import GridError, GridSpec
from vgkinetic.measures import UniformBox
from vgkinetic.model import ModelParams, velocity
from vgkinetic.reference import stationary_g_cell_masses

P = ModelParams()


def test_bernoulli():
    assert fpsolver.bernoulli(0.0) == 1.0
    w = np.array([-3.0, 1e-9, 2.0])
    assert np.allclose(fpsolver.bernoulli(w), w / np.expm1(w))


def test_ou_operator_zero_flux_state_is_sampled_gaussian():
    n, gmax = 60, 7.0
    A = fpsolver.ou_operator(P, n, gmax)
    gc = (np.arange(n) + 0.5) * gmax / n
    gauss = np.exp(-(gc - 1) ** 2 / 2)
    assert np.abs(A @ gauss).max() < 1e-12
    assert np.abs(np.asarray(A.sum(axis=0))).max() < 1e-12


def test_matrix_structure(small_op):
    A = small_op.matrix
    assert np.abs(np.asarray(A.sum(axis=0))).max() < 1e-12
    off = A - sp.diags(A.diagonal())
    assert off.min() >= 0


def test_threshold_rows_follow_g_F(small_op):
    gc = small_op.grid.g_centers
    fire = velocity(P, P.V_F, gc) > 0
    assert np.array_equal(small_op.outflow_speed > 0, fire)
    assert np.all(gc[small_op.reinject_rows] > P.g_F)


def test_steady_state(small_op, small_steady):
    assert small_steady.meta["residual"] <= 1e-10
    assert small_steady.total_mass() == pytest.approx(1.0, abs=1e-13)
    assert small_steady.values.min() >= 0
    later = fpsolver.evolve(small_op, small_steady, 0.05, 20)
    assert np.abs(later.values - small_steady.values).max() < 1e-10


def test_steady_marginal_close_to_oracle(small_steady):
    g = small_steady.grid
    exact = stationary_g_cell_masses(P, g.g_edges, upper=g.g_max) / g.dg
    assert np.abs(small_steady.g_marginal() - exact).max() < 2e-3


def test_implicit_steps_conserve_mass_and_positivity(small_op):
    fld = UniformBox(0, 1, 0, 2).to_field(small_op.grid)
    mins = []
    out = fpsolver.evolve(small_op, fld, 0.02, 200, callback=lambda f: mins.append(f.values.min()))
    assert abs(out.total_mass() - 1.0) < 1e-12
    assert min(mins) >= 0
    assert out.t == pytest.approx(4.0)


def test_explicit_step_and_cfl(small_op):
    fld = UniformBox(0, 1, 0, 2).to_field(small_op.grid)
    bound = small_op.cfl_bound()
    with pytest.raises(fpsolver.CFLError, match="stability bound"):
        fpsolver.step(small_op, fld, 2 * bound, scheme="explicit")
    dt = bound / 4
    a = fpsolver.evolve(small_op, fld, dt, 40, scheme="explicit")
    b = fpsolver.evolve(small_op, fld, dt, 40)
    assert a.values.min() >= 0
    assert np.abs(a.masses() - b.masses()).sum() < 1e-2
    with pytest.raises(ValueError):
        fpsolver.step(small_op, fld, dt, scheme="rk4")


def test_flux_profiles_and_rate(small_op, small_steady):
    out = fpsolver.boundary_flux_profile(small_op, small_steady, "V_F")
    inn = fpsolver.boundary_flux_profile(small_op, small_steady, "V_R")
    assert np.array_equal(out, inn)
    assert np.all(out[small_op.grid.g_centers < P.g_F] == 0)
    rate = fpsolver.firing_rate(small_op, small_steady)
    assert 0.9 < rate < 1.2
    with pytest.raises(ValueError):
        fpsolver.boundary_flux_profile(small_op, small_steady, "middle")


def test_assemble_rejects_bad_grid():
    with pytest.raises(GridError, match="g_F"):
        fpsolver.assemble(P, GridSpec(40, 37, 8.0))


def test_steady_state_reports_non_convergence(small_op):
    with pytest.raises(fpsolver.SolverError) as exc:
        fpsolver.steady_state(small_op, dt=1e-3, max_iter=2)
    assert exc.value.residual > 0


def test_grid_refinement_firing_rate_converges():
    rates = []
    for n in (40, 80):
        op = fpsolver.assemble(P, GridSpec(n, 80, 8.0))
        rates.append(fpsolver.firing_rate(op, fpsolver.steady_state(op)))
    # first-order in dv, approaching about 1.06 from below
    assert rates[0] < rates[1] < 1.07
