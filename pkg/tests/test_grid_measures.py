import numpy as np
import pytest
from scipy import stats

from vgkinetic.grid import (GridError, GridSpec, coarsen, coarsen_to, coarsening_factor, histogram,
                            total_variation)
from vgkinetic.measures import FieldMeasure, PointMass, SampleSet, UniformBox, parse_measure
from vgkinetic.model import ModelParams


def test_for_params_places_face_on_g_F():
    p = ModelParams()
    g = GridSpec.for_params(p, 200, 200)
    assert g.has_face_at(p.g_F)
    assert g.g_max >= p.g_in + 6
    g.validate_solver_grid(p)


def test_solver_grid_validation():
    p = ModelParams()
    with pytest.raises(GridError, match="g_F"):
        GridSpec(40, 37, 8.0).validate_solver_grid(p)
    with pytest.raises(GridError, match="g_max"):
        GridSpec(40, 40, 4.0).validate_solver_grid(p)
    with pytest.raises(GridError, match=">= 8"):
        GridSpec(4, 40, 8.0).validate_solver_grid(p)


def test_histogram_mass_and_overflow():
    grid = GridSpec(10, 10, 2.0)
    h = histogram([0.05, 0.5, 0.95, 0.5], [0.1, 1.0, 1.9, 5.0], grid)
    assert h.total_mass() == pytest.approx(1.0)
    assert h.overflow_mass == 0.25 and h.overflow_g == 5.0
    assert h.masses()[9, 9] == 0.25


def test_coarsen_preserves_mass():
    rng = np.random.default_rng(1)
    grid = GridSpec(200, 200, 8.0)
    h = histogram(rng.random(1000), 8 * rng.random(1000), grid)
    c = coarsen_to(h)
    assert c.grid.shape == (20, 20)
    assert c.total_mass() == pytest.approx(1.0)
    assert coarsening_factor(16, 20) == 1 and coarsening_factor(200, 20) == 10
    with pytest.raises(GridError):
        coarsen(h, 3, 1)


def test_total_variation_point_masses():
    grid = GridSpec(10, 10, 2.0)
    a, b = PointMass(0.1, 0.1).to_field(grid), PointMass(0.9, 1.9).to_field(grid)
    assert total_variation(a, b) == 1.0
    assert total_variation(a, a) == 0.0
    with pytest.raises(GridError):
        total_variation(a, PointMass(0.1, 0.1).to_field(GridSpec(5, 10, 2.0)))


def test_uniform_box_projection_is_exact():
    grid = GridSpec(10, 8, 4.0)
    f = UniformBox(0.13, 0.77, 0.3, 3.1).to_field(grid)
    assert f.total_mass() == pytest.approx(1.0, abs=1e-14)
    # mass in [0.2, 0.5) x [1, 2] equals the overlap fraction
    want = (0.5 - 0.2) * (2 - 1) / ((0.77 - 0.13) * (3.1 - 0.3))
    assert f.masses()[2:5, 2:4].sum() == pytest.approx(want)
    over = UniformBox(0, 1, 3, 5).to_field(grid)
    assert over.overflow_mass == pytest.approx(0.5) and over.overflow_g == 4.5


def test_uniform_box_sampling_is_uniform():
    v, g = UniformBox(0, 1, 0, 2).sample(np.random.default_rng(0), 20_000)
    assert stats.kstest(v, "uniform").pvalue > 1e-3
    assert stats.kstest(g / 2, "uniform").pvalue > 1e-3


def test_field_measure_round_trip():
    grid = GridSpec(10, 10, 2.0)
    src = UniformBox(0.2, 0.6, 0.4, 1.2).to_field(grid)
    m = FieldMeasure(src)
    v, g = m.sample(np.random.default_rng(0), 200_000)
    assert total_variation(histogram(v, g, grid), src) < 0.01
    assert np.array_equal(m.to_field(grid).values, src.values)


def test_parse_measure(tmp_path):
    assert parse_measure("point:0.1,0.2") == PointMass(0.1, 0.2)
    assert parse_measure(" uniform: 0,1,0,3") == UniformBox(0, 1, 0, 3)
    f = tmp_path / "s.csv"
    f.write_text("# v,g\n0.1,0.2\n0.3,0.4\n")
    s = parse_measure(f"file:{f}")
    assert isinstance(s, SampleSet) and s.g == (0.2, 0.4)
    for bad in ("point:1", "cone:1,2", "uniform:0,0,0,1", "stationary"):
        with pytest.raises(ValueError):
            parse_measure(bad)
