import math

import pytest
from hypothesis import given, strategies as st

from vgkinetic.model import (HarrisConstructionError, ModelParams, ParameterError,
                             critical_conductance, default_box, harris_constants, inward_speed,
                             load_model_config, max_admissible_g_r, small_set_bounds, velocity,
                             zero_point)

finite = st.floats(-50, 50, allow_nan=False)


def test_defaults_and_g_F():
    p = ModelParams()
    assert (p.g_L, p.V_E, p.V_R, p.V_F, p.a, p.g_in) == (1, 2, 0, 1, 1, 1)
    assert critical_conductance(p) == 1.0
    assert velocity(p, p.V_F, p.g_F) == 0.0


@pytest.mark.parametrize("kw,key", [(dict(V_E=1.0), "V_E"), (dict(V_F=0.0), "V_F"),
                                    (dict(a=0.0), "a"), (dict(g_L=-1.0), "g_L"),
                                    (dict(g_in=math.nan), "g_in")])
def test_invalid_parameters_name_the_key(kw, key):
    with pytest.raises(ParameterError) as exc:
        ModelParams(**kw)
    assert exc.value.key == key


@given(v=finite, g=finite, s=st.floats(-3, 3))
def test_velocity_is_affine_in_g(v, g, s):
    p = ModelParams(g_L=0.7, V_E=3.0)
    lhs = velocity(p, v, g + s)
    rhs = velocity(p, v, g) + s * (p.V_E - v)
    assert lhs == pytest.approx(rhs, abs=1e-9 * (1 + abs(lhs)))


@given(g=st.floats(0, 20))
def test_threshold_speed_sign_matches_g_F(g):
    p = ModelParams()
    J = velocity(p, p.V_F, g)
    if g > p.g_F:
        assert J > 0
    elif g < p.g_F:
        assert J < 0


def test_zero_point_and_small_set():
    p = ModelParams()
    assert zero_point(p) == (0.5, 1 / 3)
    assert velocity(p, 0.5, 1 / 3) == pytest.approx(0, abs=1e-15)
    assert small_set_bounds(p, 1.0) == (0.0, 2.0)
    assert small_set_bounds(p, 9.0) == (0.0, 4.0)


def test_harris_constants_default_normalization():
    h = harris_constants(ModelParams(), R=1.0)
    assert h.v_star == 0.5 and h.g_star == 1 / 3
    assert h.M_of_R == 2.0
    assert h.T2 == 3 / 22
    assert h.T1 == pytest.approx(1 + h.T3) and h.T == pytest.approx(h.T1 + h.T2)
    assert h.J_star > 0 and h.T3 == pytest.approx(1 / (2 * h.J_star))


def test_harris_invariants_hold_for_varied_inputs():
    for p in (ModelParams(), ModelParams(g_L=2.0, V_E=3.0), ModelParams(V_R=-1.0, V_F=0.5, V_E=1.5)):
        for R in (1.0, 4.0, 9.0):
            h = harris_constants(p, R)
            assert h.J_star > 0 and h.T2 > 0 and h.T1 > h.T3 > 0
            assert p.V_R < h.v_star - h.v_r and h.v_star + h.v_r < p.V_F
            assert h.g_star - h.g_r > 0


def test_inward_speed_detects_sign_change():
    p = ModelParams()
    # symmetric 0.05 box: J changes sign on the left face, so no inward speed
    assert inward_speed(p, 0.5, 1 / 3, 0.05, 0.05) == 0.0
    assert 0.05 > max_admissible_g_r(p, 0.05)
    with pytest.raises(HarrisConstructionError, match="need v_r > 0"):
        harris_constants(p, v_r=0.05, g_r=0.05)
    v_r, g_r = default_box(p)
    assert inward_speed(p, 0.5, 1 / 3, v_r, g_r) > 0


def test_inward_speed_is_min_over_faces():
    p = ModelParams()
    v_r, g_r = default_box(p)
    got = inward_speed(p, 0.5, 1 / 3, v_r, g_r)
    corners = [abs(velocity(p, 0.5 + sv * v_r, 1 / 3 + sg * g_r))
               for sv in (-1, 1) for sg in (-1, 1)]
    assert got == pytest.approx(min(corners))


@pytest.mark.parametrize("kw", [dict(R=0.5), dict(beta=0.0)])
def test_harris_rejects_bad_levels(kw):
    with pytest.raises(ParameterError):
        harris_constants(ModelParams(), **kw)


def test_harris_rejects_box_outside_state_space():
    with pytest.raises(HarrisConstructionError):
        harris_constants(ModelParams(), v_r=0.6, g_r=0.01)
    with pytest.raises(HarrisConstructionError):
        harris_constants(ModelParams(), v_r=0.05, g_r=0.5)


def test_load_model_config(tmp_path):
    f = tmp_path / "m.ini"
    f.write_text("g_L = 1\nV_E = 2\nR = 4\n")
    cfg = load_model_config(f)
    assert cfg.params == ModelParams() and cfg.R == 4.0
    f.write_text("[model]\nV_E = 1\n")
    with pytest.raises(ParameterError) as exc:
        load_model_config(f)
    assert exc.value.key == "V_E"
    f.write_text("[model]\nfoo = 1\n")
    with pytest.raises(ParameterError, match="foo"):
        load_model_config(f)
