import math

import numpy as np
import pytest
from scipy import stats

from vgkinetic.model import ModelParams
from vgkinetic.reference import (frozen_period, ou_transition_moments, stationary_g_cell_masses,
                                 stationary_g_density, stationary_g_normalizer,
                                 stationary_w_moment)


def test_normalizer_matches_erf_form():
    p = ModelParams(a=0.5, g_in=0.7)
    want = math.sqrt(2 * math.pi * p.a) * stats.norm.cdf(p.g_in / math.sqrt(p.a))
    assert stationary_g_normalizer(p) == pytest.approx(want, rel=1e-12)


def test_cell_masses_sum_to_one():
    p = ModelParams()
    edges = np.linspace(0, 12, 61)
    assert stationary_g_cell_masses(p, edges).sum() == pytest.approx(1.0, abs=1e-12)
    assert stationary_g_density(p, -1.0) == 0.0


def test_w_moment_matches_truncated_normal():
    p = ModelParams()
    tn = stats.truncnorm(-1.0, np.inf, loc=1.0, scale=1.0)
    want = tn.var() + (tn.mean() - 1.0) ** 2
    assert stationary_w_moment(p) == pytest.approx(want, rel=1e-10)


def test_ou_moments_and_frozen_period():
    p = ModelParams()
    m, v = ou_transition_moments(p, 3.0, 0.5)
    assert m == pytest.approx(1 + 2 * math.exp(-0.5)) and v == pytest.approx(1 - math.exp(-1))
    assert frozen_period(p, 2.0) == pytest.approx(math.log(4) / 3, rel=1e-15)
    assert frozen_period(p, 0.5) == math.inf
