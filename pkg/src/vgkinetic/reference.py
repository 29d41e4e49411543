"""Closed-form and quadrature references for the conductance dynamics.

These do not touch the solvers; they serve as independent oracles.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate

from .model import ModelParams


def _gauss(params: ModelParams):
    return lambda x: math.exp(-(x - params.g_in) ** 2 / (2.0 * params.a))


def stationary_g_normalizer(params: ModelParams, upper: float = math.inf) -> float:
    return integrate.quad(_gauss(params), 0.0, upper, epsabs=0, epsrel=1e-13)[0]


def stationary_g_density(params: ModelParams, g, upper: float = math.inf):
    """Truncated Gaussian ``exp(-(g - g_in)^2 / 2a)`` on ``[0, upper]``, normalized."""
    g = np.asarray(g, dtype=float)
    z = stationary_g_normalizer(params, upper)
    dens = np.exp(-(g - params.g_in) ** 2 / (2.0 * params.a)) / z
    return np.where((g >= 0) & (g <= upper), dens, 0.0)


def stationary_g_cell_masses(params: ModelParams, edges, upper: float = math.inf) -> np.ndarray:
    """Mass of each cell ``[edges[k], edges[k+1]]`` under the stationary law, by quadrature."""
    f = _gauss(params)
    z = stationary_g_normalizer(params, upper)
    return np.array([integrate.quad(f, lo, hi, epsabs=0, epsrel=1e-12)[0]
                     for lo, hi in zip(edges[:-1], edges[1:])]) / z


def stationary_w_moment(params: ModelParams) -> float:
    """``E[(G - g_in)^2]`` under the stationary reflected OU law."""
    f = _gauss(params)
    num = integrate.quad(lambda x: (x - params.g_in) ** 2 * f(x), 0.0, math.inf,
                         epsabs=0, epsrel=1e-12)[0]
    return num / stationary_g_normalizer(params)


def ou_transition_moments(params: ModelParams, g0, t):
    """Mean and variance of the unreflected OU at time ``t`` from ``g0``."""
    mean = params.g_in + (np.asarray(g0, float) - params.g_in) * math.exp(-t)
    var = params.a * -math.expm1(-2.0 * t)
    return mean, var


def frozen_period(params: ModelParams, g: float) -> float:
    """Inter-spike time when the conductance is held at ``g`` (inf below ``g_F``)."""
    kappa = params.g_L + g
    v_inf = (params.g_L * params.V_R + g * params.V_E) / kappa
    if v_inf <= params.V_F:
        return math.inf
    return math.log((v_inf - params.V_R) / (v_inf - params.V_F)) / kappa
