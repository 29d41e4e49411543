"""
Model parameters, the voltage velocity field and the Harris construction.

Every other module takes its physical constants from :class:`ModelParams`,
so the velocity field ``J(v, g) = g_L (V_R - v) + g (V_E - v)`` has exactly
one definition in the package.

The default parameter set is the normalized one, ``V_R = 0``, ``V_F = 1``,
``a = g_in = 1``, with ``g_L = 1`` and ``V_E = 2``.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ParameterError(ValueError):
    """Raised when a parameter set violates a model invariant.

    ``key`` names the offending parameter when there is a single culprit.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class HarrisConstructionError(ValueError):
    """Raised when the box around the zero point cannot trap trajectories."""


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the voltage-conductance model.

    Parameters
    ----------
    g_L : float
        Leak conductance, > 0.
    V_E : float
        Excitatory reversal potential, > V_F.
    V_R, V_F : float
        Reset voltage and firing threshold, V_R < V_F.
    a : float
        Diffusion coefficient of the conductance, > 0.
    g_in : float
        Mean input conductance, > 0.
    """

    g_L: float = 1.0
    V_E: float = 2.0
    V_R: float = 0.0
    V_F: float = 1.0
    a: float = 1.0
    g_in: float = 1.0

    def __post_init__(self):
        for name in ("g_L", "V_E", "V_R", "V_F", "a", "g_in"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}", key=name)
        if not self.V_F > self.V_R:
            raise ParameterError(
                f"need V_F > V_R, got V_F={self.V_F!r}, V_R={self.V_R!r}", key="V_F")
        if not self.V_E > self.V_F:
            raise ParameterError(
                f"need V_E > V_F, got V_E={self.V_E!r}, V_F={self.V_F!r}", key="V_E")
        for name in ("g_L", "a", "g_in"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be > 0, got {getattr(self, name)!r}",
                                     key=name)

    @property
    def g_F(self) -> float:
        return critical_conductance(self)


def velocity(params: ModelParams, v, g):
    """Voltage drift ``J(v, g)``; accepts scalars or arrays, defined for all reals."""
    return params.g_L * (params.V_R - v) + g * (params.V_E - v)


def critical_conductance(params) -> float:
    """Conductance ``g_F`` at which the drift at threshold changes sign.

    ``J(V_F, g) > 0`` exactly when ``g > g_F``. Works on any object with the
    ``g_L, V_E, V_R, V_F`` attributes so that it can also validate raw input.
    """
    if not params.V_E > params.V_F:
        raise ParameterError("critical conductance needs V_E > V_F", key="V_E")
    return params.g_L * (params.V_F - params.V_R) / (params.V_E - params.V_F)


def zero_point(params: ModelParams) -> tuple[float, float]:
    """Zero of ``J`` at the mid voltage: ``v* = (V_R+V_F)/2``, ``J(v*, g*) = 0``."""
    v_star = 0.5 * (params.V_R + params.V_F)
    g_star = params.g_L * (v_star - params.V_R) / (params.V_E - v_star)
    return v_star, g_star


def small_set_bounds(params: ModelParams, R: float) -> tuple[float, float]:
    """Conductance range ``[g_lo, M(R)]`` of the sublevel set ``{(g - g_in)^2 <= R}``."""
    root = math.sqrt(R)
    return max(0.0, params.g_in - root), params.g_in + root


def max_admissible_g_r(params: ModelParams, v_r: float) -> float:
    """Largest ``g_r`` keeping the drift inward on both vertical faces of the box.

    On the left face ``J(v* - v_r, g* - g_r) = v_r (g_L + g*) - g_r (V_E - v* + v_r)``,
    which is the binding one of the two face constraints.
    """
    v_star, g_star = zero_point(params)
    return v_r * (params.g_L + g_star) / (params.V_E - v_star + v_r)


def default_box(params: ModelParams) -> tuple[float, float]:
    v_star, g_star = zero_point(params)
    v_r = min(0.05, 0.5 * g_star)
    g_r = min(0.05, 0.5 * g_star, 0.5 * max_admissible_g_r(params, v_r))
    return v_r, g_r


@dataclass(frozen=True)
class HarrisConstants:
    """Constructive constants of the minorization argument.

    ``T1 = 1 + T3`` is the time by which trajectories started in the small set
    can be trapped in the box ``N = [v*-v_r, v*+v_r] x [g*-g_r, g*+g_r]``,
    ``T2`` the spreading time from ``N`` and ``T = T1 + T2`` the Harris step.
    """

    v_star: float
    g_star: float
    v_r: float
    g_r: float
    J_star: float
    T1: float
    T2: float
    T3: float
    T: float
    R: float
    M_of_R: float
    g_lo_of_R: float = 0.0
    beta: float = 1.0

    @property
    def box(self) -> tuple[float, float, float, float]:
        """``(v_lo, v_hi, g_lo, g_hi)`` of the trapping box ``N``."""
        return (self.v_star - self.v_r, self.v_star + self.v_r,
                self.g_star - self.g_r, self.g_star + self.g_r)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "v_star", "g_star", "v_r", "g_r", "J_star", "T1", "T2", "T3", "T",
            "R", "M_of_R", "g_lo_of_R", "beta")}


def inward_speed(params: ModelParams, v_star, g_star, v_r, g_r) -> float:
    """Minimal ``|J|`` over the two vertical faces of the box, or 0.

    ``J`` is affine in ``g`` on each face, so the extremes sit at the corners.
    If ``J`` is not strictly positive on the whole left face and strictly
    negative on the whole right face, the face contains a point where the
    drift vanishes (or points outward) and the result is 0.
    """
    g_lo, g_hi = g_star - g_r, g_star + g_r
    left = velocity(params, v_star - v_r, np.array([g_lo, g_hi]))
    right = velocity(params, v_star + v_r, np.array([g_lo, g_hi]))
    if left.min() <= 0.0 or right.max() >= 0.0:
        return 0.0
    return float(min(left.min(), -right.max()))


def harris_constants(params: ModelParams, R: float = 1.0, v_r: float | None = None,
                     g_r: float | None = None, beta: float = 1.0) -> HarrisConstants:
    """Build the zero point, trapping box and construction times.

    Parameters
    ----------
    params : ModelParams
    R : float
        Lyapunov level of the small set, ``R >= 1``.
    v_r, g_r : float, optional
        Half-widths of the box. Defaults come from :func:`default_box`.
    beta : float
        Weight of the Lyapunov function in the weighted TV norm; carried along.

    Raises
    ------
    HarrisConstructionError
        If the box is degenerate, leaves the state space, or the drift is not
        strictly inward on its vertical faces.
    """
    if not R >= 1:
        raise ParameterError(f"R must be >= 1, got {R!r}", key="R")
    if not beta > 0:
        raise ParameterError(f"beta must be > 0, got {beta!r}", key="beta")
    d_vr, d_gr = default_box(params)
    v_r = d_vr if v_r is None else float(v_r)
    g_r = d_gr if g_r is None else float(g_r)
    if v_r < 0 or g_r < 0:
        raise HarrisConstructionError("box half-widths must be non-negative")

    v_star, g_star = zero_point(params)
    if not g_star - g_r > 0:
        raise HarrisConstructionError(
            f"box reaches g <= 0: g* - g_r = {g_star - g_r!r}")
    if not (params.V_R < v_star - v_r and v_star + v_r < params.V_F):
        raise HarrisConstructionError("box leaves the voltage interval")
    J_star = inward_speed(params, v_star, g_star, v_r, g_r)
    if not J_star > 0:
        limit = max_admissible_g_r(params, v_r) if v_r > 0 else 0.0
        raise HarrisConstructionError(
            f"drift is not strictly inward on the faces of N (J* = 0) for "
            f"v_r={v_r!r}, g_r={g_r!r}; need v_r > 0 and g_r < {limit!r}")

    # general-scale form of 1/((2 g* + 3) V_E); equal to it when V_R=0, V_F=1.
    # g* is kept as num/den so the only rounding is the final division.
    num = params.g_L * (v_star - params.V_R)
    den = params.V_E - v_star
    T2 = (params.V_F - params.V_R) * den / ((2.0 * num + 3.0 * den) * (params.V_E - params.V_R))
    T3 = 1.0 / (2.0 * J_star)
    T1 = 1.0 + T3
    g_lo, M = small_set_bounds(params, R)
    return HarrisConstants(v_star=v_star, g_star=g_star, v_r=v_r, g_r=g_r,
                           J_star=J_star, T1=T1, T2=T2, T3=T3, T=T1 + T2,
                           R=float(R), M_of_R=M, g_lo_of_R=g_lo, beta=float(beta))


MODEL_KEYS = ("g_L", "V_E", "V_R", "V_F", "a", "g_in")
HARRIS_KEYS = ("R", "v_r", "g_r", "beta")


def parse_number(text: str, key: str) -> float:
    # float() is locale independent and correctly rounded
    try:
        return float(text.strip())
    except ValueError:
        raise ParameterError(f"{key}: cannot parse {text!r} as a number", key=key) from None


@dataclass
class ModelConfig:
    params: ModelParams = field(default_factory=ModelParams)
    R: float = 1.0
    v_r: float | None = None
    g_r: float | None = None
    beta: float = 1.0

    def harris(self) -> HarrisConstants:
        return harris_constants(self.params, self.R, self.v_r, self.g_r, self.beta)


def model_config_from_mapping(items) -> ModelConfig:
    """Build a :class:`ModelConfig` from ``(key, text)`` pairs; unknown keys are errors."""
    values = {}
    for key, text in items:
        if key not in MODEL_KEYS + HARRIS_KEYS:
            raise ParameterError(f"unknown model key {key!r}", key=key)
        values[key] = parse_number(text, key)
    params = ModelParams(**{k: values[k] for k in MODEL_KEYS if k in values})
    return ModelConfig(params=params, R=values.get("R", 1.0), v_r=values.get("v_r"),
                       g_r=values.get("g_r"), beta=values.get("beta", 1.0))


def load_model_config(path) -> ModelConfig:
    """Read a flat ``key = value`` file (an optional ``[model]`` header is allowed)."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    if not text.lstrip().startswith("["):
        text = "[model]\n" + text
    parser.read_string(text)
    extra = [s for s in parser.sections() if s != "model"]
    if extra:
        raise ParameterError(f"unexpected section {extra[0]!r}", key=extra[0])
    return model_config_from_mapping(parser.items("model"))
