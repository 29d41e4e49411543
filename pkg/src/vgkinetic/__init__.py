"""
vgkinetic
=========

Particle and finite-volume solvers for the voltage-conductance kinetic model
of integrate-and-fire neurons, with diagnostics for its exponential
convergence to equilibrium.

Modules
-------
model       parameters, velocity field and the Harris construction constants
particle    exact-crossing Monte Carlo simulation of the jump-reset SDE
fpsolver    Chang-Cooper / upwind finite-volume Fokker-Planck solver
ergodicity  weighted TV norm, Lyapunov and minorization probes, rate fits
validate    cross-checks between the two solvers
cli         command-line driver
"""
from .io import VERSION as __version__
from .grid import DensityField, GridSpec, histogram, total_variation
from .measures import FieldMeasure, PointMass, SampleSet, UniformBox, parse_measure
from .model import (HarrisConstants, HarrisConstructionError, ModelParams, ParameterError,
                    critical_conductance, harris_constants, velocity)
from .particle import (ParticleState, SimConfig, SpikeRecords, simulate_ensemble,
                       simulate_particle)
from .fpsolver import assemble, steady_state
from .ergodicity import (WeightedTvConfig, convergence_study, lyapunov_probe,
                         minorization_probe, weighted_tv)
from .validate import run_validation

__all__ = [
    "__version__", "DensityField", "GridSpec", "histogram", "total_variation",
    "FieldMeasure", "PointMass", "SampleSet", "UniformBox", "parse_measure",
    "HarrisConstants", "HarrisConstructionError", "ModelParams", "ParameterError",
    "critical_conductance", "harris_constants", "velocity", "ParticleState", "SimConfig",
    "SpikeRecords", "simulate_ensemble", "simulate_particle", "assemble", "steady_state",
    "WeightedTvConfig", "convergence_study", "lyapunov_probe", "minorization_probe",
    "weighted_tv", "run_validation",
]
