"""Particle, kinetic and perturbation-analysis solvers for the inertial
Kuramoto-Sakaguchi model with noise."""
from ._backend import BACKEND
from .model import (DegenerateDiffusionError, FrequencyDistribution, MaxwellianCache,
                    ModelError, ModelParams, gaussian_moment, maxwellian,
                    noise_condition_margin)
from .kinetic import (KineticSolver, KineticState, PhaseSpaceGrid, Profile,
                      coupling_field_kinetic, init_from_profile, stationarity_residual,
                      step_imex)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DegenerateDiffusionError", "FrequencyDistribution", "MaxwellianCache",
    "ModelError", "ModelParams", "gaussian_moment", "maxwellian", "noise_condition_margin",
    "KineticSolver", "KineticState", "PhaseSpaceGrid", "Profile", "coupling_field_kinetic",
    "init_from_profile", "stationarity_residual", "step_imex",
]
