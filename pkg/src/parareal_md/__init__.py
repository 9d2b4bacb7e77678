"""Molecular dynamics with multilevel summation electrostatics and parareal time integration."""

from .core import (COULOMB_K, REAL, REDUCED, BlowUpError, ConfigurationError, CoverageError,
                   DimensionError, ForceReport, MDError, ParticleSystem, SingularityError,
                   StateVector, state_axpy, state_distance, state_from_system)
from .forcefield import ForceField
from .integrate import Propagator, propagate
from .msm import MsmParams, msm_energy_forces
from .parareal import PararealConfig, run_simulation, run_window
from .potentials import ElectrostaticsBackend, LjParams
from .systems import random_system, rock_salt_cluster

__version__ = "0.1.0"

__all__ = [
    "COULOMB_K", "REAL", "REDUCED", "BlowUpError", "ConfigurationError", "CoverageError",
    "DimensionError", "ElectrostaticsBackend", "ForceField", "ForceReport", "LjParams", "MDError",
    "MsmParams", "PararealConfig", "ParticleSystem", "Propagator", "SingularityError",
    "StateVector", "msm_energy_forces", "propagate", "random_system", "rock_salt_cluster",
    "run_simulation", "run_window",
    "state_axpy", "state_distance", "state_from_system",
]
