"""Pseudo-spectral simulator and verification toolkit for the forced
magneto-geostrophic active scalar equation on the periodic 3-torus."""
from .errors import (ConfigError, DiagnosticError, GaugeViolationError, LatticeError, MGError,
                     SnapshotError, UnstableStepError)
from .multipliers import MG, ZERO, MultiplierFamily, apply_velocity, mg_symbol, t_symbol
from .solver import (EnergyLedger, ForcingSpec, SimState, SolverConfig, Trajectory, integrate,
                     random_initial_field, step)
from .spectral_core import Lattice, ShellDecomposition, SpectralField, forward_transform, inverse_transform

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DiagnosticError", "EnergyLedger", "ForcingSpec", "GaugeViolationError", "Lattice",
    "LatticeError", "MG", "MGError", "MultiplierFamily", "ShellDecomposition", "SimState", "SnapshotError",
    "SolverConfig", "SpectralField", "Trajectory", "UnstableStepError", "ZERO", "apply_velocity",
    "forward_transform", "integrate", "inverse_transform", "mg_symbol", "random_initial_field", "step",
    "t_symbol",
]
