"""Frozen planet orbits of a one-dimensional two-electron model by a mountain-pass search."""

from .errors import (ConfigError, DomainError, EvaluationError, FrozenPlanetError,
                     NoConvergenceError, StagnationError, UnsupportedOperationError)
from .potentials import (PotentialFamily, SmoothedPotentials, helium, make_family, power_law,
                         register_family, validate_hypotheses)
from .trajectory import PathOfTrajectories, Trajectory
from .action import ActionContext, action_gradient, action_value, evaluate, fd_check
from .kepler import BrakeOrbit, brake_orbit
from .mountainpass import MinimaxConfig, MinimaxReport, deform, refine_critical_point, solve
from .verify import OrbitSolution, conformance, ode_residual, populate
from .continuation import Schedule, SweepRecord, sweep_eps, sweep_mu

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DomainError", "EvaluationError", "FrozenPlanetError", "NoConvergenceError",
    "StagnationError", "UnsupportedOperationError", "PotentialFamily", "SmoothedPotentials",
    "helium", "make_family", "power_law", "register_family", "validate_hypotheses",
    "PathOfTrajectories", "Trajectory", "ActionContext", "action_gradient", "action_value",
    "evaluate", "fd_check", "BrakeOrbit", "brake_orbit", "MinimaxConfig", "MinimaxReport",
    "deform", "refine_critical_point", "solve", "OrbitSolution", "conformance", "ode_residual",
    "populate", "Schedule", "SweepRecord", "sweep_eps", "sweep_mu",
]
