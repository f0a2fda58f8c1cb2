"""Equilibria, power-plane geometry and stability of a synchronverter on an infinite bus."""

__version__ = "0.1.0"

from .core import PowerPoint, State4, State5, powers_from_state, torque_for_setpoints
from .equilibria import Branch, Stability, equilibria4, equilibria5, if_interval, solve_pl_pr
from .errors import ConfigError, DomainError, InfeasibleError, NumericalError, SynchronverterError
from .params import GridParams, SynchronverterParams, derived_constants, load_config

__all__ = [
    "Branch",
    "ConfigError",
    "DomainError",
    "GridParams",
    "InfeasibleError",
    "NumericalError",
    "PowerPoint",
    "Stability",
    "State4",
    "State5",
    "SynchronverterError",
    "SynchronverterParams",
    "derived_constants",
    "equilibria4",
    "equilibria5",
    "if_interval",
    "load_config",
    "powers_from_state",
    "solve_pl_pr",
    "torque_for_setpoints",
]
