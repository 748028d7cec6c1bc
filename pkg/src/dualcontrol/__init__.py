"""Dual-control solution of terminal-wealth utility maximization."""

__version__ = "0.1.0"

from .closedform import CappedSolution, h_sensitivity
from .dualvalue import Backend, DualValueSurface
from .errors import (ConfigError, DegenerateError, DomainError, DualControlError, NumericalError,
                     ThresholdError)
from .market import Constraint, MarketModel, Regime
from .primal import PrimalValueSurface, primal_from_utility
from .riskfrontier import (DiscreteLossDistribution, FrontierPoint, RiskSpec, cvar_cap_closed,
                           cvar_ru, frontier_sweep)
from .simulate import PathStats, SimConfig, simulate
from .utility import (AffineUtility, CappedPowerUtility, CappedUtility, PiecewiseLinearUtility,
                      PowerTailUtility, PowerUtility)

__all__ = [
    "AffineUtility", "Backend", "CappedPowerUtility", "CappedSolution", "CappedUtility",
    "ConfigError", "Constraint", "DegenerateError", "DiscreteLossDistribution", "DomainError",
    "DualControlError", "DualValueSurface", "FrontierPoint", "MarketModel", "NumericalError",
    "PathStats", "PiecewiseLinearUtility", "PowerTailUtility", "PowerUtility",
    "PrimalValueSurface", "Regime", "RiskSpec", "SimConfig", "ThresholdError", "cvar_cap_closed",
    "cvar_ru", "frontier_sweep", "h_sensitivity", "primal_from_utility", "simulate",
]
