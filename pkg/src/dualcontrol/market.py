"""Market coefficients and the lognormal kernel of the dual state."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import DomainError


class Constraint(str, enum.Enum):
    UNCONSTRAINED = "unconstrained"
    NO_SHORT_SELLING = "no_short_selling"


class Regime(str, enum.Enum):
    """How the riskless rate enters the dual kernel.

    ``DISCOUNTED`` works with discounted wealth (the rate is folded away and the
    log-kernel mean is ``-alpha**2 / 2``); ``WITH_RATE`` keeps ``r`` and the
    log-kernel mean is ``-(r + theta**2 / 2) * tau``.
    """

    DISCOUNTED = "discounted"
    WITH_RATE = "with_rate"


@dataclass(frozen=True)
class MarketModel:
    """One riskless and one risky asset with constant coefficients."""

    r: float
    mu: float
    sigma: float
    T: float
    constraint: Constraint = Constraint.UNCONSTRAINED

    def __post_init__(self):
        object.__setattr__(self, "constraint", Constraint(self.constraint))
        if not self.sigma > 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if not self.T > 0:
            raise DomainError(f"T must be positive, got {self.T}")
        if self.r < 0:
            raise DomainError(f"r must be non-negative, got {self.r}")
        if not self.mu > self.r:
            raise DomainError(f"need mu > r for a positive Sharpe ratio, got mu={self.mu}, r={self.r}")

    @property
    def theta(self) -> float:
        return (self.mu - self.r) / self.sigma

    @property
    def theta_hat(self) -> float:
        return effective_theta(self)

    def tau(self, t: float) -> float:
        _check_time(self, t)
        return max(self.T - t, 0.0)


@dataclass(frozen=True)
class KernelParams:
    """Lognormal law of ``Y_T / y``: ``log`` has mean ``drift_shift`` and sd ``alpha``."""

    tau: float
    alpha: float
    drift_shift: float

    @property
    def mean_growth(self) -> float:
        """``E[Y_T] / y``; equals ``exp(-r tau)`` with rate, 1 when discounted."""
        return math.exp(self.drift_shift + 0.5 * self.alpha ** 2)


def effective_theta(m: MarketModel) -> float:
    # For K = R and K = R_+ with mu > r the polar-cone minimiser is zero,
    # so the effective price of risk is the Sharpe ratio itself.
    return m.theta


def _check_time(m: MarketModel, t: float) -> None:
    if not (0.0 <= t <= m.T * (1 + 1e-12)):
        raise DomainError(f"t={t} outside [0, {m.T}]")


def alpha(m: MarketModel, t: float) -> float:
    """Standard deviation ``theta_hat * sqrt(T - t)`` of the log dual kernel."""
    _check_time(m, t)
    return effective_theta(m) * math.sqrt(max(m.T - t, 0.0))


def kernel_params(m: MarketModel, t: float, regime: Regime = Regime.DISCOUNTED) -> KernelParams:
    _check_time(m, t)
    tau = max(m.T - t, 0.0)
    th = effective_theta(m)
    a = th * math.sqrt(tau)
    if Regime(regime) is Regime.DISCOUNTED:
        shift = -0.5 * a * a
    else:
        shift = -(m.r + 0.5 * th * th) * tau
    return KernelParams(tau=tau, alpha=a, drift_shift=shift)
