"""Exact solution of the capped problem ``U(x) = min(x, H)`` in the discounted regime."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import normal
from .errors import DegenerateError, DomainError
from .market import MarketModel, alpha, effective_theta


def _ret(a, like):
    return float(a) if np.ndim(like) == 0 else a


@dataclass(frozen=True)
class CappedSolution:
    H: float
    market: MarketModel

    def __post_init__(self):
        if not self.H > 0:
            raise DomainError("cap H must be positive")

    def _z0(self, x) -> np.ndarray:
        xa = np.asarray(x, dtype=float)
        if np.any(~((xa > 0) & (xa < self.H))):
            raise DomainError(f"closed forms need 0 < x < H={self.H}")
        return normal.ppf(xa / self.H)

    def alpha(self, t: float) -> float:
        return alpha(self.market, t)

    def u(self, t: float, x):
        """``H Phi(Phi^-1(x / H) + alpha(t))``."""
        return _ret(self.H * normal.cdf(self._z0(x) + self.alpha(t)), x)

    def pi(self, t: float, x):
        a = self.alpha(t)
        if a == 0:
            raise DegenerateError("control is unbounded at maturity")
        xa = np.asarray(x, dtype=float)
        th = effective_theta(self.market)
        return _ret((th / self.market.sigma) * self.H / (xa * a) * normal.pdf(self._z0(x)), x)

    def y(self, t: float, x):
        a = self.alpha(t)
        return _ret(np.exp(-a * self._z0(x) - 0.5 * a * a), x)

    def terminal_probs(self, x, t: float = 0.0):
        """``(P(X_T = H), P(X_T = 0))`` under the optimal strategy started at ``(t, x)``."""
        z = self._z0(x) + self.alpha(t)
        return _ret(normal.cdf(z), x), _ret(normal.cdf(-z), x)


def u_cap(market: MarketModel, H: float, t: float, x):
    return CappedSolution(H, market).u(t, x)


def pi_cap(market: MarketModel, H: float, t: float, x):
    return CappedSolution(H, market).pi(t, x)


def y_cap(market: MarketModel, H: float, t: float, x):
    return CappedSolution(H, market).y(t, x)


def terminal_probs(market: MarketModel, H: float, x, t: float = 0.0):
    return CappedSolution(H, market).terminal_probs(x, t)


def h_sensitivity(market: MarketModel, H, x: float):
    """Initial optimal value ``g(H)`` as a function of the cap, and ``g'(H)``.

    ``g'(H) = Phi(w + a) - (x / H) exp(-a w - a^2 / 2)`` with ``w = Phi^-1(x / H)``
    and ``a = theta sqrt(T)``.
    """
    Ha = np.asarray(H, dtype=float)
    if np.any(~(Ha > x)) or not x > 0:
        raise DomainError("need 0 < x < H")
    a = effective_theta(market) * np.sqrt(market.T)
    w = normal.ppf(x / Ha)
    g = Ha * normal.cdf(w + a)
    dg = normal.cdf(w + a) - (x / Ha) * np.exp(-a * w - 0.5 * a * a)
    return _ret(g, H), _ret(dg, H)
