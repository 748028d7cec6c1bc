"""Primal value, feedback control and risky amount by Legendre inversion of the dual.

For ``0 < x < x_star`` the dual point ``y(t, x)`` solves ``v_y(t, y) + x = 0`` and

    u = v(t, y) + x y,   u_x = y,   u_xx = -1 / v_yy(t, y).

Above the threshold ``x_star = -U~'(0)`` the value is the constant ``U~(0)``
and the optimal control is zero.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dualvalue import TERMINAL_ALPHA, DualValueSurface
from .errors import DegenerateError, DomainError, NumericalError, ThresholdError
from .market import Regime

Y_MIN = 1e-12
Y_MAX = 1e12
BISECT_MAX_ITER = 200
NEWTON_STEPS = 5


class ClampWarning(RuntimeWarning):
    """Dual point clamped at ``Y_MAX`` (wealth too close to zero)."""


def _out(a, like):
    return float(a) if np.ndim(like) == 0 else a


@dataclass(frozen=True)
class PrimalValueSurface:
    dual_surface: DualValueSurface
    tol: float = 1e-12

    @property
    def x_star(self) -> float:
        """Terminal threshold ``-U~'(0)`` (``inf`` for unbounded utilities)."""
        return -self.dual_surface.dual.slope_at_zero

    @property
    def market(self):
        return self.dual_surface.market

    def threshold(self, t: float) -> float:
        return self.dual_surface.threshold(t)

    def _is_terminal(self, t: float) -> bool:
        return self.dual_surface.kernel(t).alpha < TERMINAL_ALPHA

    # -- root finding -------------------------------------------------------

    def _g(self, t, L, x, order=1):
        d = self.dual_surface.derivatives(t, np.exp(L), order=order)
        return d.v_y + x, d

    def y_of_x(self, t: float, x, guess=None):
        """Unique ``y > 0`` with ``v_y(t, y) = -x``.

        Bisection on ``log y`` over ``[1e-12, 1e12]`` followed by Newton polish.
        With ``guess`` a safeguarded Newton iteration is tried first and only
        the entries that fail fall back to bisection.
        """
        y, _ = self._solve(t, x, guess)
        return _out(y.reshape(np.shape(x)), x)

    def _solve(self, t, x, guess=None):
        """Root ``y`` (flat array) and, when the warm start succeeded everywhere,
        the dual derivatives there."""
        if self._is_terminal(t):
            raise DegenerateError("dual point is not unique at maturity")
        xa = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
        if np.any(~(xa > 0)):
            raise DomainError("wealth must be positive")
        xs = self.threshold(t)
        if np.any(xa >= xs):
            raise ThresholdError(f"wealth at or above threshold {xs}; value is constant there")
        y = np.empty_like(xa)
        todo = np.ones(xa.shape, dtype=bool)
        derivs = None
        if guess is not None:
            g0 = np.broadcast_to(np.asarray(guess, dtype=float).ravel(), xa.shape)
            with np.errstate(invalid="ignore"):
                L0 = np.log(np.clip(np.where(np.isfinite(g0), g0, 1.0), Y_MIN, Y_MAX))
            L, ok, derivs = self._newton_from(t, L0, xa)
            y[ok] = np.exp(L[ok])
            todo = ~ok
            if np.any(todo):
                derivs = None
        if np.any(todo):
            y[todo] = self._bisect(t, xa[todo])
        return y, derivs

    def _newton_from(self, t, L, x, iters=12):
        """Clipped Newton in ``log y``; only unconverged entries are re-evaluated."""
        L = L.copy()
        lo, hi = math.log(Y_MIN), math.log(Y_MAX)
        ok = np.zeros(L.shape, dtype=bool)
        D = [np.full(L.shape, np.nan) for _ in range(3)]
        act = np.arange(L.size)
        for _ in range(iters + 1):
            g, d = self._g(t, L[act], x[act], order=2)
            for full, part in zip(D, d):
                full[act] = part
            done = np.isfinite(g) & (np.abs(g) <= 4.0 * self.tol * (1 + x[act]))
            ok[act[done]] = True
            keep = ~done
            if not np.any(keep):
                break
            act, g = act[keep], g[keep]
            slope = np.exp(L[act]) * d.v_yy[keep]
            with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
                step = np.clip(g / np.where(slope > 0, slope, np.inf), -2.0, 2.0)
            L[act] = np.clip(L[act] - np.where(np.isfinite(step), step, 0.0), lo, hi)
        return L, ok, type(d)(*D)

    def _bisect(self, t, x):
        lo = np.full_like(x, math.log(Y_MIN))
        hi = np.full_like(x, math.log(Y_MAX))
        g_lo, _ = self._g(t, lo, x)
        g_hi, _ = self._g(t, hi, x)
        if np.any(g_lo >= 0):
            raise NumericalError("no bracket: root lies below y = 1e-12")
        clamp = g_hi <= 0
        if np.any(clamp):
            warnings.warn("wealth near zero: dual point clamped at y = 1e12", ClampWarning,
                          stacklevel=3)
        for _ in range(BISECT_MAX_ITER):
            mid = 0.5 * (lo + hi)
            g, _ = self._g(t, mid, x)
            neg = g < 0
            # a converged midpoint collapses its bracket, which matters where g is flat
            done = np.abs(g) <= self.tol * (1 + x)
            lo = np.where(neg | done, mid, lo)
            hi = np.where(neg & ~done, hi, mid)
            if np.all(hi - lo < 1e-9):
                break
        L = 0.5 * (lo + hi)
        for _ in range(NEWTON_STEPS):
            g, d = self._g(t, L, x, order=2)
            slope = np.exp(L) * d.v_yy
            with np.errstate(divide="ignore", invalid="ignore"):
                cand = L - g / slope
            inside = np.isfinite(cand) & (cand > lo) & (cand < hi)
            lo = np.where(g < 0, np.maximum(lo, L), lo)
            hi = np.where(g > 0, np.minimum(hi, L), hi)
            L = np.where(inside, cand, 0.5 * (lo + hi))
        L = np.where(clamp, math.log(Y_MAX), L)
        return np.exp(L)

    # -- value and derivatives ---------------------------------------------

    def state(self, t: float, x, guess=None) -> dict:
        """All primal quantities at interior points: ``y, u, u_x, u_xx, pi, A``."""
        y, d = self._solve(t, x, guess)
        if d is None:
            d = self.dual_surface.derivatives(t, y)
        shape = np.shape(x)
        y = y.reshape(shape)
        d = type(d)(*(np.asarray(a).reshape(shape) for a in d))
        xa = np.asarray(x, dtype=float)
        amount = (self.dual_surface.theta / self.market.sigma) * y * d.v_yy
        with np.errstate(divide="ignore"):  # v_yy underflows to 0 at extreme wealth
            u_xx = -1.0 / d.v_yy
        return {"y": y, "u": d.v + xa * y, "u_x": y, "u_xx": u_xx, "pi": amount / xa, "A": amount}

    def u(self, t: float, x):
        xa = np.asarray(x, dtype=float)
        if np.any(xa < 0):
            raise DomainError("wealth must be non-negative")
        if self._is_terminal(t):
            src = getattr(self.dual_surface.dual, "source", None)
            if src is None:
                raise DomainError("terminal value needs the primal utility")
            return src(x)
        out = np.full(xa.shape, float(self.dual_surface.dual.value_at_zero))
        inner = (xa > 0) & (xa < self.threshold(t))
        if np.any(inner):
            out[inner] = self.state(t, xa[inner])["u"]
        at_zero = xa == 0
        if np.any(at_zero):
            # v(t, inf) = U(0)
            out[at_zero] = float(np.asarray(self.dual_surface.dual(np.array([1e300])))[0])
        return _out(out.reshape(np.shape(x)), x)

    def u_x(self, t: float, x):
        return self.y_of_x(t, x)

    def u_xx(self, t: float, x):
        y = self.y_of_x(t, x)
        return _out(-1.0 / np.asarray(self.dual_surface.v_yy(t, y)), x)

    def feedback_control(self, t: float, x):
        """Optimal proportion ``-(theta_hat / sigma) u_x / (x u_xx)``; zero above the threshold."""
        if self._is_terminal(t):
            raise DegenerateError("control is undefined at maturity")
        xa = np.asarray(x, dtype=float)
        if np.any(~(xa > 0)):
            raise DomainError("wealth must be positive")
        out = np.zeros(xa.shape)
        inner = xa < self.threshold(t)
        if np.any(inner):
            out[inner] = self.state(t, xa[inner])["pi"]
        return _out(out.reshape(np.shape(x)), x)

    def risky_amount(self, tau: float, x):
        """Amount ``A = (theta / sigma) y v_yy(y)`` held in the risky asset, ``tau`` before maturity."""
        if not tau > 0:
            raise DomainError("time to maturity must be positive")
        t = self.market.T - tau
        if t < -1e-12 * self.market.T:
            raise DomainError(f"tau={tau} exceeds the horizon {self.market.T}")
        t = max(t, 0.0)
        xa = np.asarray(x, dtype=float)
        if np.any(xa >= self.threshold(t)):
            raise ThresholdError("risky amount is zero above the threshold")
        return _out(np.asarray(self.state(t, x)["A"]), x)


def primal_from_utility(market, utility, regime=Regime.DISCOUNTED, backend=None,
                        order: int = 128) -> PrimalValueSurface:
    return PrimalValueSurface(DualValueSurface.from_utility(market, utility, regime, backend, order))
