"""Dual value function ``v(t, y) = E[U~(Y_T) | Y_t = y]`` and its y-derivatives.

Three backends:

* ``CLOSED_FORM_PIECEWISE`` -- the sum-of-``A_i`` formula for piecewise-linear
  duals (discounted regime only), with analytic ``v_y`` and ``v_yy``.
* ``CLOSED_FORM_CAPPED_POWER`` -- the explicit formula for the capped power
  utility (discounted regime only).
* ``QUADRATURE`` -- lognormal expectation under either regime. Segmented duals
  are integrated exactly segment by segment (Gaussian CDFs, no kink error);
  callable duals use Gauss-Hermite with score-function derivatives.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np
from numpy.polynomial.hermite import hermgauss

from . import normal
from .errors import DegenerateError, DomainError
from .market import KernelParams, MarketModel, Regime, effective_theta, kernel_params
from .utility import (CappedPowerUtility, CappedUtility, DualUtility, FunctionDual,
                      PiecewiseLinearUtility)

TERMINAL_ALPHA = 1e-6


class Backend(str, enum.Enum):
    CLOSED_FORM_PIECEWISE = "closed_form_piecewise"
    QUADRATURE = "quadrature"
    CLOSED_FORM_CAPPED_POWER = "closed_form_capped_power"


class DualDerivs(NamedTuple):
    v: np.ndarray
    v_y: np.ndarray
    v_yy: np.ndarray


def _as_y(y) -> np.ndarray:
    ya = np.asarray(y, dtype=float)
    if np.any(~(ya > 0)):
        raise DomainError("y must be positive")
    return ya


def _out(a, like):
    return float(a) if np.ndim(like) == 0 else a


def _piecewise_source(dual) -> PiecewiseLinearUtility | None:
    src = getattr(dual, "source", None)
    if isinstance(src, CappedUtility):
        return src.to_piecewise()
    if isinstance(src, PiecewiseLinearUtility):
        return src
    return None


# ------------------------------------------------------------------ kernels


def segment_expectation(dual: DualUtility, log_y: np.ndarray, shift: float, sd: float,
                        order: int = 2):
    """``E[U~(Y)]`` and its first two derivatives in ``L = log y``.

    ``log Y`` is normal with mean ``L + shift`` and standard deviation ``sd``.
    For a term ``coef * Y**k`` on ``[lo, hi)``::

        E = coef * exp(k (L + shift) + k^2 sd^2 / 2) * (Phi(e_hi) - Phi(e_lo))
        e = (log bound - L - shift - k sd^2) / sd
    """
    L = np.asarray(log_y, dtype=float)
    E = np.zeros_like(L)
    E1 = np.zeros_like(L)
    E2 = np.zeros_like(L)
    s = sd
    for seg in dual.segments:
        ln_lo = -np.inf if seg.lo == 0 else math.log(seg.lo)
        ln_hi = np.inf if seg.hi == math.inf else math.log(seg.hi)
        for coef, k in seg.terms:
            if coef == 0:
                continue
            base = L + shift
            e_lo = (ln_lo - base - k * s * s) / s
            e_hi = (ln_hi - base - k * s * s) / s
            G = normal.cdf_diff(e_lo, e_hi)
            with np.errstate(over="ignore", invalid="ignore"):
                C = coef * np.exp(k * base + 0.5 * k * k * s * s)
                E += np.where(G == 0, 0.0, C * G)
                if order >= 1:
                    G1 = -(normal.pdf(e_hi) - normal.pdf(e_lo)) / s
                    E1 += np.where((G == 0) & (G1 == 0), 0.0, C * (k * G + G1))
                if order >= 2:
                    G2 = -(normal.pdf_times(e_hi) - normal.pdf_times(e_lo)) / (s * s)
                    E2 += np.where((G == 0) & (G1 == 0) & (G2 == 0), 0.0,
                                   C * (k * k * G + 2 * k * G1 + G2))
    return E, E1, E2


@dataclass(frozen=True)
class _GaussHermite:
    order: int
    z: np.ndarray = field(init=False, repr=False)
    w: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        t, w = hermgauss(self.order)
        object.__setattr__(self, "z", math.sqrt(2.0) * t)
        object.__setattr__(self, "w", w / math.sqrt(math.pi))


_GH_CACHE: dict[int, _GaussHermite] = {}


def gauss_hermite_expectation(fn, log_y: np.ndarray, shift: float, sd: float, order: int = 128):
    """Gauss-Hermite ``E[f(Y)]`` with score-weight derivatives in ``L = log y``.

    ``d/dL E = E[f Z] / sd`` and ``d2/dL2 E = E[f (Z^2 - 1)] / sd^2``.
    """
    gh = _GH_CACHE.get(order)
    if gh is None:
        gh = _GH_CACHE.setdefault(order, _GaussHermite(order))
    L = np.asarray(log_y, dtype=float)
    vals = np.asarray(fn(np.exp(L[..., None] + shift + sd * gh.z)), dtype=float)
    E = vals @ gh.w
    E1 = (vals * gh.z) @ gh.w / sd
    E2 = (vals * (gh.z ** 2 - 1.0)) @ gh.w / (sd * sd)
    return E, E1, E2


def _interval_masses(bounds: np.ndarray) -> np.ndarray:
    """Normal masses of the intervals cut by ascending finite ``bounds`` (last axis).

    Each mass is formed from the smaller tail so tiny masses keep relative accuracy.
    """
    small = normal.cdf(-np.abs(bounds))
    neg = bounds < 0
    cdf = np.where(neg, small, 1.0 - small)
    sf = np.where(neg, 1.0 - small, small)
    out = np.empty(bounds.shape[:-1] + (bounds.shape[-1] + 1,))
    out[..., 0] = cdf[..., 0]
    out[..., -1] = sf[..., -1]
    if bounds.shape[-1] > 1:
        out[..., 1:-1] = np.where(neg[..., :-1], cdf[..., 1:] - cdf[..., :-1],
                                  sf[..., :-1] - sf[..., 1:])
    return out


# ---------------------------------------------------------------- surface


@dataclass(frozen=True)
class DualValueSurface:
    """Evaluator of ``v``, ``v_y`` and ``v_yy`` for one market and one dual utility.

    Time arguments are calendar times ``t`` in ``[0, T]``; the kernel depends
    only on ``T - t``.
    """

    market: MarketModel
    dual: Union[DualUtility, FunctionDual]
    regime: Regime = Regime.DISCOUNTED
    backend: Backend = Backend.QUADRATURE
    order: int = 128

    def __post_init__(self):
        object.__setattr__(self, "regime", Regime(self.regime))
        object.__setattr__(self, "backend", Backend(self.backend))
        if self.backend is Backend.CLOSED_FORM_PIECEWISE:
            if _piecewise_source(self.dual) is None:
                raise DomainError("closed-form piecewise backend needs a piecewise-linear utility")
            if self.regime is not Regime.DISCOUNTED:
                raise DomainError("closed forms hold in the discounted regime only")
        if self.backend is Backend.CLOSED_FORM_CAPPED_POWER:
            if not isinstance(getattr(self.dual, "source", None), CappedPowerUtility):
                raise DomainError("capped-power backend needs a CappedPowerUtility dual")
            if self.regime is not Regime.DISCOUNTED:
                raise DomainError("closed forms hold in the discounted regime only")
        if self.order < 2:
            raise DomainError("quadrature order must be at least 2")

    @classmethod
    def from_utility(cls, market: MarketModel, utility, regime=Regime.DISCOUNTED,
                     backend: Backend | str | None = None, order: int = 128) -> "DualValueSurface":
        """Build from a primal utility; the default backend is the exact one available."""
        dual = utility.dual()
        regime = Regime(regime)
        if backend is None:
            if regime is Regime.DISCOUNTED and _piecewise_source(dual) is not None:
                backend = Backend.CLOSED_FORM_PIECEWISE
            else:
                backend = Backend.QUADRATURE
        return cls(market, dual, regime, Backend(backend), order)

    # -- kernel -----------------------------------------------------------

    def kernel(self, t: float) -> KernelParams:
        return kernel_params(self.market, t, self.regime)

    @property
    def theta(self) -> float:
        return effective_theta(self.market)

    def threshold(self, t: float) -> float:
        """Wealth ``-lim_{y->0} v_y(t, y)`` above which the primal value is constant."""
        return -self.dual.slope_at_zero * self.kernel(t).mean_growth

    # -- evaluation -------------------------------------------------------

    def derivatives(self, t: float, y, order: int = 2) -> DualDerivs:
        ya = _as_y(y)
        k = self.kernel(t)
        if k.alpha < TERMINAL_ALPHA:
            v = np.asarray(self.dual(ya), dtype=float)
            dv = np.asarray(self._terminal_slope(ya), dtype=float)
            return DualDerivs(v, dv, np.full_like(ya, np.nan))
        if self.backend is Backend.CLOSED_FORM_PIECEWISE:
            return self._closed_piecewise(k.alpha, ya)
        if self.backend is Backend.CLOSED_FORM_CAPPED_POWER:
            return self._closed_capped_power(k.alpha, ya)
        L = np.log(ya)
        if isinstance(self.dual, DualUtility):
            E, E1, E2 = segment_expectation(self.dual, L, k.drift_shift, k.alpha, order)
        else:
            E, E1, E2 = gauss_hermite_expectation(self.dual, L, k.drift_shift, k.alpha, self.order)
        return DualDerivs(E, E1 / ya, (E2 - E1) / (ya * ya))

    def _terminal_slope(self, y):
        if isinstance(self.dual, DualUtility):
            return self.dual.derivative(y)
        h = 1e-7 * y
        return (np.asarray(self.dual(y + h)) - np.asarray(self.dual(y))) / h

    def v(self, t: float, y):
        return _out(self.derivatives(t, y, order=0).v, y)

    def v_y(self, t: float, y):
        return _out(self.derivatives(t, y, order=1).v_y, y)

    def v_yy(self, t: float, y):
        if self.kernel(t).alpha < TERMINAL_ALPHA:
            raise DegenerateError("v_yy is not a function at maturity (kinked terminal data)")
        return _out(self.derivatives(t, y).v_yy, y)

    # -- closed forms -----------------------------------------------------

    def _closed_piecewise(self, a: float, y: np.ndarray) -> DualDerivs:
        u = _piecewise_source(self.dual)
        xs = np.array((0.0,) + u.breakpoints)
        c = np.array(u.all_slopes)  # c_1..c_{N+1}
        d = np.array(u.intercepts)  # d_1..d_{N+1}
        # finite boundaries cbar_1..cbar_N; interval i runs from cbar_i to cbar_{i+1}
        cbar = (np.log(y)[..., None] - np.log(c[:-1])) / a - 0.5 * a
        mass = _interval_masses(cbar)
        mass_a = _interval_masses(cbar + a)
        level = c * xs + d  # c_{i+1} x_i + d_{i+1}
        v_y = -(mass_a @ xs)
        v = y * v_y + mass @ level
        # -sum_i x_i (phi(cbar_{i+1}+a) - phi(cbar_i+a)), regrouped by boundary
        v_yy = (normal.pdf(cbar + a) @ (xs[1:] - xs[:-1])) / (y * a)
        return DualDerivs(v, v_y, v_yy)

    def _closed_capped_power(self, a: float, y: np.ndarray) -> DualDerivs:
        src: CappedPowerUtility = self.dual.source
        return DualDerivs(*_capped_power_formula(src.H, src.p, a, y))

    # -- reporting --------------------------------------------------------

    def limits_report(self, t: float) -> dict:
        return limits_report(self, t)


def _capped_power_formula(H: float, p: float, a: float, y: np.ndarray):
    """Explicit ``v_p``, ``dv_p/dy`` and (differentiated once more) ``d2v_p/dy2``."""
    p1 = 1.0 - p
    c1 = np.log(y) / a - 0.5 * a
    c2 = c1 - math.log(p) / a
    grow = math.exp(a * a * p / (2 * p1 * p1))
    arg = -c2 + a * p / p1
    tail_phi = normal.cdf(arg)
    v = H * ((p1 / p) * p ** (1 / p1) * y ** (-p / p1) * grow * tail_phi
             + normal.cdf_diff(c1, c2) - y * normal.cdf_diff(c1 + a, c2 + a))
    ratio = (y / p) ** (1.0 / (p - 1.0))
    v_y = H * (-normal.cdf_diff(c1 + a, c2 + a) - ratio * grow * tail_phi)
    v_yy = H * ((normal.pdf(c1 + a) - normal.pdf(c2 + a)) / (y * a)
                - ratio * grow * ((1.0 / (p - 1.0)) * tail_phi / y - normal.pdf(arg) / (y * a)))
    return v, v_y, v_yy


def v_capped_power(surface: DualValueSurface, t: float, y):
    """Explicit dual value for the capped power utility (``t < T``)."""
    src = getattr(surface.dual, "source", None)
    if not isinstance(src, CappedPowerUtility):
        raise DomainError("surface dual is not a capped power dual")
    a = surface.kernel(t).alpha
    if a < TERMINAL_ALPHA:
        raise DegenerateError("formula requires t < T")
    ya = _as_y(y)
    return _out(_capped_power_formula(src.H, src.p, a, ya)[0], y)


def v_capped_power_y(surface: DualValueSurface, t: float, y):
    src = getattr(surface.dual, "source", None)
    if not isinstance(src, CappedPowerUtility):
        raise DomainError("surface dual is not a capped power dual")
    a = surface.kernel(t).alpha
    if a < TERMINAL_ALPHA:
        raise DegenerateError("formula requires t < T")
    ya = _as_y(y)
    return _out(_capped_power_formula(src.H, src.p, a, ya)[1], y)


def limits_report(surface: DualValueSurface, t: float, small: float = 1e-6,
                  large: float = 1e6) -> dict:
    """Deviations of ``v`` and ``v_y`` at extreme ``y`` from their limiting values."""
    if surface.kernel(t).alpha < TERMINAL_ALPHA:
        raise DegenerateError("limits are stated for t < T")
    lo = surface.derivatives(t, np.array([small]), order=1)
    hi = surface.derivatives(t, np.array([large]), order=1)
    u0 = float(np.asarray(surface.dual(np.array([1e300])))[0])  # U(0) = U~(inf)
    return {
        "y_small": small,
        "y_large": large,
        "v_small": float(lo.v[0]),
        "v_small_dev": float(lo.v[0] - surface.dual.value_at_zero),
        "v_y_small": float(lo.v_y[0]),
        "v_y_small_dev": float(lo.v_y[0] - surface.dual.slope_at_zero),
        "v_large": float(hi.v[0]),
        "v_large_dev": float(hi.v[0] - u0),
        "v_y_large": float(hi.v_y[0]),
        "v_y_large_dev": float(hi.v_y[0]),
    }
