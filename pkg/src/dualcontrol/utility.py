"""Utility functions and their convex conjugates.

Every supported utility has a dual that is piecewise a sum of power terms in
``y``::

    U~(y) = sum_k coef_k * y**power_k      for lo <= y < hi

This covers piecewise-linear utilities (powers 0 and 1), power utilities and
power tails (power ``q = p / (p - 1)``), and positive affine images of all of
these. Lognormal expectations of such duals have closed forms, which the dual
value module relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, ClassVar, Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import DomainError

MAX_PIECES = 64


def _check_wealth(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise DomainError("utility evaluated at negative wealth")
    return x


def _ret(a, like):
    return float(a) if np.ndim(like) == 0 else a


# --------------------------------------------------------------------------- duals


@dataclass(frozen=True)
class DualSegment:
    lo: float
    hi: float
    terms: tuple[tuple[float, float], ...]  # (coef, power)

    def value(self, y: np.ndarray) -> np.ndarray:
        out = np.zeros_like(y)
        for coef, power in self.terms:
            out = out + (coef if power == 0 else coef * y ** power)
        return out

    def slope(self, y: np.ndarray) -> np.ndarray:
        out = np.zeros_like(y)
        for coef, power in self.terms:
            if power != 0:
                out = out + coef * power * y ** (power - 1)
        return out


@dataclass(frozen=True)
class DualUtility:
    """Decreasing convex conjugate, stored as ascending segments covering ``[0, inf)``.

    ``value_at_zero`` is ``U~(0) = U(inf)`` and ``slope_at_zero`` the right
    derivative ``U~'(0)``; both may be infinite.
    """

    segments: tuple[DualSegment, ...]
    value_at_zero: float
    slope_at_zero: float
    source: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        segs = self.segments
        if not segs or segs[0].lo != 0.0 or segs[-1].hi != math.inf:
            raise DomainError("dual segments must cover [0, inf)")
        for a, b in zip(segs, segs[1:]):
            if a.hi != b.lo:
                raise DomainError("dual segments must be contiguous")

    @property
    def kinks(self) -> tuple[float, ...]:
        return tuple(s.hi for s in self.segments[:-1])

    def _locate(self, y: np.ndarray) -> np.ndarray:
        return np.searchsorted(np.asarray(self.kinks), y, side="right")

    def __call__(self, y):
        ya = np.asarray(y, dtype=float)
        if np.any(ya < 0):
            raise DomainError("dual evaluated at negative y")
        idx = self._locate(ya)
        out = np.empty_like(ya)
        with np.errstate(divide="ignore"):
            for i, seg in enumerate(self.segments):
                m = idx == i
                if np.any(m):
                    out[m] = seg.value(ya[m])
        out = np.where(ya == 0, self.value_at_zero, out)
        return _ret(out, y)

    def derivative(self, y):
        """Right derivative ``U~'(y)``."""
        ya = np.asarray(y, dtype=float)
        idx = self._locate(ya)
        out = np.empty_like(ya)
        with np.errstate(divide="ignore"):
            for i, seg in enumerate(self.segments):
                m = idx == i
                if np.any(m):
                    out[m] = seg.slope(ya[m])
        out = np.where(ya == 0, self.slope_at_zero, out)
        return _ret(out, y)

    def maximizer(self, y):
        """Wealth attaining ``sup_x U(x) - x y`` (right-derivative selection)."""
        return -np.asarray(self.derivative(y)) if np.ndim(y) else -self.derivative(y)

    def affine(self, scale: float, shift: float = 0.0) -> "DualUtility":
        """Dual of ``scale * U + shift``, i.e. ``scale * U~(y / scale) + shift``."""
        if not scale > 0:
            raise DomainError("affine scale must be positive")
        segs = []
        for s in self.segments:
            terms = [(c * scale ** (1.0 - p), p) for c, p in s.terms]
            terms.append((shift, 0.0))
            segs.append(DualSegment(s.lo * scale, s.hi * scale if s.hi != math.inf else math.inf,
                                    tuple(terms)))
        return DualUtility(tuple(segs), scale * self.value_at_zero + shift, self.slope_at_zero)


@dataclass(frozen=True)
class FunctionDual:
    """A dual given only as a callable; evaluated by Gauss-Hermite quadrature."""

    fn: Callable[[np.ndarray], np.ndarray]
    value_at_zero: float = math.inf
    slope_at_zero: float = -math.inf
    source: object = field(default=None, compare=False, repr=False)

    def __call__(self, y):
        return self.fn(y)


# ----------------------------------------------------------------------- utilities


@dataclass(frozen=True)
class PiecewiseLinearUtility:
    """Increasing concave piecewise-linear utility.

    ``breakpoints`` are ``x_1 < ... < x_N``, ``slopes`` are ``c_1 > ... > c_N > 0``
    (the slope beyond ``x_N`` is zero) and ``top`` is ``U(inf) = d_{N+1}``. The
    remaining intercepts follow from continuity.
    """

    breakpoints: tuple[float, ...]
    slopes: tuple[float, ...]
    top: float
    max_pieces: ClassVar[int] = MAX_PIECES

    def __post_init__(self):
        xs = tuple(float(v) for v in self.breakpoints)
        cs = tuple(float(v) for v in self.slopes)
        object.__setattr__(self, "breakpoints", xs)
        object.__setattr__(self, "slopes", cs)
        if len(xs) == 0 or len(xs) != len(cs):
            raise DomainError("need N >= 1 breakpoints and as many slopes")
        if len(xs) > self.max_pieces:
            raise DomainError(f"at most {self.max_pieces} breakpoints supported")
        if not xs[0] > 0 or any(b <= a for a, b in zip(xs, xs[1:])):
            raise DomainError("breakpoints must be positive and strictly increasing")
        if not cs[-1] > 0 or any(b >= a for a, b in zip(cs, cs[1:])):
            raise DomainError("slopes must be positive and strictly decreasing")
        if not math.isfinite(self.top):
            raise DomainError("top level must be finite")

    @classmethod
    def from_intercepts(cls, breakpoints, slopes, intercepts, tol=1e-9):
        """Build from all ``N + 1`` intercepts, checking continuity at each kink."""
        u = cls(tuple(breakpoints), tuple(slopes[: len(breakpoints)]), float(intercepts[-1]))
        got = np.asarray(u.intercepts)
        want = np.asarray(intercepts, dtype=float)
        if got.shape != want.shape or np.any(np.abs(got - want) > tol * (1 + np.abs(want))):
            raise DomainError("intercepts violate continuity c_i x_i + d_i = c_{i+1} x_i + d_{i+1}")
        return u

    @property
    def n(self) -> int:
        return len(self.breakpoints)

    @property
    def all_slopes(self) -> tuple[float, ...]:
        """``c_1 .. c_{N+1}`` including the trailing zero."""
        return self.slopes + (0.0,)

    @property
    def intercepts(self) -> tuple[float, ...]:
        """``d_1 .. d_{N+1}``."""
        c = self.all_slopes
        d = [0.0] * (self.n + 1)
        d[-1] = float(self.top)
        for i in range(self.n - 1, -1, -1):
            # c_i x_i + d_i = c_{i+1} x_i + d_{i+1}  (1-based)
            d[i] = d[i + 1] + (c[i + 1] - c[i]) * self.breakpoints[i]
        return tuple(d)

    @property
    def value_at_zero(self) -> float:
        return self.intercepts[0]

    @property
    def value_at_infinity(self) -> float:
        return float(self.top)

    def __call__(self, x):
        xa = _check_wealth(x)
        c = np.asarray(self.all_slopes)
        d = np.asarray(self.intercepts)
        # concave piecewise-linear = lower envelope of its pieces
        out = np.min(c * xa[..., None] + d, axis=-1)
        return _ret(out, x)

    def dual(self) -> DualUtility:
        return dual_piecewise(self)


@dataclass(frozen=True)
class CappedUtility:
    """``U(x) = min(x, H)``."""

    H: float

    def __post_init__(self):
        if not self.H > 0:
            raise DomainError("cap H must be positive")

    def to_piecewise(self) -> PiecewiseLinearUtility:
        return PiecewiseLinearUtility((self.H,), (1.0,), self.H)

    value_at_zero = 0.0

    @property
    def value_at_infinity(self) -> float:
        return self.H

    def __call__(self, x):
        xa = _check_wealth(x)
        return _ret(np.minimum(xa, self.H), x)

    def dual(self) -> DualUtility:
        d = dual_piecewise(self.to_piecewise())
        return DualUtility(d.segments, d.value_at_zero, d.slope_at_zero, source=self)


@dataclass(frozen=True)
class PowerTailUtility:
    """``inner(x)`` below ``x0`` and ``k * x**p`` from ``x0`` on.

    ``inner`` is a piecewise-linear utility (only its part on ``[0, x0]`` is
    used); ``None`` means the line through the origin meeting the tail at
    ``x0``. ``x0 = 0`` gives the pure power utility ``k * x**p``.
    """

    p: float
    k: float = 1.0
    x0: float = 0.0
    inner: Optional[PiecewiseLinearUtility] = None

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise DomainError("power p must lie in (0, 1)")
        if not self.k > 0:
            raise DomainError("tail constant k must be positive")
        if self.x0 < 0:
            raise DomainError("switch point x0 must be non-negative")
        if self.inner is not None:
            if self.x0 == 0:
                raise DomainError("inner utility needs x0 > 0")
            tail_val = self.k * self.x0 ** self.p
            got = float(self.inner(self.x0))
            if abs(got - tail_val) > 1e-9 * (1 + abs(tail_val)):
                raise DomainError(f"inner({self.x0}) = {got} does not meet the tail value {tail_val}")
            if self._inner_slope_at_x0() < self.tail_slope_at_x0 * (1 - 1e-12):
                raise DomainError("utility is not concave at the switch point")

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def tail_slope_at_x0(self) -> float:
        if self.x0 == 0:
            return math.inf
        return self.k * self.p * self.x0 ** (self.p - 1.0)

    def _body(self) -> tuple[list[float], list[float], Callable]:
        """Breakpoints strictly below ``x0``, slopes c_1..c_{M+1} on ``[0, x0)``, and body values."""
        if self.inner is None:
            s = self.k * self.x0 ** (self.p - 1.0)
            return [], [s], lambda x: s * np.asarray(x, dtype=float)
        xs = [b for b in self.inner.breakpoints if b < self.x0]
        cs = list(self.inner.all_slopes[: len(xs) + 1])
        return xs, cs, self.inner

    def _inner_slope_at_x0(self) -> float:
        return self._body()[1][-1]

    @property
    def value_at_zero(self) -> float:
        if self.x0 == 0:
            return 0.0
        return float(self._body()[2](0.0))

    value_at_infinity = math.inf

    def __call__(self, x):
        xa = _check_wealth(x)
        tail = self.k * xa ** self.p
        if self.x0 == 0:
            return _ret(tail, x)
        body = np.asarray(self._body()[2](np.minimum(xa, self.x0)), dtype=float)
        return _ret(np.where(xa < self.x0, body, tail), x)

    def dual(self) -> DualUtility:
        p, k, q = self.p, self.k, self.q
        power_coef = ((1.0 - p) / p) * (k * p) ** (1.0 / (1.0 - p))
        if self.x0 == 0:
            seg = DualSegment(0.0, math.inf, ((power_coef, q),))
            return DualUtility((seg,), math.inf, -math.inf, source=self)
        xs, cs, body = self._body()
        s0 = self.tail_slope_at_x0
        segs = [DualSegment(0.0, s0, ((power_coef, q),))]
        u_x0 = self.k * self.x0 ** self.p
        # superdifferential of U at x0 is [s0, c_{M+1}]
        if cs[-1] > s0:
            segs.append(DualSegment(s0, cs[-1], ((u_x0, 0.0), (-self.x0, 1.0))))
        # inner kinks from the top down: x_i has superdifferential [c_{i+1}, c_i]
        for i in range(len(xs) - 1, -1, -1):
            xi = xs[i]
            segs.append(DualSegment(cs[i + 1], cs[i], ((float(body(xi)), 0.0), (-xi, 1.0))))
        segs.append(DualSegment(cs[0], math.inf, ((float(body(0.0)), 0.0),)))
        return DualUtility(tuple(segs), math.inf, -math.inf, source=self)


@dataclass(frozen=True)
class CappedPowerUtility:
    """``x`` below ``H`` and ``H (x / H)**p`` above."""

    H: float
    p: float

    def __post_init__(self):
        if not self.H > 0:
            raise DomainError("kink level H must be positive")
        if not 0 < self.p < 1:
            raise DomainError("power p must lie in (0, 1)")

    def as_power_tail(self) -> PowerTailUtility:
        return PowerTailUtility(self.p, self.H ** (1.0 - self.p), self.H)

    value_at_zero = 0.0
    value_at_infinity = math.inf

    def __call__(self, x):
        xa = _check_wealth(x)
        return _ret(np.where(xa < self.H, xa, self.H * (xa / self.H) ** self.p), x)

    def dual(self) -> DualUtility:
        d = self.as_power_tail().dual()
        return DualUtility(d.segments, d.value_at_zero, d.slope_at_zero, source=self)


def PowerUtility(p: float, k: float = 1.0) -> PowerTailUtility:
    """``k * x**p``."""
    return PowerTailUtility(p, k, 0.0)


@dataclass(frozen=True)
class AffineUtility:
    """``scale * base(x) + shift`` with ``scale > 0``; optimal controls are unchanged."""

    base: object
    scale: float = 1.0
    shift: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise DomainError("affine scale must be positive")

    @property
    def value_at_zero(self) -> float:
        return self.scale * self.base.value_at_zero + self.shift

    @property
    def value_at_infinity(self) -> float:
        return self.scale * self.base.value_at_infinity + self.shift

    def __call__(self, x):
        return self.scale * self.base(x) + self.shift

    def dual(self) -> DualUtility:
        d = self.base.dual().affine(self.scale, self.shift)
        return DualUtility(d.segments, d.value_at_zero, d.slope_at_zero, source=self)


# ---------------------------------------------------------------------- operations


def evaluate(u, x):
    """``U(x)`` for any supported utility; negative wealth is a domain error."""
    _check_wealth(x)
    return u(x)


def dual_piecewise(u: PiecewiseLinearUtility) -> DualUtility:
    """Exact conjugate of a piecewise-linear utility.

    On ``[c_{i+1}, c_i)`` the dual is ``-x_i y + c_{i+1} x_i + d_{i+1}``, so its
    slopes are the negated breakpoints.
    """
    xs = (0.0,) + u.breakpoints
    c = (math.inf,) + u.all_slopes
    d = u.intercepts
    segs = []
    for i in range(u.n, -1, -1):
        level = (c[i + 1] * xs[i] if xs[i] else 0.0) + d[i]
        segs.append(DualSegment(c[i + 1], c[i], ((level, 0.0), (-xs[i], 1.0))))
    return DualUtility(tuple(segs), u.top, -u.breakpoints[-1], source=u)


def dual_capped_power(u: CappedPowerUtility, y):
    """Conjugate value and maximiser of the capped power utility (three branches)."""
    ya = np.asarray(y, dtype=float)
    if np.any(ya <= 0):
        raise DomainError("y must be positive")
    H, p = u.H, u.p
    with np.errstate(divide="ignore", over="ignore"):
        power_val = H * ((1 - p) / p) * p ** (1 / (1 - p)) * ya ** (p / (p - 1))
        power_x = H * (ya / p) ** (1 / (p - 1))
    val = np.where(ya <= p, power_val, np.where(ya <= 1, H * (1 - ya), 0.0))
    xs = np.where(ya <= p, power_x, np.where(ya <= 1, H, 0.0))
    return _ret(val, y), _ret(xs, y)


def conjugate_numeric(u, y: float, xmax: float = 1e3, n: int = 100_000) -> float:
    """Brute-force ``sup_{x >= 0} U(x) - x y`` on a log grid, polished by a bounded search.

    Independent of every closed-form dual; used as their oracle.
    """
    if not y > 0:
        raise DomainError("y must be positive")
    grid = np.concatenate(([0.0], np.geomspace(xmax * 1e-12, xmax, n)))
    vals = np.asarray(u(grid), dtype=float) - grid * y
    j = int(np.argmax(vals))
    best = vals[j]
    lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, n)]
    if hi > lo:
        res = optimize.minimize_scalar(lambda s: -(float(u(s)) - s * y), bounds=(lo, hi),
                                       method="bounded", options={"xatol": 1e-13 * max(hi, 1.0)})
        best = max(best, -res.fun)
    return float(best)


def tail_constant_for_normalized(p: float) -> float:
    """``1 / (p**p (1 - p)**(1 - p))``: the tail constant giving ``U~(y) / y**q -> 1``."""
    if not 0 < p < 1:
        raise DomainError("p must lie in (0, 1)")
    return 1.0 / (p ** p * (1.0 - p) ** (1.0 - p))


def normalized(u, p: float, k: float):
    """Rescale a utility with ``U(0) = 0`` and tail ``k x**p`` to the normalized tail constant."""
    return AffineUtility(u, tail_constant_for_normalized(p) / k, 0.0)


UTILITY_KINDS: dict[str, type] = {
    "cap": CappedUtility,
    "capped_power": CappedPowerUtility,
    "piecewise": PiecewiseLinearUtility,
    "power_tail": PowerTailUtility,
}


def piecewise_from_lists(breakpoints: Sequence[float], slopes: Sequence[float], top: float):
    return PiecewiseLinearUtility(tuple(breakpoints), tuple(slopes), float(top))
