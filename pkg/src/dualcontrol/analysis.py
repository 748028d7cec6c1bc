"""PDE residual oracles, turnpike sweeps and small/large-``y`` asymptotics of the dual value."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, TextIO

import numpy as np

from .dualvalue import Backend, DualValueSurface
from .errors import DegenerateError, DomainError, DualControlError
from .market import MarketModel, Regime
from .output import write_csv
from .primal import PrimalValueSurface


@dataclass(frozen=True)
class ResidualReport:
    kind: str
    t_range: tuple[float, float]
    space_range: tuple[float, float]
    spacing: str
    shape: tuple[int, int]
    max_residual: float
    argmax: tuple[float, float]
    h_t: float
    richardson: bool
    excluded_rows: int = 0

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "t_min": self.t_range[0], "t_max": self.t_range[1],
            "space_min": self.space_range[0], "space_max": self.space_range[1],
            "spacing": self.spacing,
            "n_t": self.shape[0], "n_space": self.shape[1],
            "max_residual": self.max_residual,
            "argmax_t": self.argmax[0], "argmax_space": self.argmax[1],
            "h_t": self.h_t, "richardson": self.richardson,
            "excluded_rows": self.excluded_rows,
        }


def _time_derivative(f, t: float, h: float, richardson: bool):
    def central(step):
        return (np.asarray(f(t + step)) - np.asarray(f(t - step))) / (2.0 * step)

    if not richardson:
        return central(h)
    return (4.0 * central(0.5 * h) - central(h)) / 3.0


def _check_grid(T: float, t_grid, h: float, min_tau: float):
    t = np.asarray(t_grid, dtype=float)
    if np.any(t - h < 0) or np.any(t + h >= T):
        raise DomainError("time grid must stay inside (0, T) including the difference stencil")
    keep = (T - t) >= min_tau
    return t[keep], int(np.count_nonzero(~keep))


def _spacing(grid) -> str:
    g = np.asarray(grid, dtype=float)
    if len(g) > 2 and np.all(g > 0) and np.allclose(np.diff(np.log(g)), np.log(g[1] / g[0])):
        return "log"
    return "linear"


def dual_residual(surface: DualValueSurface, t_grid: Sequence[float], y_grid: Sequence[float],
                  h_rel: float = 1e-4, richardson: bool = True,
                  min_tau: float = 0.0) -> ResidualReport:
    """Max of ``|v_t + theta^2 y^2 v_yy / 2|`` (discounted) or
    ``|-v_t - theta^2 y^2 v_yy / 2 + r y v_y|`` (with rate) over the grid."""
    T = surface.market.T
    h = h_rel * T
    ts, excluded = _check_grid(T, t_grid, h, min_tau)
    y = np.asarray(y_grid, dtype=float)
    th2 = surface.theta ** 2
    r = surface.market.r
    res = np.empty((len(ts), len(y)))
    for i, t in enumerate(ts):
        vt = _time_derivative(lambda s: surface.derivatives(s, y, order=0).v, t, h, richardson)
        d = surface.derivatives(t, y)
        if surface.regime is Regime.DISCOUNTED:
            res[i] = vt + 0.5 * th2 * y * y * d.v_yy
        else:
            res[i] = -vt - 0.5 * th2 * y * y * d.v_yy + r * y * d.v_y
    return _report("dual", res, ts, y, h, richardson, excluded)


def primal_residual(primal: PrimalValueSurface, t_grid: Sequence[float], x_grid: Sequence[float],
                    h_rel: float = 1e-4, richardson: bool = True,
                    min_tau: float = 0.0) -> ResidualReport:
    """Max of ``|u_t - theta^2 u_x^2 / (2 u_xx) + r x u_x|`` (``r`` term dropped when discounted)."""
    surface = primal.dual_surface
    T = surface.market.T
    h = h_rel * T
    ts, excluded = _check_grid(T, t_grid, h, min_tau)
    x = np.asarray(x_grid, dtype=float)
    th2 = surface.theta ** 2
    r = surface.market.r if surface.regime is Regime.WITH_RATE else 0.0
    res = np.empty((len(ts), len(x)))
    for i, t in enumerate(ts):
        if np.any(x >= primal.threshold(t + h)):
            raise DomainError("wealth grid must stay below the threshold")
        ut = _time_derivative(lambda s: primal.u(s, x), t, h, richardson)
        st = primal.state(t, x)
        res[i] = ut - 0.5 * th2 * st["u_x"] ** 2 / st["u_xx"] + r * x * st["u_x"]
    return _report("primal", res, ts, x, h, richardson, excluded)


def _report(kind, res, ts, space, h, richardson, excluded) -> ResidualReport:
    a = np.abs(res)
    i, j = np.unravel_index(int(np.argmax(a)), a.shape)
    return ResidualReport(kind, (float(ts[0]), float(ts[-1])), (float(space[0]), float(space[-1])),
                          _spacing(space), a.shape, float(a[i, j]),
                          (float(ts[i]), float(space[j])), h, richardson, excluded)


# ------------------------------------------------------------------ turnpike


def _power_of(utility) -> float:
    p = getattr(utility, "p", None)
    if p is None:
        p = getattr(getattr(utility, "base", None), "p", None)
    if p is None:
        raise DomainError("utility has no power tail")
    return float(p)


@dataclass(frozen=True)
class TurnpikeSpec:
    utility: object
    market: MarketModel
    tau_grid: tuple[float, ...]
    x_probe: float = 1.0
    order: int = 128

    def __post_init__(self):
        taus = tuple(float(t) for t in self.tau_grid)
        object.__setattr__(self, "tau_grid", taus)
        if not taus or taus[0] <= 0 or any(b <= a for a, b in zip(taus, taus[1:])):
            raise DomainError("tau grid must be positive and strictly increasing")
        if not self.x_probe > 0:
            raise DomainError("probe wealth must be positive")

    @property
    def p(self) -> float:
        return _power_of(self.utility)

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def lambda_exponent(self) -> float:
        th, r, q = self.market.theta, self.market.r, self.q
        return 0.5 * th * th * q * (q - 1.0) - r * q

    @property
    def merton_target(self) -> float:
        return self.market.theta * self.x_probe / (self.market.sigma * (1.0 - self.p))

    def surface(self) -> DualValueSurface:
        """With-rate dual surface on a horizon long enough for the whole grid."""
        m = dataclasses.replace(self.market, T=max(self.tau_grid[-1], self.market.T))
        return DualValueSurface.from_utility(m, self.utility, Regime.WITH_RATE,
                                             Backend.QUADRATURE, self.order)


@dataclass(frozen=True)
class TurnpikeRow:
    tau: float
    A: float
    gap: float
    error: Optional[str] = None


def turnpike_sweep(spec: TurnpikeSpec) -> list[TurnpikeRow]:
    """Risky amount ``A(tau, x_probe)`` and its relative gap to the Merton amount."""
    primal = PrimalValueSurface(spec.surface())
    rows = []
    for tau in spec.tau_grid:
        try:
            a = float(primal.risky_amount(tau, spec.x_probe))
            rows.append(TurnpikeRow(tau, a, abs(a / spec.merton_target - 1.0)))
        except DualControlError as exc:
            rows.append(TurnpikeRow(tau, math.nan, math.nan, str(exc)))
    return rows


def write_turnpike_csv(rows: Sequence[TurnpikeRow], stream: TextIO, comments=()) -> None:
    write_csv(stream, ("tau", "A", "gap"), [(r.tau, r.A, r.gap) for r in rows], comments)


def corollary_limits(spec: TurnpikeSpec, tau: float,
                     ys: Sequence[float] = (1e-3, 1e-4, 1e-5)) -> dict:
    """Ratios of ``v``, ``v_y``, ``v_yy`` to ``e^{lam tau} y^q`` and its derivatives.

    Ratios are formed in log space so ``y^q`` never overflows.
    """
    if not tau > 0:
        raise DomainError("tau must be positive")
    surf = spec.surface()
    t = surf.market.T - tau
    y = np.asarray(ys, dtype=float)
    d = surf.derivatives(t, y)
    q, lam = spec.q, spec.lambda_exponent
    log_ref = lam * tau + q * np.log(y)
    with np.errstate(divide="ignore", invalid="ignore"):
        r0 = np.exp(np.log(d.v) - log_ref)
        r1 = np.exp(np.log(d.v_y / q) - (log_ref - np.log(y)))
        r2 = np.exp(np.log(d.v_yy / (q * (q - 1.0))) - (log_ref - 2.0 * np.log(y)))
    return {
        "tau": tau, "y": y, "lambda_exponent": lam, "q": q,
        "ratio_v": r0, "ratio_v_y": r1, "ratio_v_yy": r2,
        "max_deviation": float(np.max(np.abs(np.concatenate((r0, r1, r2)) - 1.0))),
    }


def large_y_limits(spec: TurnpikeSpec, tau: float, ys: Sequence[float] = (1e3, 1e4)) -> dict:
    """``v``, ``y v_y`` and ``y^2 v_yy`` at large ``y`` (all tend to 0 when ``U(0) = 0``)."""
    surf = spec.surface()
    if abs(float(surf.dual(np.array([1e300]))[0])) > 1e-12:
        raise DomainError("large-y limits assume U(0) = 0")
    t = surf.market.T - tau
    y = np.asarray(ys, dtype=float)
    d = surf.derivatives(t, y)
    trip = np.stack((d.v, y * d.v_y, y * y * d.v_yy))
    return {"tau": tau, "y": y, "v": d.v, "y_v_y": y * d.v_y, "y2_v_yy": y * y * d.v_yy,
            "max_abs": float(np.max(np.abs(trip))), "v_y_nonpositive": bool(np.all(d.v_y <= 0))}


def merton_invariance(spec: TurnpikeSpec, xs: Sequence[float]) -> float:
    """Largest relative spread of ``A(tau, x) / x`` over the tau grid and ``xs``."""
    primal = PrimalValueSurface(spec.surface())
    ratios = [float(primal.risky_amount(tau, x)) / x for tau in spec.tau_grid for x in xs]
    ref = spec.merton_target / spec.x_probe
    return max(abs(r / ref - 1.0) for r in ratios)


def default_residual_grid(T: float, kind: str, upper: float = 1.0,
                          n_t: int = 20, n_space: int = 40):
    """20 x 40 interior grid: ``t`` in ``[0.05T, 0.8T]``, space logarithmic (dual) or linear (capped wealth)."""
    t = np.linspace(0.05 * T, 0.8 * T, n_t)
    if kind == "dual":
        return t, np.geomspace(0.05, 20.0, n_space)
    if kind == "capped":
        return t, np.linspace(0.05, 0.95, n_space) * upper
    if kind == "power":
        return t, np.geomspace(0.1, 10.0, n_space)
    raise DomainError(f"unknown grid kind {kind!r}")
