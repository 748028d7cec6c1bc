"""CVaR by Rockafellar–Uryasev minimization and the wealth–CVaR frontier of the capped problem.

The scalarized problem ``max E[U(X_T)] - lam * CVaR_beta(c - U(X_T))`` is solved in two
stages. For fixed ``y`` the inner problem is an ordinary utility maximization with the
piecewise-linear utility ``U^y = U - lam*delta*(c - y - U)^+``; the outer problem
maximizes the concave map ``y -> u^y(x) - lam*y`` over ``[c - H, c]``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from . import normal
from .errors import DomainError, NumericalError
from .market import MarketModel, Regime, kernel_params
from .output import write_csv
from .primal import primal_from_utility
from .utility import CappedUtility, PiecewiseLinearUtility

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
BRACKET_LO = 1e-10
BRACKET_HI = 1e10


@dataclass(frozen=True)
class RiskSpec:
    beta: float
    c: float

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise DomainError("beta must lie in (0, 1)")

    @property
    def delta(self) -> float:
        return 1.0 / (1.0 - self.beta)


@dataclass(frozen=True)
class DiscreteLossDistribution:
    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        v = tuple(float(a) for a in self.values)
        p = tuple(float(a) for a in self.probs)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)
        if not v:
            raise DomainError("empty loss distribution")
        if len(v) != len(p):
            raise DomainError("values and probabilities differ in length")
        if any(q < 0 for q in p) or abs(math.fsum(p) - 1.0) > 1e-12:
            raise DomainError("probabilities must be non-negative and sum to 1")

    @classmethod
    def from_atoms(cls, atoms) -> "DiscreteLossDistribution":
        atoms = list(atoms)
        return cls(tuple(a for a, _ in atoms), tuple(b for _, b in atoms))

    @classmethod
    def empirical(cls, samples) -> "DiscreteLossDistribution":
        vals, counts = np.unique(np.asarray(samples, dtype=float), return_counts=True)
        return cls(tuple(vals), tuple(counts / counts.sum()))

    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))


@dataclass(frozen=True)
class FrontierPoint:
    lam: float
    y_star: float
    var: float
    cvar: float
    expected_utility: float
    objective: float
    flat: bool = False
    brackets_ok: bool = True


def ru_objective(d: DiscreteLossDistribution, beta: float, y):
    """``y + delta * E(Z - y)^+`` for scalar or array ``y``."""
    z = np.asarray(d.values)
    p = np.asarray(d.probs)
    ya = np.asarray(y, dtype=float)
    excess = np.maximum(z - ya[..., None], 0.0)
    return ya + (excess @ p) / (1.0 - beta)


def cvar_ru(d: DiscreteLossDistribution, beta: float) -> tuple[float, float]:
    """``(VaR, CVaR)``; the objective is piecewise linear with kinks at the atoms,
    so scanning the atoms finds the minimum and the left end of the argmin set."""
    if not 0.0 < beta < 1.0:
        raise DomainError("beta must lie in (0, 1)")
    z = np.asarray(d.values)
    order = np.argsort(z, kind="stable")
    z, p = z[order], np.asarray(d.probs)[order]
    atoms, first = np.unique(z, return_index=True)
    # mass and first moment strictly above each distinct atom
    tail_p = np.concatenate((np.cumsum(p[::-1])[::-1], [0.0]))
    tail_pz = np.concatenate((np.cumsum((p * z)[::-1])[::-1], [0.0]))
    nxt = np.append(first[1:], len(z))
    f = atoms + (tail_pz[nxt] - atoms * tail_p[nxt]) / (1.0 - beta)
    best = float(np.min(f))
    tol = 1e-12 * max(1.0, abs(best))
    j = int(np.argmax(f <= best + tol))
    return float(atoms[j]), best


def cvar_cap_closed(x: float, H: float, probs: tuple[float, float], beta: float) -> float:
    """CVaR of ``x - min(X_T, H)`` when ``X_T`` is ``H`` or ``0`` with ``probs = (P_H, P_0)``."""
    p_h, p_0 = probs
    if beta >= p_h:
        return float(x)
    return float(x - H * (1.0 - p_0 / (1.0 - beta)))


def inner_utility(y: float, lam: float, risk: RiskSpec, H: float):
    """``U^y`` as ``(PiecewiseLinearUtility, additive offset)``."""
    if not H > 0:
        raise DomainError("cap H must be positive")
    if lam < 0:
        raise DomainError("lambda must be non-negative")
    k = lam * risk.delta
    h = risk.c - y
    if k == 0 or h <= 0:
        return PiecewiseLinearUtility((H,), (1.0,), H), 0.0
    if h >= H:
        return PiecewiseLinearUtility((H,), (1.0 + k,), (1.0 + k) * H), -k * h
    return PiecewiseLinearUtility((h, H), (1.0 + k, 1.0), H), 0.0


@dataclass(frozen=True)
class InnerResult:
    value: float
    dual_point: float
    utility: PiecewiseLinearUtility
    offset: float
    bracket: tuple[float, float] = field(default=(math.nan, math.nan))

    @property
    def brackets_ok(self) -> bool:
        return self.bracket[0] < 0 < self.bracket[1]


def inner_solve(y: float, lam: float, risk: RiskSpec, market: MarketModel, t: float, x: float,
                H: float, regime: Regime = Regime.DISCOUNTED) -> InnerResult:
    if not 0 < x < H:
        raise DomainError("need 0 < x < H")
    plu, offset = inner_utility(y, lam, risk, H)
    primal = primal_from_utility(market, plu, regime)
    dual = primal.dual_surface
    g = dual.v_y(t, np.array([BRACKET_LO, BRACKET_HI])) + x
    if not (g[0] < 0 < g[1]):
        raise NumericalError(f"inner root not bracketed at y={y}: g={g.tolist()}")
    st = primal.state(t, x)
    return InnerResult(float(st["u"]) + offset, float(st["y"]), plu, offset,
                       (float(g[0]), float(g[1])))


def inner_value(y, lam, risk, market, t, x, H, regime=Regime.DISCOUNTED) -> float:
    return inner_solve(y, lam, risk, market, t, x, H, regime).value


def terminal_distribution(plu: PiecewiseLinearUtility, market: MarketModel, t: float, y0: float,
                          regime: Regime = Regime.DISCOUNTED):
    """Atoms ``(x_i, P(X_T = x_i))`` of the optimal terminal wealth.

    The dual maximizer is ``x_i`` exactly when ``c_{i+1} <= Y_T < c_i``, with
    ``log Y_T`` normal around ``log y0 + drift`` with sd ``alpha``.
    """
    k = kernel_params(market, t, regime)
    if k.alpha <= 0:
        raise DomainError("terminal distribution needs t < T")
    xs = np.array((0.0,) + plu.breakpoints)
    c = np.array((math.inf,) + plu.all_slopes)
    mu = math.log(y0) + k.drift_shift
    with np.errstate(divide="ignore"):
        z = (np.log(c) - mu) / k.alpha
    probs = normal.cdf_diff(z[1:], z[:-1])
    probs = probs / probs.sum()
    return xs, probs


def loss_distribution(xs, probs, utility, c: float) -> DiscreteLossDistribution:
    return DiscreteLossDistribution(tuple(c - np.asarray(utility(xs))), tuple(probs))


def golden_max(f, a: float, b: float, tol: float):
    """Maximize a unimodal ``f`` on ``[a, b]``; ties go to the left. Returns ``(x, fx, flat)``."""
    fa, fb = f(a), f(b)
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    scale = max(1.0, abs(fa), abs(fb))
    if max(abs(fc - fa), abs(fd - fa), abs(fb - fa)) <= 1e-12 * scale:
        return a, fa, True
    lo, hi = a, b
    while hi - lo > tol:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - GOLDEN * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + GOLDEN * (hi - lo)
            fd = f(d)
    cands = [(a, fa), (lo, f(lo)), (0.5 * (lo + hi), f(0.5 * (lo + hi))), (hi, f(hi)), (b, fb)]
    best = max(v for _, v in cands)
    x = min(p for p, v in cands if v >= best - 1e-14 * scale)
    return x, f(x), False


def outer_maximize(lam: float, risk: RiskSpec, market: MarketModel, t: float, x: float,
                   H: float = 1.0, regime: Regime = Regime.DISCOUNTED,
                   reward: str = "utility") -> FrontierPoint:
    if reward not in ("utility", "wealth"):
        raise DomainError("reward must be 'utility' or 'wealth'")
    brackets = []

    def objective(y):
        r = inner_solve(y, lam, risk, market, t, x, H, regime)
        brackets.append(r.brackets_ok)
        return r.value - lam * y

    y_star, _, flat = golden_max(objective, risk.c - H, risk.c, 1e-8 * H)
    res = inner_solve(y_star, lam, risk, market, t, x, H, regime)
    xs, probs = terminal_distribution(res.utility, market, t, res.dual_point, regime)
    base = CappedUtility(H)
    d = loss_distribution(xs, probs, base, risk.c)
    var, cvar = cvar_ru(d, risk.beta)
    payoff = np.asarray(base(xs)) if reward == "utility" else xs
    eu = float(np.dot(payoff, probs))
    return FrontierPoint(lam=float(lam), y_star=float(y_star), var=var, cvar=cvar,
                         expected_utility=eu, objective=eu - lam * cvar, flat=flat,
                         brackets_ok=all(brackets) and res.brackets_ok)


def frontier_sweep(lambda_grid: Sequence[float], risk: RiskSpec, market: MarketModel, t: float,
                   x: float, H: float = 1.0, regime: Regime = Regime.DISCOUNTED,
                   reward: str = "utility", workers: int = 1) -> list[FrontierPoint]:
    grid = [float(v) for v in lambda_grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise DomainError("lambda grid must be sorted ascending")

    def one(lam):
        return outer_maximize(lam, risk, market, t, x, H, regime, reward)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(one, grid))
    return [one(lam) for lam in grid]


FRONTIER_HEADER = ("lambda", "var", "cvar", "expected_utility", "objective")


def write_frontier_csv(points: Sequence[FrontierPoint], stream: TextIO,
                       comments: Sequence[str] = ()) -> None:
    rows = [(p.lam, p.var, p.cvar, p.expected_utility, p.objective) for p in points]
    write_csv(stream, FRONTIER_HEADER, rows, comments)
