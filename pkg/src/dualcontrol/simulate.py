"""Monte Carlo paths of the optimal wealth process.

Randomness comes from Philox streams keyed by ``(seed, block index)`` over fixed-size
blocks of paths, so results never depend on the number of worker threads.
"""

from __future__ import annotations

import enum
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import normal
from .closedform import CappedSolution
from .errors import DomainError
from .market import MarketModel, Regime, effective_theta
from .primal import ClampWarning, PrimalValueSurface
from .riskfrontier import DiscreteLossDistribution, RiskSpec, cvar_ru
from .utility import CappedUtility


class Scheme(str, enum.Enum):
    EXACT_CAPPED = "exact_capped"
    EULER_FEEDBACK = "euler_feedback"


class SimulationWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SimConfig:
    paths: int = 100_000
    steps: int = 2000
    seed: int = 42
    scheme: Scheme = Scheme.EXACT_CAPPED
    threads: int = 1
    antithetic: bool = False
    block_size: int = 8192
    beta: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.paths < 1 or self.steps < 1:
            raise DomainError("paths and steps must be at least 1")
        if self.block_size < 2 or self.block_size % 2:
            raise DomainError("block_size must be an even integer >= 2")
        if self.threads < 1:
            raise DomainError("threads must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class PathStats:
    mean: float
    stderr: float
    terminal: np.ndarray = field(repr=False)
    payoff: np.ndarray = field(repr=False)
    hist_edges: np.ndarray = field(repr=False)
    hist_masses: np.ndarray = field(repr=False)
    cvar: float = math.nan
    c: float = math.nan
    checkpoints: dict = field(default_factory=dict, repr=False)
    warnings: tuple[str, ...] = ()

    def histogram(self) -> dict:
        return {"edges": self.hist_edges.tolist(), "masses": self.hist_masses.tolist()}


def _rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _normals(rng: np.random.Generator, shape, antithetic: bool) -> np.ndarray:
    if not antithetic:
        return rng.standard_normal(shape)
    half = rng.standard_normal((shape[0] // 2,) + tuple(shape[1:]))
    return np.concatenate((half, -half), axis=0)


def _blocks(n: int, size: int):
    return [(b, s, min(s + size, n)) for b, s in enumerate(range(0, n, size))]


def _run_blocks(cfg: SimConfig, work):
    jobs = _blocks(cfg.paths, cfg.block_size)
    if cfg.threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            return list(ex.map(lambda j: work(*j), jobs))
    return [work(*j) for j in jobs]


def _histogram(samples: np.ndarray, bins: int = 50):
    vals = np.unique(samples)
    if len(vals) <= bins:
        # atoms: one bin per distinct value
        counts = np.array([np.count_nonzero(samples == v) for v in vals], dtype=float)
        edges = vals
    else:
        counts, edges = np.histogram(samples, bins=bins)
    return np.asarray(edges, dtype=float), counts / counts.sum()


def _stats(terminal, payoff, cfg: SimConfig, c: float, checkpoints=None, notes=()) -> PathStats:
    n = len(payoff)
    mean = float(np.mean(payoff))
    stderr = float(np.std(payoff, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    edges, masses = _histogram(terminal)
    _, cv = cvar_ru(DiscreteLossDistribution.empirical(c - payoff), cfg.beta)
    return PathStats(mean, stderr, terminal, payoff, edges, masses, cv, c,
                     checkpoints or {}, tuple(notes))


def _checkpoint_steps(times: Sequence[float], T: float, steps: int) -> dict:
    out = {}
    for t in times:
        if not 0 < t < T:
            raise DomainError("checkpoints must lie strictly inside (0, T)")
        out[float(t)] = int(round(t / T * steps))
    return out


def simulate_exact_capped(m: MarketModel, H: float, x: float, cfg: SimConfig,
                          checkpoints: Sequence[float] = (), c: Optional[float] = None) -> PathStats:
    """Exact sampling: ``X_t = H Phi(Z_t)``, ``Z_t = (Z_0 sqrt(T) + theta t + W_t) / sqrt(T - t)``."""
    sol = CappedSolution(H, m)
    z0 = float(sol._z0(x))
    th = effective_theta(m)
    T = m.T
    times = sorted(float(t) for t in checkpoints)
    for t in times:
        if not 0 < t < T:
            raise DomainError("checkpoints must lie strictly inside (0, T)")
    grid = np.array(times + [T])
    dt = np.diff(np.concatenate(([0.0], grid)))

    def work(b, s, e):
        dw = _normals(_rng(cfg.seed, b), (e - s, len(grid)), cfg.antithetic) * np.sqrt(dt)
        w = np.cumsum(dw, axis=1)
        drift = z0 * math.sqrt(T) + th * grid
        xt = H * normal.cdf((drift[:-1] + w[:, :-1]) / np.sqrt(T - grid[:-1]))
        xT = np.where(drift[-1] + w[:, -1] > 0, H, 0.0)
        return xt, xT

    parts = _run_blocks(cfg, work)
    terminal = np.concatenate([p[1] for p in parts])
    cps = {t: np.concatenate([p[0][:, i] for p in parts]) for i, t in enumerate(times)}
    return _stats(terminal, np.minimum(terminal, H), cfg, x if c is None else c, cps)


def simulate_euler(m: MarketModel, primal: PrimalValueSurface, x: float, cfg: SimConfig,
                   utility: Optional[Callable] = None,
                   control: Optional[Callable[[float, np.ndarray], np.ndarray]] = None,
                   checkpoints: Sequence[float] = (), c: Optional[float] = None) -> PathStats:
    """Euler–Maruyama for ``dX = (r X + A (mu - r)) dt + A sigma dW``.

    ``A`` is the optimal risky amount unless ``control(t, X)`` supplies a proportion.
    The state used to evaluate the optimal control is clamped to ``[eps, threshold - eps]``;
    paths at or above the threshold hold no risky asset and paths reaching 0 stay there.
    """
    if utility is None:
        utility = getattr(primal.dual_surface.dual, "source", None)
        if utility is None:
            raise DomainError("terminal utility required")
    if not x > 0:
        raise DomainError("initial wealth must be positive")
    T, steps = m.T, cfg.steps
    dt = T / steps
    regime = primal.dual_surface.regime
    r = m.r if regime is Regime.WITH_RATE else 0.0
    excess = m.mu - m.r
    th = primal.dual_surface.theta
    xs_T = primal.x_star
    eps = 1e-8 * xs_T if math.isfinite(xs_T) else 1e-12 * x
    blow_up = 1e3 * xs_T if math.isfinite(xs_T) else 1e6 * x * math.exp(abs(r) * T)
    cp_steps = _checkpoint_steps(checkpoints, T, steps)
    thresholds = [primal.threshold(k * dt) for k in range(steps)]
    if x >= thresholds[0]:
        control = control or (lambda t, X: np.zeros_like(X))

    def work(b, s, e):
        n = e - s
        rng = _rng(cfg.seed, b)
        X = np.full(n, float(x))
        ydual = None
        snaps = {}
        exploded = False
        for k in range(steps):
            t = k * dt
            dW = _normals(rng, (n,), cfg.antithetic) * math.sqrt(dt)
            A = np.zeros(n)
            if control is not None:
                A = np.asarray(control(t, X), dtype=float) * X
            else:
                live = (X > 0) & (X < thresholds[k])
                if np.any(live):
                    Xc = np.clip(X[live], eps, thresholds[k] - eps)
                    guess = None if ydual is None else ydual[live]
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", ClampWarning)
                        st = primal.state(t, Xc, guess=guess)
                    A[live] = st["A"]
                    yfull = np.full(n, np.nan) if ydual is None else ydual.copy()
                    yfull[live] = st["y"]
                    ydual = yfull * np.exp(-th * dW - 0.5 * th * th * dt)
            X = X + (r * X + A * excess) * dt + A * m.sigma * dW
            X = np.where(X > 0, X, 0.0)
            if np.any(X > blow_up):
                exploded = True
            if k + 1 in cp_steps.values():
                snaps[k + 1] = X.copy()
        return X, snaps, exploded

    parts = _run_blocks(cfg, work)
    terminal = np.concatenate([p[0] for p in parts])
    cps = {t: np.concatenate([p[1][k] for p in parts]) for t, k in cp_steps.items()}
    notes = []
    if any(p[2] for p in parts):
        notes.append("paths exceeded 1e3 * threshold; increase steps")
        warnings.warn(notes[-1], SimulationWarning, stacklevel=2)
    payoff = np.asarray(utility(terminal), dtype=float)
    return _stats(terminal, payoff, cfg, x if c is None else c, cps, notes)


def simulate(m: MarketModel, primal: PrimalValueSurface, x: float, cfg: SimConfig,
             checkpoints: Sequence[float] = (), c: Optional[float] = None) -> PathStats:
    """Dispatch on ``cfg.scheme``."""
    if cfg.scheme is Scheme.EXACT_CAPPED:
        src = getattr(primal.dual_surface.dual, "source", None)
        if not isinstance(src, CappedUtility):
            raise DomainError("exact scheme is available for the capped utility only")
        if primal.dual_surface.regime is not Regime.DISCOUNTED:
            raise DomainError("exact scheme needs the discounted regime")
        return simulate_exact_capped(m, src.H, x, cfg, checkpoints, c)
    return simulate_euler(m, primal, x, cfg, checkpoints=checkpoints, c=c)


def empirical_cvar(stats: PathStats, risk: RiskSpec) -> float:
    return cvar_ru(DiscreteLossDistribution.empirical(risk.c - stats.payoff), risk.beta)[1]


def value_process(primal: PrimalValueSurface, stats: PathStats) -> list[tuple[float, float, float]]:
    """``(t, mean, stderr)`` of ``u(t, X_t)`` at each checkpoint, then of ``U(X_T)``."""
    rows = []
    for t in sorted(stats.checkpoints):
        vals = np.asarray(primal.u(t, stats.checkpoints[t]), dtype=float)
        rows.append((t, float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals)))))
    rows.append((primal.market.T, stats.mean, stats.stderr))
    return rows


def martingale_diagnostic(m: MarketModel, primal: PrimalValueSurface, x: float, cfg: SimConfig,
                          checkpoints: Sequence[float]) -> float:
    """Largest ``|E u(t_i, X_{t_i}) - u(0, x)|`` in units of its standard error."""
    if primal.dual_surface.regime is not Regime.DISCOUNTED:
        raise DomainError("the value process is a martingale in the discounted regime")
    stats = simulate(m, primal, x, cfg, checkpoints)
    u0 = float(primal.u(0.0, x))
    worst = 0.0
    for _, mean, se in value_process(primal, stats):
        dev = abs(mean - u0)
        worst = max(worst, dev / se if se > 0 else (0.0 if dev < 1e-12 else math.inf))
    return worst
