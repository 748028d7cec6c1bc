"""YAML run configuration: nested dataclasses with strict key checking and a lossless round trip."""

from __future__ import annotations

import dataclasses
import hashlib
import typing
from dataclasses import dataclass, field, fields
from typing import Any, Optional

import yaml

from .errors import ConfigError, DomainError
from .market import Constraint, MarketModel, Regime
from .utility import (CappedPowerUtility, CappedUtility, PiecewiseLinearUtility, PowerTailUtility,
                      normalized)


@dataclass(frozen=True)
class MarketConfig:
    r: float = 0.0
    mu: float = 0.04
    sigma: float = 0.2
    T: float = 1.0
    constraint: str = "unconstrained"
    regime: str = "discounted"

    def build(self) -> MarketModel:
        return MarketModel(self.r, self.mu, self.sigma, self.T, Constraint(self.constraint))

    @property
    def regime_enum(self) -> Regime:
        return Regime(self.regime)


@dataclass(frozen=True)
class UtilityConfig:
    kind: str = "cap"
    H: Optional[float] = 1.0
    p: Optional[float] = None
    k: float = 1.0
    x0: float = 0.0
    breakpoints: Optional[list] = None
    slopes: Optional[list] = None
    top: Optional[float] = None
    normalize: bool = False
    backend: Optional[str] = None
    order: int = 128

    def build(self):
        kind = self.kind
        if kind == "cap":
            return CappedUtility(_req(self.H, "utility.H"))
        if kind == "capped_power":
            return CappedPowerUtility(_req(self.H, "utility.H"), _req(self.p, "utility.p"))
        if kind == "piecewise":
            return PiecewiseLinearUtility(tuple(_req(self.breakpoints, "utility.breakpoints")),
                                          tuple(_req(self.slopes, "utility.slopes")),
                                          _req(self.top, "utility.top"))
        if kind in ("power", "power_tail"):
            p = _req(self.p, "utility.p")
            inner = None
            if self.breakpoints is not None:
                inner = PiecewiseLinearUtility(tuple(self.breakpoints), tuple(self.slopes or ()),
                                               _req(self.top, "utility.top"))
            u = PowerTailUtility(p, self.k, 0.0 if kind == "power" else self.x0, inner)
            return normalized(u, p, self.k) if self.normalize else u
        raise ConfigError(f"unknown utility kind {kind!r}")


@dataclass(frozen=True)
class ValueConfig:
    t: float = 0.0
    x: float = 0.5


@dataclass(frozen=True)
class SimulationConfig:
    paths: int = 100_000
    steps: int = 2000
    seed: int = 42
    scheme: str = "exact_capped"
    threads: int = 1
    antithetic: bool = False
    block_size: int = 8192
    beta: float = 0.95
    x: float = 0.5
    checkpoints: list = field(default_factory=lambda: [0.25, 0.5, 0.75])


@dataclass(frozen=True)
class FrontierConfig:
    beta: float = 0.95
    c: Optional[float] = None
    x: float = 0.5
    t: float = 0.0
    lambdas: list = field(default_factory=lambda: [0.0, 0.25, 0.5, 1.0, 2.0])
    reward: str = "utility"
    workers: int = 1


@dataclass(frozen=True)
class TurnpikeConfig:
    tau_grid: list = field(default_factory=lambda: [1.0, 2.0, 5.0, 10.0, 20.0, 40.0])
    x_probe: float = 1.0


@dataclass(frozen=True)
class CheckConfig:
    n_t: int = 20
    n_space: int = 40
    h_rel: float = 1e-4
    richardson: bool = True
    limits_t: Optional[float] = None


SECTIONS = {
    "market": MarketConfig,
    "utility": UtilityConfig,
    "value": ValueConfig,
    "simulation": SimulationConfig,
    "frontier": FrontierConfig,
    "turnpike": TurnpikeConfig,
    "check": CheckConfig,
}

# execution settings that never change results; left out of the provenance hash
NON_SEMANTIC = {("simulation", "threads"), ("frontier", "workers")}


@dataclass(frozen=True)
class RunConfig:
    market: MarketConfig = field(default_factory=MarketConfig)
    utility: UtilityConfig = field(default_factory=UtilityConfig)
    value: ValueConfig = field(default_factory=ValueConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    frontier: FrontierConfig = field(default_factory=FrontierConfig)
    turnpike: TurnpikeConfig = field(default_factory=TurnpikeConfig)
    check: CheckConfig = field(default_factory=CheckConfig)

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> "RunConfig":
        data = data or {}
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        return cls(**{name: _section(sec, data.get(name)) for name, sec in SECTIONS.items()})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def digest(self) -> str:
        d = self.to_dict()
        for sec, key in NON_SEMANTIC:
            d[sec].pop(key, None)
        return hashlib.sha256(yaml.safe_dump(d, sort_keys=True).encode()).hexdigest()

    def override(self, dotted: str, value: Any) -> "RunConfig":
        try:
            sec, key = dotted.split(".", 1)
        except ValueError:
            raise ConfigError(f"override key must look like section.key, got {dotted!r}") from None
        d = self.to_dict()
        if sec not in d or key not in d[sec]:
            raise ConfigError(f"unknown config key {dotted!r}")
        d[sec][key] = value
        return RunConfig.from_dict(d)


def _req(v, name):
    if v is None:
        raise ConfigError(f"missing required setting {name}")
    return v


_KINDS = {int: (int,), float: (int, float), bool: (bool,), str: (str,), list: (list,)}


def _coerce(name: str, typ, value):
    args = [a for a in typing.get_args(typ) if a is not type(None)]
    optional = len(args) < len(typing.get_args(typ))
    base = args[0] if optional else typ
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{name} may not be null")
    if (base is bool) != isinstance(value, bool):
        raise ConfigError(f"{name} must be {base.__name__}")
    if not isinstance(value, _KINDS[base]):
        if base is list and isinstance(value, (int, float)):
            return [float(value)]
        raise ConfigError(f"{name} must be {base.__name__}")
    if base is float:
        return float(value)
    if base is list:
        return [float(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else v
                for v in value]
    return value


def _section(cls, data):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"section {cls.__name__} must be a mapping")
    hints = typing.get_type_hints(cls)
    unknown = set(data) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigError(f"unknown keys in {cls.__name__}: {sorted(unknown)}")
    kw = {k: _coerce(k, hints[k], v) for k, v in data.items()}
    try:
        return cls(**kw)
    except (TypeError, DomainError) as exc:
        raise ConfigError(str(exc)) from exc


def load(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    return RunConfig.from_dict(data)


def parse_value(text: str):
    """Override values use YAML scalar syntax (``0.5``, ``true``, ``[1, 2]``)."""
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override value {text!r}") from exc
