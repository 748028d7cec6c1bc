"""``dualcontrol <value|simulate|frontier|turnpike|check> --config PATH [overrides]``.

Exit status: 0 success, 1 unknown command, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analysis import (TurnpikeSpec, corollary_limits, default_residual_grid, dual_residual,
                       large_y_limits, primal_residual, turnpike_sweep, write_turnpike_csv)
from .closedform import CappedSolution
from .config import RunConfig, load, parse_value
from .dualvalue import DualValueSurface, limits_report
from .errors import ConfigError, DomainError, NumericalError
from .output import dumps_flat, fmt, write_csv
from .primal import PrimalValueSurface
from .riskfrontier import RiskSpec, frontier_sweep, write_frontier_csv
from .simulate import SimConfig, simulate, value_process
from .utility import CappedUtility

COMMANDS = ("value", "simulate", "frontier", "turnpike", "check")
USAGE = "usage: dualcontrol {" + ",".join(COMMANDS) + "} --config PATH [options]\n"

# command-line flag -> config key, per command
FLAG_KEYS = {
    "value": {"t": "value.t", "x": "value.x"},
    "simulate": {"x": "simulation.x", "seed": "simulation.seed", "paths": "simulation.paths",
                 "steps": "simulation.steps", "scheme": "simulation.scheme",
                 "threads": "simulation.threads", "beta": "simulation.beta"},
    "frontier": {"t": "frontier.t", "x": "frontier.x", "beta": "frontier.beta",
                 "lambda": "frontier.lambdas"},
    "turnpike": {"x": "turnpike.x_probe"},
    "check": {"t": "check.limits_t"},
}


def _parser(command: str) -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog=f"dualcontrol {command}")
    ap.add_argument("--config", help="YAML config file (defaults apply when omitted)")
    ap.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                    help="override any config value")
    ap.add_argument("--out", help="write the main output here instead of stdout")
    ap.add_argument("--json", action="store_true", help="emit a flat JSON record")
    ap.add_argument("--dump-config", metavar="PATH", help="write the effective config as YAML")
    for flag in FLAG_KEYS[command]:
        ap.add_argument(f"--{flag}", dest=f"flag_{flag}")
    if command == "simulate":
        ap.add_argument("--histogram", metavar="PATH", help="write the terminal histogram as JSON")
    return ap


def _effective_config(command: str, ns) -> RunConfig:
    cfg = load(ns.config) if ns.config else RunConfig()
    for item in ns.set:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        cfg = cfg.override(key.strip(), parse_value(val))
    for flag, key in FLAG_KEYS[command].items():
        raw = getattr(ns, f"flag_{flag}")
        if raw is None:
            continue
        val = [parse_value(v) for v in raw.split(",")] if flag == "lambda" else parse_value(raw)
        cfg = cfg.override(key, val)
    return cfg


def _provenance(cfg: RunConfig, command: str) -> list[str]:
    seed = cfg.simulation.seed if command == "simulate" else "none"
    return [f"dualcontrol {__version__} command={command} seed={seed} config_sha256={cfg.digest()}"]


def _primal(cfg: RunConfig) -> PrimalValueSurface:
    m = cfg.market.build()
    u = cfg.utility.build()
    surf = DualValueSurface.from_utility(m, u, cfg.market.regime_enum, cfg.utility.backend,
                                         cfg.utility.order)
    return PrimalValueSurface(surf)


# ------------------------------------------------------------------ commands


def cmd_value(cfg: RunConfig, as_json: bool) -> str:
    pr = _primal(cfg)
    t, x = cfg.value.t, cfg.value.x
    if not x > 0:
        raise DomainError("value needs positive wealth")
    if x < pr.threshold(t):
        st = pr.state(t, x)
        rec = {k: float(st[k]) for k in ("u", "y", "u_x", "u_xx", "pi", "A")}
    else:
        rec = {"u": float(pr.dual_surface.dual.value_at_zero), "y": 0.0, "u_x": 0.0,
               "u_xx": 0.0, "pi": 0.0, "A": 0.0}
    rec = {"t": t, "x": x, **rec}
    if as_json:
        return dumps_flat(rec) + "\n"
    buf = io.StringIO()
    write_csv(buf, list(rec), [list(rec.values())], _provenance(cfg, "value"))
    return buf.getvalue()


def cmd_simulate(cfg: RunConfig, as_json: bool, histogram: Optional[str] = None) -> str:
    s = cfg.simulation
    pr = _primal(cfg)
    m = pr.market
    sc = SimConfig(s.paths, s.steps, s.seed, s.scheme, s.threads, s.antithetic, s.block_size,
                   s.beta)
    cps = [c * m.T for c in s.checkpoints]
    stats = simulate(m, pr, s.x, sc, cps)
    if histogram:
        with open(histogram, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"edges": [float(fmt(v)) for v in stats.hist_edges],
                                 "masses": [float(fmt(v)) for v in stats.hist_masses]}) + "\n")
    if as_json:
        return dumps_flat({"mean": stats.mean, "stderr": stats.stderr, "cvar": stats.cvar,
                           "beta": s.beta, "paths": s.paths, "steps": s.steps, "seed": s.seed,
                           "scheme": sc.scheme.value, "warnings": "; ".join(stats.warnings)}) + "\n"
    buf = io.StringIO()
    comments = _provenance(cfg, "simulate") + [f"cvar_beta={fmt(s.beta)} cvar={fmt(stats.cvar)}"]
    comments += [f"warning: {w}" for w in stats.warnings]
    write_csv(buf, ("t", "mean", "stderr"), value_process(pr, stats), comments)
    return buf.getvalue()


def cmd_frontier(cfg: RunConfig, as_json: bool) -> str:
    f = cfg.frontier
    u = cfg.utility.build()
    if not isinstance(u, CappedUtility):
        raise DomainError("the frontier is implemented for the capped utility")
    risk = RiskSpec(f.beta, f.x if f.c is None else f.c)
    pts = frontier_sweep(sorted(f.lambdas), risk, cfg.market.build(), f.t, f.x, u.H,
                         cfg.market.regime_enum, f.reward, f.workers)
    if as_json:
        return "".join(dumps_flat({"lambda": p.lam, "var": p.var, "cvar": p.cvar,
                                   "expected_utility": p.expected_utility,
                                   "objective": p.objective, "y_star": p.y_star,
                                   "flat": p.flat}) + "\n" for p in pts)
    buf = io.StringIO()
    write_frontier_csv(pts, buf, _provenance(cfg, "frontier"))
    return buf.getvalue()


def cmd_turnpike(cfg: RunConfig, as_json: bool) -> str:
    spec = TurnpikeSpec(cfg.utility.build(), cfg.market.build(), tuple(cfg.turnpike.tau_grid),
                        cfg.turnpike.x_probe, cfg.utility.order)
    rows = turnpike_sweep(spec)
    if as_json:
        return "".join(dumps_flat({"tau": r.tau, "A": r.A, "gap": r.gap}) + "\n" for r in rows)
    buf = io.StringIO()
    comments = _provenance(cfg, "turnpike") + [
        f"merton_target={fmt(spec.merton_target)} lambda_exponent={fmt(spec.lambda_exponent)}"]
    comments += [f"tau={fmt(r.tau)} error: {r.error}" for r in rows if r.error]
    write_turnpike_csv(rows, buf, comments)
    return buf.getvalue()


def cmd_check(cfg: RunConfig, as_json: bool = True) -> str:
    pr = _primal(cfg)
    surf = pr.dual_surface
    T = surf.market.T
    c = cfg.check
    t_grid, y_grid = default_residual_grid(T, "dual", n_t=c.n_t, n_space=c.n_space)
    rec = {}
    dr = dual_residual(surf, t_grid, y_grid, c.h_rel, c.richardson)
    rec.update({f"dual_{k}": v for k, v in dr.as_dict().items() if k != "kind"})
    u = cfg.utility.build()
    x_star = pr.x_star
    if math.isfinite(x_star):
        t_grid, x_grid = default_residual_grid(T, "capped", x_star, c.n_t, c.n_space)
        t_grid = t_grid[x_grid.max() < np.array([pr.threshold(t) for t in t_grid])]
    else:
        t_grid, x_grid = default_residual_grid(T, "power", n_t=c.n_t, n_space=c.n_space)
    pres = primal_residual(pr, t_grid, x_grid, c.h_rel, c.richardson)
    rec.update({f"primal_{k}": v for k, v in pres.as_dict().items() if k != "kind"})
    lt = 0.5 * T if c.limits_t is None else c.limits_t
    rec.update({f"limits_{k}": v for k, v in limits_report(surf, lt).items()})
    if isinstance(u, CappedUtility) and surf.regime.value == "discounted":
        sol = CappedSolution(u.H, surf.market)
        xs = np.linspace(0.05, 0.95, 19) * u.H
        err = max(float(np.max(np.abs(pr.u(t, xs) - sol.u(t, xs))))
                  for t in (0.0, 0.25 * T, 0.5 * T, 0.75 * T))
        rec["closed_form_max_abs_error"] = err
    p = getattr(u, "p", getattr(getattr(u, "base", None), "p", None))
    if p is not None and surf.regime.value == "with_rate":
        spec = TurnpikeSpec(u, surf.market, (T,), 1.0, cfg.utility.order)
        cl = corollary_limits(spec, T)
        rec["corollary_lambda_exponent"] = cl["lambda_exponent"]
        rec["corollary_max_deviation"] = cl["max_deviation"]
        if abs(float(surf.dual(np.array([1e300]))[0])) <= 1e-12:
            ly = large_y_limits(spec, T)
            rec["large_y_max_abs"] = ly["max_abs"]
    rec = {"config_sha256": cfg.digest(), "version": __version__, **rec}
    return dumps_flat(rec) + "\n"


def run(argv: Sequence[str]) -> int:
    if not argv or argv[0] not in COMMANDS:
        sys.stderr.write(USAGE)
        if argv and argv[0] not in ("-h", "--help"):
            sys.stderr.write(f"unknown command: {argv[0]}\n")
        return 1
    command, rest = argv[0], list(argv[1:])
    ap = _parser(command)
    try:
        ns = ap.parse_args(rest)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        cfg = _effective_config(command, ns)
        if ns.dump_config:
            with open(ns.dump_config, "w", encoding="utf-8") as fh:
                fh.write(cfg.dumps())
        if command == "value":
            text = cmd_value(cfg, ns.json)
        elif command == "simulate":
            text = cmd_simulate(cfg, ns.json, ns.histogram)
        elif command == "frontier":
            text = cmd_frontier(cfg, ns.json)
        elif command == "turnpike":
            text = cmd_turnpike(cfg, ns.json)
        else:
            text = cmd_check(cfg)
    except (ConfigError, DomainError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except (NumericalError, ArithmeticError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return 3
    if ns.out:
        with open(ns.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))
