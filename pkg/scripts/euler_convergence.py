"""Weak error of the Euler feedback scheme against the closed-form capped value.

Runs the same seed at each step count; the bias should shrink as steps double.
"""

import argparse
import sys

from dualcontrol.closedform import u_cap
from dualcontrol.config import RunConfig, load
from dualcontrol.output import write_csv
from dualcontrol.primal import primal_from_utility
from dualcontrol.simulate import Scheme, SimConfig, simulate
from dualcontrol.utility import CappedUtility


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/capped.yaml")
    ap.add_argument("--steps", default="250,500,1000,2000")
    ap.add_argument("--paths", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    cfg = load(args.config) if args.config else RunConfig()
    u = cfg.utility.build()
    if not isinstance(u, CappedUtility):
        sys.exit("the convergence study compares against the capped closed form")
    m = cfg.market.build()
    x = cfg.simulation.x
    pr = primal_from_utility(m, u)
    target = float(u_cap(m, u.H, 0.0, x))
    rows = []
    for n in (int(v) for v in args.steps.split(",")):
        sc = SimConfig(paths=args.paths, steps=n, seed=args.seed, scheme=Scheme.EULER_FEEDBACK,
                       block_size=min(args.paths + args.paths % 2, 20_000))
        s = simulate(m, pr, x, sc)
        rows.append((n, s.mean, s.stderr, s.mean - target))
    write_csv(sys.stdout, ("steps", "mean", "stderr", "bias"), rows,
              [f"target={target:.9g} paths={args.paths} seed={args.seed}"])


if __name__ == "__main__":
    main()
