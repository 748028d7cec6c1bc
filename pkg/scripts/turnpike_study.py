"""Risky amount against the Merton amount as the horizon grows.

Prints one CSV block per probe wealth and the small-y corollary check.
"""

import argparse
import sys

from dualcontrol.analysis import TurnpikeSpec, corollary_limits, turnpike_sweep, write_turnpike_csv
from dualcontrol.config import RunConfig, load
from dualcontrol.utility import normalized


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/power_tail.yaml")
    ap.add_argument("--probes", default="0.5,1,2")
    args = ap.parse_args()

    cfg = load(args.config) if args.config else RunConfig()
    u = cfg.utility.build()
    market = cfg.market.build()
    taus = tuple(cfg.turnpike.tau_grid)
    for x in (float(v) for v in args.probes.split(",")):
        spec = TurnpikeSpec(u, market, taus, x, cfg.utility.order)
        rows = turnpike_sweep(spec)
        write_turnpike_csv(rows, sys.stdout, [f"x_probe={x} merton_target={spec.merton_target:.9g}"])

    spec = TurnpikeSpec(normalized(u, cfg.utility.p, cfg.utility.k), market, taus)
    for tau in taus:
        rep = corollary_limits(spec, tau)
        print(f"# corollary tau={tau:g} lambda_exponent={rep['lambda_exponent']:.6g} "
              f"max_deviation={rep['max_deviation']:.3e}")


if __name__ == "__main__":
    main()
