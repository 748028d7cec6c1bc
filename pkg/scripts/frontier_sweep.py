"""Trace the wealth-CVaR frontier for the capped utility over a lambda grid.

    python scripts/frontier_sweep.py --config configs/capped.yaml --out frontier.csv
"""

import argparse
import sys

import numpy as np

from dualcontrol.config import RunConfig, load
from dualcontrol.riskfrontier import RiskSpec, frontier_sweep, write_frontier_csv
from dualcontrol.utility import CappedUtility


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawTextHelpFormatter)
    ap.add_argument("--config")
    ap.add_argument("--lambdas", default="0,0.1,0.25,0.5,1,2,5",
                    help="comma-separated lambda grid (ascending)")
    ap.add_argument("--betas", default="0.9,0.95,0.99")
    ap.add_argument("--out")
    args = ap.parse_args()

    cfg = load(args.config) if args.config else RunConfig()
    u = cfg.utility.build()
    if not isinstance(u, CappedUtility):
        sys.exit("frontier sweep needs utility.kind = cap")
    lams = sorted(float(v) for v in args.lambdas.split(","))
    f = cfg.frontier
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        for beta in (float(b) for b in args.betas.split(",")):
            risk = RiskSpec(beta, f.x if f.c is None else f.c)
            pts = frontier_sweep(lams, risk, cfg.market.build(), f.t, f.x, u.H,
                                 cfg.market.regime_enum, f.reward, f.workers)
            cv = np.array([p.cvar for p in pts])
            eu = np.array([p.expected_utility for p in pts])
            mono = bool(np.all(np.diff(cv) <= 0) and np.all(np.diff(eu) <= 0))
            write_frontier_csv(pts, out, [f"beta={beta} c={risk.c} monotone={mono}"])
    finally:
        if out is not sys.stdout:
            out.close()


if __name__ == "__main__":
    main()
