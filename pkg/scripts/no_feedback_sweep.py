#!/usr/bin/env python3
"""Sweep erasure probability without feedback and compare policies.

Emits one CSV row per (policy, p) cell: majority vote, 2-step lookahead,
and fixed-period FEC baselines at a few periods.
"""

import argparse
import sys

from fecsched import ProblemParams, RunConfig, monte_carlo


def run(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=100)
    parser.add_argument("--p", default="0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4")
    parser.add_argument("--trials", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=None)
    args = parser.parse_args(argv)

    cells = [("mv", {}), ("dstep", {})] + [
        ("lowdelay", {"period_l": L}) for L in (3, 4, 5)
    ]
    lines = ["policy,period_l,p,mean_e2e,std,ci95"]
    for p in (float(x) for x in args.p.split(",")):
        params = ProblemParams(block_size=args.n, erasure_prob=p, search_depth=2)
        for policy, kwargs in cells:
            summary = monte_carlo(
                RunConfig(
                    params=params,
                    policy=policy,
                    policy_kwargs=kwargs,
                    trials=args.trials,
                    base_seed=args.seed,
                )
            )
            label = kwargs.get("period_l", "")
            lines.append(
                f"{policy},{label},{p},{summary.mean:.6f},"
                f"{summary.std:.6f},{summary.ci95:.6f}"
            )
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    run()
