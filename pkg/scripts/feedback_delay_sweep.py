#!/usr/bin/env python3
"""Sweep the feedback delay for the lookahead policy.

Latency should degrade as the feedback delay grows, with even stale
feedback (T=8) still beating the no-feedback case.
"""

import argparse
import sys

from fecsched import ProblemParams, RunConfig, monte_carlo


def run(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=100)
    parser.add_argument("--p", type=float, default=0.3)
    parser.add_argument("--t-values", default="0,2,4,8,inf")
    parser.add_argument("--trials", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=None)
    args = parser.parse_args(argv)

    lines = ["t_feedback,p,mean_e2e,std,ci95"]
    for token in args.t_values.split(","):
        t = None if token.strip().lower() == "inf" else int(token)
        params = ProblemParams(
            block_size=args.n,
            erasure_prob=args.p,
            feedback_delay=t,
            search_depth=2,
        )
        summary = monte_carlo(
            RunConfig(
                params=params,
                policy="dstep",
                trials=args.trials,
                base_seed=args.seed,
            )
        )
        label = "inf" if t is None else t
        lines.append(
            f"{label},{args.p},{summary.mean:.6f},"
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
