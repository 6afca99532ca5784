"""Experiment front end: single runs, parameter sweeps, schedule dumps, and
self-verification, with deterministic CSV output.

Exit codes: 0 success, 1 usage error, 2 verification failure, 3 runtime error.
"""

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

from .model import ProblemParams
from .policies import (
    POLICY_NAMES,
    brute_force_search,
    compile_open_loop,
    exact_expected_latency,
    make_policy,
)
from .simulator import RunConfig, monte_carlo
from .values import final_state_value, full_mdp_value, value_iteration_oracle

CSV_HEADER = "# fecsched results v1"
CSV_COLUMNS = "policy,p,t_feedback,period_l,depth,trials,seed,mean_e2e,std,ci95"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    # usage problems must exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def _parse_t(text: str) -> Optional[int]:
    text = text.strip().lower()
    if text in ("inf", "none", ""):
        return None
    value = int(text)
    if value < 0:
        raise ValueError("feedback delay must be >= 0 or 'inf'")
    return value


def _load_config(path: str) -> dict:
    """Simple key=value file; blank lines and # comments ignored."""
    values = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {raw.strip()!r}")
            key, val = line.split("=", 1)
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def build_parser() -> _Parser:
    parser = _Parser(
        prog="fecsched",
        description="Latency-minimizing FEC scheduling experiments.",
    )
    parser.add_argument(
        "--mode",
        default="single",
        choices=[
            "single",
            "sweep-p",
            "sweep-t",
            "compare-policies",
            "dump-schedule",
            "oracle-check",
        ],
        type=str.lower,
    )
    parser.add_argument("--config", help="key=value config file; flags override")
    parser.add_argument("--n", type=int, default=None, help="block size")
    parser.add_argument("--p", default=None, help="erasure probability (comma list ok)")
    parser.add_argument(
        "--t-feedback",
        default=None,
        help="feedback delay in slots, 'inf' for none (comma list ok)",
    )
    parser.add_argument(
        "--policy", default=None, help=f"one of {POLICY_NAMES} (comma list ok)"
    )
    parser.add_argument("--depth", type=int, default=None, help="lookahead depth")
    parser.add_argument("--period-l", type=int, default=None)
    parser.add_argument("--threshold", type=int, default=None)
    parser.add_argument("--trials", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default=None, help="output CSV path (default stdout)")
    return parser


_DEFAULTS = {
    "n": 20,
    "p": "0.3",
    "t_feedback": "inf",
    "policy": "mv",
    "depth": 2,
    "period_l": 3,
    "threshold": 1,
    "trials": 1000,
    "seed": 0,
}


@dataclass
class Cell:
    """One CSV row worth of work."""

    config: RunConfig
    p: float
    t_feedback: Optional[int]
    period_l: Optional[int]
    depth: Optional[int]


def _run_cell(cell: Cell) -> str:
    summary = monte_carlo(cell.config)
    t_text = "inf" if cell.t_feedback is None else str(cell.t_feedback)
    l_text = "" if cell.period_l is None else str(cell.period_l)
    d_text = "" if cell.depth is None else str(cell.depth)
    return (
        f"{cell.config.policy},{cell.p},{t_text},{l_text},{d_text},"
        f"{cell.config.trials},{cell.config.base_seed},"
        f"{summary.mean:.6f},{summary.std:.6f},{summary.ci95:.6f}"
    )


def _make_cell(policy: str, p: float, t: Optional[int], opts: dict) -> Cell:
    params = ProblemParams(
        block_size=opts["n"],
        erasure_prob=p,
        feedback_delay=t,
        search_depth=opts["depth"],
    )
    kwargs = {}
    if policy == "lowdelay":
        kwargs["period_l"] = opts["period_l"]
    if policy == "fbthresh":
        kwargs["threshold"] = opts["threshold"]
    config = RunConfig(
        params=params,
        policy=policy,
        policy_kwargs=kwargs,
        trials=opts["trials"],
        base_seed=opts["seed"],
    )
    period_l = opts["period_l"] if policy == "lowdelay" else None
    depth = opts["depth"] if policy == "dstep" else None
    return Cell(config, p, t, period_l, depth)


def _emit(lines: List[str], out_path: Optional[str]) -> None:
    text = "\n".join(lines) + "\n"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _oracle_check() -> int:
    """Closed-form value formulas vs. tabular value iteration, plus an
    exhaustive-search cross-check of the lookahead policy."""
    failures = []
    for n_packets in (2, 4, 6):
        for p in (0.1, 0.5):
            params = ProblemParams(block_size=n_packets, erasure_prob=p)
            table = value_iteration_oracle(params)
            for s, ref in table.values.items():
                closed = full_mdp_value(s, params)
                if abs(closed - ref) > 1e-9:
                    failures.append(f"value mismatch at N={n_packets} p={p} {s}")
                if s.n == n_packets and abs(
                    final_state_value(s.w, s.d, params) - ref
                ) > 1e-9:
                    failures.append(f"final-slice mismatch at N={n_packets} p={p} {s}")
    for n_packets, p in ((3, 0.2), (4, 0.5)):
        params = ProblemParams(block_size=n_packets, erasure_prob=p)
        budget = params.effective_coded_budget()
        deep = ProblemParams(
            block_size=n_packets,
            erasure_prob=p,
            search_depth=n_packets + budget,
        )
        _, best = brute_force_search(params)
        schedule = compile_open_loop(make_policy("dstep", deep), deep)
        got = exact_expected_latency(schedule.schedule, deep)
        if got > best + 1e-9:
            failures.append(
                f"lookahead schedule suboptimal at N={n_packets} p={p}: "
                f"{got} vs {best}"
            )
    for line in failures:
        print(f"FAIL: {line}")
    if failures:
        return EXIT_VERIFY
    print("oracle-check: all value and search cross-checks passed")
    return EXIT_OK


def _dump_schedules(policies: List[str], p: float, opts: dict, out) -> int:
    lines = []
    for name in policies:
        params = ProblemParams(
            block_size=opts["n"],
            erasure_prob=p,
            feedback_delay=None,
            search_depth=opts["depth"],
        )
        kwargs = {"period_l": opts["period_l"]} if name == "lowdelay" else {}
        policy = make_policy(name, params, **kwargs)
        if not policy.open_loop_for(params):
            raise ValueError(f"policy {name!r} has no fixed schedule to dump")
        if name == "brute":
            lines.append(f"{name},{policy.static.to_string()}")
        else:
            lines.append(f"{name},{compile_open_loop(policy, params).to_string()}")
    _emit(lines, out)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    opts = dict(_DEFAULTS)
    if args.config:
        try:
            opts.update(_load_config(args.config))
        except (OSError, ValueError) as exc:
            parser.error(str(exc))
    for key in _DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            opts[key] = flag
    for key in ("n", "depth", "period_l", "threshold", "trials", "seed"):
        opts[key] = int(opts[key])

    try:
        p_values = [float(x) for x in str(opts["p"]).split(",") if x.strip()]
        t_values = [_parse_t(x) for x in str(opts["t_feedback"]).split(",")]
        policies = [x.strip().lower() for x in str(opts["policy"]).split(",")]
    except ValueError as exc:
        parser.error(str(exc))
    if not p_values or not all(0.0 < p < 1.0 for p in p_values):
        parser.error("p values must lie in (0, 1)")
    for name in policies:
        if name not in POLICY_NAMES:
            parser.error(f"unknown policy {name!r}")

    mode = args.mode
    try:
        if mode == "oracle-check":
            return _oracle_check()
        if mode == "dump-schedule":
            return _dump_schedules(policies, p_values[0], opts, args.out)

        if mode == "single":
            cells = [_make_cell(policies[0], p_values[0], t_values[0], opts)]
        elif mode == "sweep-p":
            cells = [_make_cell(policies[0], p, t_values[0], opts) for p in p_values]
        elif mode == "sweep-t":
            cells = [_make_cell(policies[0], p_values[0], t, opts) for t in t_values]
        else:  # compare-policies
            cells = [
                _make_cell(name, p_values[0], t_values[0], opts) for name in policies
            ]

        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                rows = list(pool.map(_run_cell, cells))
        else:
            rows = [_run_cell(cell) for cell in cells]
        _emit([CSV_HEADER, CSV_COLUMNS] + rows, args.out)
        return EXIT_OK
    except (ValueError, RuntimeError, OSError) as exc:
        sys.stderr.write(f"fecsched: {exc}\n")
        return EXIT_RUNTIME


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
