"""``usm`` command-line front end.

Exit codes: 0 success, 1 invariant violation, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from typing import Optional, Sequence

from .core import Instance, InstanceError, format_decimal, format_rational, parse_rational, ratio, write_trace
from .engine import EngineInvariantError, preset
from .generators import (
    AdversarialKind,
    Geometric,
    PowerOfTwo,
    UniformInt,
    gen_adversarial,
    gen_random,
)
from .harness import CLASSICAL, CheckConfig, InvariantViolation, OptMode, fuzz, run_simulation
from .oracle import DEFAULT_NODE_BUDGET, BudgetExhausted, opt_exact, opt_lower_bound

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2

ALGOS = ("am1", "am2", "nonam", CLASSICAL)
CHECKS = ("load-bound", "guess-soundness", "placement-soundness", "migration-budget", "termination", "ratio")
OPT_MODES = {"exact": OptMode.EXACT, "lb": OptMode.LOWER_BOUND, "off": OptMode.OFF}


class UsageError(Exception):
    pass


def _rational_arg(text: str):
    try:
        return parse_rational(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _size_dist(text: str):
    kind, _, rest = text.partition(":")
    try:
        if kind == "uniform":
            lo, hi = (int(x) for x in rest.split(":"))
            return UniformInt(lo, hi)
        if kind == "pow2":
            return PowerOfTwo(int(rest))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad size distribution {text!r}: {exc}") from None
    raise argparse.ArgumentTypeError(f"size distribution must be uniform:LO:HI or pow2:K, got {text!r}")


def _speed_dist(text: str):
    kind, _, rest = text.partition(":")
    try:
        if kind == "uniform":
            lo, hi = (int(x) for x in rest.split(":"))
            return UniformInt(lo, hi)
        if kind == "geometric":
            return Geometric(int(rest))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad speed distribution {text!r}: {exc}") from None
    raise argparse.ArgumentTypeError(f"speed distribution must be uniform:LO:HI or geometric:B, got {text!r}")


def _add_algo_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--algo", choices=ALGOS, required=required)
    p.add_argument("--epsilon", type=_rational_arg, help="accuracy parameter, e.g. 2 or 1/2 (not for classical)")


def _add_check_args(p: argparse.ArgumentParser, default_opt: str) -> None:
    p.add_argument("--check-opt", choices=sorted(OPT_MODES), default=default_opt,
                   help="offline optimum used by the checks (default: %(default)s)")
    p.add_argument("--disable", action="append", choices=CHECKS, default=[], metavar="CHECK",
                   help="turn one check off; repeatable (%s)" % ", ".join(CHECKS))
    p.add_argument("--max-doublings", type=int, default=64)
    p.add_argument("--exact-max-n", type=int, default=10, help="largest prefix solved exactly")
    p.add_argument("--exact-max-m", type=int, default=4, help="largest machine count solved exactly")
    p.add_argument("--node-budget", type=int, default=DEFAULT_NODE_BUDGET)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="usm", description="Online load balancing on related machines with bounded migration.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    run = sub.add_parser("run", help="simulate one instance and check invariants")
    _add_algo_args(run)
    run.add_argument("--instance", required=True)
    run.add_argument("--report", help="write the metrics report (JSON) here")
    run.add_argument("--trace", help="write the event trace (JSON lines) here")
    run.add_argument("--csv", help="write per-arrival columns arrival,max_load,opt_lb,ratio here")
    run.add_argument("--decimal", action="store_true", help="append approximate decimals to printed numbers")
    _add_check_args(run, "exact")

    gen = sub.add_parser("gen", help="write a random or adversarial instance")
    gen.add_argument("--kind", default="random", choices=["random"] + [k.value for k in AdversarialKind])
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--n", type=int, default=10)
    gen.add_argument("--m", type=int, default=3)
    gen.add_argument("--sizes", type=_size_dist, default=UniformInt(1, 2**10), help="uniform:LO:HI or pow2:K")
    gen.add_argument("--speeds", type=_speed_dist, default=UniformInt(1, 2**7), help="uniform:LO:HI or geometric:B")
    gen.add_argument("--machine-speeds", help="comma-separated speeds for saturation-ladder, fastest first")
    gen.add_argument("--scale", type=_rational_arg, default=1)
    _add_algo_args(gen, required=False)
    gen.add_argument("--out", help="output file (default: standard output)")

    opt = sub.add_parser("opt", help="print the offline optimum of an instance")
    opt.add_argument("--instance", required=True)
    opt.add_argument("--lb", action="store_true", help="print the cheap lower bound instead")
    opt.add_argument("--node-budget", type=int, default=DEFAULT_NODE_BUDGET)
    opt.add_argument("--decimal", action="store_true")

    fz = sub.add_parser("fuzz", help="run seeded random instances and print a JSON summary")
    _add_algo_args(fz)
    fz.add_argument("--trials", type=int, default=1000)
    fz.add_argument("--seed", type=int, default=0)
    fz.add_argument("--max-n", type=int, default=9)
    fz.add_argument("--max-m", type=int, default=3)
    fz.add_argument("--workers", type=int, default=1)
    _add_check_args(fz, "exact")
    return parser


def resolve_algo(algo: str, epsilon):
    if algo == CLASSICAL:
        if epsilon is not None:
            raise UsageError("--epsilon is not accepted for the classical algorithm")
        return CLASSICAL
    if epsilon is None:
        raise UsageError(f"--epsilon is required for {algo}")
    if epsilon <= 0:
        raise UsageError(f"--epsilon must be positive, got {format_rational(epsilon)}")
    if algo == "nonam" and epsilon > 8:
        raise UsageError(f"nonam requires --epsilon in (0, 8], got {format_rational(epsilon)}")
    return preset(algo, epsilon)


def check_config(args) -> CheckConfig:
    off = set(args.disable)
    mode = OPT_MODES[args.check_opt]
    exact = mode is OptMode.EXACT
    return CheckConfig(
        check_load_bound="load-bound" not in off,
        check_guess_soundness=exact and "guess-soundness" not in off,
        check_placement_soundness="placement-soundness" not in off,
        check_migration_budget="migration-budget" not in off,
        check_termination="termination" not in off,
        check_ratio=exact and "ratio" not in off,
        opt_mode=mode,
        max_doublings=args.max_doublings,
        exact_max_n=args.exact_max_n,
        exact_max_m=args.exact_max_m,
        node_budget=args.node_budget,
    )


def _num(x, decimal: bool) -> str:
    if x is None:
        return "n/a"
    text = format_rational(x)
    return f"{text} (~{format_decimal(x)})" if decimal else text


def _write_report(report, path: Optional[str]) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
            fh.write("\n")


def _write_csv(report, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["arrival", "max_load", "opt_lb", "ratio"])
        for a in report.per_arrival:
            w.writerow([
                a.arrival,
                format_rational(a.max_load),
                "" if a.opt_lb is None else format_rational(a.opt_lb),
                "" if a.observed_ratio is None else format_rational(a.observed_ratio),
            ])


def summary_line(algo, report, decimal: bool = False) -> str:
    if algo == CLASSICAL:
        target, budget = 8, 0
    else:
        target, budget = algo.ratio_target, algo.migration_budget
    observed = report.final_ratio
    basis = "exact"
    if observed is None and report.per_arrival and report.per_arrival[-1].opt_lb is not None:
        last = report.per_arrival[-1]
        observed, basis = ratio(last.max_load, last.opt_lb), "lower-bound"
    elif observed is None:
        basis = "off"
    migration = ratio(report.cumulative_migrated, report.cumulative_arrived) if report.cumulative_arrived else 0
    return (
        f"ratio={_num(observed, decimal)} target={_num(target, decimal)} "
        f"migration={_num(migration, decimal)} budget={_num(budget, decimal)} opt={basis}"
    )


def cmd_run(args) -> int:
    algo = resolve_algo(args.algo, args.epsilon)
    checks = check_config(args)
    instance = _load(args.instance)
    try:
        report, trace = run_simulation(algo, instance, checks, record_trace=args.trace is not None)
    except InvariantViolation as exc:
        _write_report(exc.report, args.report)
        if args.trace and exc.trace is not None:
            write_trace(exc.trace, args.trace)
        print(f"usm: invariant violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except BudgetExhausted as exc:
        raise UsageError(f"{exc}; rerun with --check-opt lb") from None
    _write_report(report, args.report)
    if args.trace:
        write_trace(trace, args.trace)
    if args.csv:
        _write_csv(report, args.csv)
    print(summary_line(algo, report, args.decimal))
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.kind == "random":
        instance = gen_random(args.seed, args.n, args.m, args.sizes, args.speeds)
    else:
        if args.algo is None or args.algo == CLASSICAL:
            raise UsageError(f"--kind {args.kind} needs --algo am1, am2 or nonam with --epsilon")
        params = resolve_algo(args.algo, args.epsilon)
        speeds = None
        if args.machine_speeds:
            try:
                speeds = tuple(parse_rational(s) for s in args.machine_speeds.split(","))
            except ValueError as exc:
                raise UsageError(f"--machine-speeds: {exc}") from None
        instance = gen_adversarial(args.kind, params, args.scale, speeds)
    if args.out:
        instance.dump(args.out)
    else:
        print(instance.to_json())
    return EXIT_OK


def cmd_opt(args) -> int:
    instance = _load(args.instance)
    if not instance.jobs:
        raise UsageError("instance has no jobs")
    if args.lb:
        value = opt_lower_bound(instance.machines, instance.jobs)
    else:
        try:
            value = opt_exact(instance.machines, instance.jobs, args.node_budget).value
        except BudgetExhausted as exc:
            raise UsageError(f"{exc}; use --lb for the lower bound") from None
    print(_num(value, args.decimal))
    return EXIT_OK


def cmd_fuzz(args) -> int:
    algo = resolve_algo(args.algo, args.epsilon)
    checks = check_config(args)
    try:
        summary = fuzz(algo, args.trials, args.seed, args.max_n, args.max_m, checks, opt_cache={}, workers=args.workers)
    except BudgetExhausted as exc:
        raise UsageError(f"{exc}; rerun with --check-opt lb") from None
    print(json.dumps(summary.to_dict(), indent=2))
    if summary.violations:
        print(f"usm: {len(summary.violations)} trial(s) violated an invariant", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def _load(path: str) -> Instance:
    try:
        return Instance.load(path)
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror or exc}") from None
    except InstanceError as exc:
        raise UsageError(f"{path}: {exc}") from None


COMMANDS = {"run": cmd_run, "gen": cmd_gen, "opt": cmd_opt, "fuzz": cmd_fuzz}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return COMMANDS[args.subcommand](args)
    except (UsageError, ValueError) as exc:
        print(f"usm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EngineInvariantError as exc:
        print(f"usm: engine invariant broken: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
