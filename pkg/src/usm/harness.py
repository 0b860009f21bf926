"""Simulation driver with per-arrival invariant checks, and a seeded fuzzer.

The checks re-implement the eligibility and saturation predicates from the
raw machine state instead of calling into :mod:`usm.engine`, so a broken
engine predicate cannot vouch for itself.
"""
from __future__ import annotations

import enum
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

from . import engine as _engine
from .baseline import BaselineState, baseline_insert
from .core import (
    Event,
    Instance,
    MigrationLedger,
    Rational,
    ScheduleState,
    format_rational,
    max_load,
    ratio,
)
from .engine import AlgoParams, Mode
from .generators import fuzz_instance
from .oracle import DEFAULT_NODE_BUDGET, opt_exact, opt_lower_bound

SCHEMA_VERSION = 1
CLASSICAL = "classical"

Algo = Union[AlgoParams, str]


class OptMode(str, enum.Enum):
    EXACT = "exact"
    LOWER_BOUND = "lower-bound"
    OFF = "off"


@dataclass(frozen=True)
class CheckConfig:
    check_load_bound: bool = False
    check_guess_soundness: bool = False
    check_placement_soundness: bool = False
    check_migration_budget: bool = False
    check_termination: bool = False
    check_ratio: bool = False
    opt_mode: OptMode = OptMode.OFF
    max_doublings: int = 64
    exact_max_n: int = 10
    exact_max_m: int = 4
    node_budget: int = DEFAULT_NODE_BUDGET

    def __post_init__(self) -> None:
        object.__setattr__(self, "opt_mode", OptMode(self.opt_mode))
        if (self.check_guess_soundness or self.check_ratio) and self.opt_mode is not OptMode.EXACT:
            raise ValueError("guess-soundness and ratio checks need opt_mode='exact'")

    @classmethod
    def all(cls, opt_mode: OptMode = OptMode.EXACT, **kw) -> "CheckConfig":
        exact = OptMode(opt_mode) is OptMode.EXACT
        return cls(True, exact, True, True, True, exact, opt_mode, **kw)

    @classmethod
    def structural(cls, **kw) -> "CheckConfig":
        """Every check that needs no offline optimum."""
        return cls(True, False, True, True, True, False, OptMode.OFF, **kw)


class InvariantViolation(Exception):
    def __init__(self, which: str, arrival: int, machine: Optional[int], details: str):
        super().__init__(f"{which} violated at arrival {arrival}" + (f", machine {machine + 1}" if machine is not None else "") + f": {details}")
        self.which = which
        self.arrival = arrival
        self.machine = machine
        self.details = details
        self.report: Optional["MetricsReport"] = None
        self.trace: Optional[list] = None

    def to_dict(self) -> dict:
        return {
            "which": self.which,
            "arrival": self.arrival,
            "machine": None if self.machine is None else self.machine + 1,
            "details": self.details,
        }


def _fmt(x) -> Optional[str]:
    return None if x is None else format_rational(x)


@dataclass
class ArrivalMetrics:
    arrival: int
    job: int
    size: Rational
    max_load: Rational
    guess: Rational
    opt: Optional[Rational]
    opt_lb: Optional[Rational]
    observed_ratio: Optional[Rational]
    migrated: Rational
    net_migrated: Rational
    cumulative_migration_ratio: Rational

    def to_dict(self) -> dict:
        return {
            "arrival": self.arrival,
            "job": self.job,
            "size": _fmt(self.size),
            "max_load": _fmt(self.max_load),
            "T": _fmt(self.guess),
            "opt": _fmt(self.opt),
            "opt_lb": _fmt(self.opt_lb),
            "ratio": _fmt(self.observed_ratio),
            "migrated": _fmt(self.migrated),
            "net_migrated": _fmt(self.net_migrated),
            "cumulative_migration_ratio": _fmt(self.cumulative_migration_ratio),
        }


@dataclass
class MetricsReport:
    algo: str
    params: dict
    opt_mode: str
    opt_exact_everywhere: bool
    per_arrival: list = field(default_factory=list)
    final_loads: list = field(default_factory=list)
    final_ratio: Optional[Rational] = None
    max_ratio: Optional[Rational] = None
    max_ratio_lb: Optional[Rational] = None
    doublings: int = 0
    cumulative_arrived: Rational = 0
    cumulative_migrated: Rational = 0
    cumulative_net_migrated: Rational = 0
    violation: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "algo": self.algo,
            "params": self.params,
            "opt_mode": self.opt_mode,
            "opt_exact_everywhere": self.opt_exact_everywhere,
            "doublings": self.doublings,
            "final_loads": [_fmt(x) for x in self.final_loads],
            "final_ratio": _fmt(self.final_ratio),
            "max_ratio": _fmt(self.max_ratio),
            "max_ratio_vs_lower_bound": _fmt(self.max_ratio_lb),
            "migration": {
                "arrived": _fmt(self.cumulative_arrived),
                "migrated": _fmt(self.cumulative_migrated),
                "net_migrated": _fmt(self.cumulative_net_migrated),
            },
            "violation": self.violation,
            "per_arrival": [a.to_dict() for a in self.per_arrival],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def algo_name(algo: Algo) -> str:
    return CLASSICAL if algo == CLASSICAL else algo.name


def params_dict(algo: Algo) -> dict:
    if algo == CLASSICAL:
        return {"ratio_target": "8"}
    out = {
        "mode": algo.mode.value,
        "gamma": _fmt(algo.gamma),
        "xi": _fmt(algo.xi),
        "eta": _fmt(algo.eta),
        "epsilon": _fmt(algo.epsilon),
        "ratio_target": _fmt(algo.ratio_target),
        "migration_budget": _fmt(algo.migration_budget),
        "guaranteed": algo.guaranteed,
    }
    if algo.stated_migration_factor is not None:
        out["stated_migration_factor"] = _fmt(algo.stated_migration_factor)
    return out


def _saturated(state: ScheduleState, i: int) -> bool:
    t = state.guess
    return state.machines[i].new_work * t.denominator >= t.numerator * state.speeds[i]


def _fits(size, speed, cap: Fraction) -> bool:
    """``size / speed <= cap``."""
    return size * cap.denominator <= cap.numerator * speed


class _EngineChecks:
    def __init__(self, params: AlgoParams, checks: CheckConfig, instance: Instance):
        self.params = params
        self.checks = checks
        self.sizes = {j.id: j.size for j in instance.jobs}
        self.arrival = 0
        self.evicted: set = set()
        self.doublings = 0
        self.stated = params.stated_migration_factor
        self._caps_for = None

    def fail(self, which, machine, details):
        raise InvariantViolation(which, self.arrival, machine, details)

    def _caps(self, t):
        """``(eta*T, (1+eta)*T)``, recomputed only when the guess changes."""
        if self._caps_for is not t:
            self._caps_for = t
            self._cap_values = (self.params.eta * t, (1 + self.params.eta) * t)
        return self._cap_values

    def on_event(self, ev: Event, state: ScheduleState) -> None:
        c = self.checks
        kind = ev.kind
        if kind == "Arrival":
            self.arrival += 1
            self.evicted = set()
        elif kind == "Place":
            i = ev.machine
            p = self.sizes[ev.job_id]
            t = state.guess
            cap, bound = self._caps(t)
            if c.check_placement_soundness:
                if not _fits(p, state.speeds[i], cap):
                    self.fail("placement-soundness", i, f"job {ev.job_id} placed on a machine it is not eta-eligible for")
                if (state.machines[i].new_work - p) * t.denominator >= t.numerator * state.speeds[i]:
                    self.fail("placement-soundness", i, f"job {ev.job_id} placed on a saturated machine")
                self._slower_saturated(state, i, p, cap, ev.job_id, "placed")
            if c.check_load_bound:
                for k, ms in enumerate(state.machines):
                    if not _fits(ms.new_work, state.speeds[k], bound):
                        self.fail("new-load-bound", k, f"new load {format_rational(ratio(ms.new_work, state.speeds[k]))} > (1+eta)T = {format_rational(bound)}")
        elif kind == "Shift":
            if c.check_placement_soundness:
                self._slower_saturated(state, ev.machine, self.sizes[ev.job_id], state.guess, ev.job_id, "shifted")
        elif kind == "Evict":
            if c.check_termination:
                if ev.job_id in self.evicted:
                    self.fail("termination", ev.machine, f"job {ev.job_id} evicted to the queue twice in one insertion run")
                self.evicted.add(ev.job_id)
        elif kind == "PhaseDoubled":
            self.doublings += 1
            if c.check_termination and self.doublings > c.max_doublings:
                self.fail("termination", None, f"more than {c.max_doublings} doublings")

    def _slower_saturated(self, state, i, size, cap, job_id, verb):
        # "slower" follows the candidate order: larger index means slower or equal speed.
        speeds = state.speeds
        for k in range(i + 1, state.m):
            if _fits(size, speeds[k], cap) and not _saturated(state, k):
                self.fail(
                    "placement-soundness",
                    i,
                    f"job {job_id} {verb} on machine {i + 1} while slower eligible machine {k + 1} is unsaturated",
                )

    def after_arrival(self, state: ScheduleState, ledger: MigrationLedger, job, opt) -> None:
        c = self.checks
        params = self.params
        t = state.guess
        if c.check_load_bound:
            if state.queue:
                self.fail("partition", None, "queue not empty after insertion run")
            placed = state.assignment()
            if len(placed) != self.arrival or set(placed) != set(range(1, self.arrival + 1)):
                self.fail("partition", None, "arrived jobs and scheduled jobs differ")
            bound = self._caps(t)[1]
            bn, bd = bound.numerator, bound.denominator
            old_cap = bound / params.xi
            for k, ms in enumerate(state.machines):
                s = state.speeds[k]
                if ms.work * bd > bn * s:
                    self.fail("load-bound", k, f"load {format_rational(ratio(ms.work, s))} > (1+eta)T = {format_rational(bound)}")
                if ms.old_work != sum(ms.old_jobs.values(), 0) or ms.new_work != sum(ms.new_jobs.values(), 0):
                    self.fail("bookkeeping", k, "incremental load differs from the load recomputed from job sets")
                start = state.phase_start_old_load[k]
                if ms.old_work * start.denominator > start.numerator * s or start > old_cap:
                    self.fail(
                        "old-load-bound",
                        k,
                        f"old load {format_rational(ratio(ms.old_work, s))}, phase-start old load {format_rational(start)}, cap {format_rational(old_cap)}",
                    )
        if c.check_migration_budget:
            stated = self.stated
            if params.mode is Mode.NON_AMORTIZED:
                moved, base, label = ledger.per_arrival_migrated[-1], job.size, "per-arrival"
                if any(ms.potential for ms in state.machines):
                    self.fail("mode-consistency", None, "non-amortized run kept a migration potential")
            else:
                moved, base, label = ledger.cumulative_migrated, ledger.cumulative_arrived, "cumulative"
            if moved > base * params.migration_budget:
                self.fail("migration-budget", None, f"{label} migrated {format_rational(moved)} > {format_rational(base)} / (1 - gamma)")
            if stated is not None and moved > base * stated:
                self.fail("migration-budget", None, f"{label} migrated {format_rational(moved)} > {format_rational(base)} * stated factor {format_rational(stated)}")
        if opt is not None:
            if c.check_guess_soundness and not t / params.xi < opt:
                self.fail("guess-soundness", None, f"T/xi = {format_rational(t / params.xi)} is not below OPT = {format_rational(opt)}")
            if c.check_ratio and max_load(state) > params.ratio_target * opt:
                self.fail("competitive-ratio", None, f"max load {format_rational(max_load(state))} > {format_rational(params.ratio_target)} * OPT {format_rational(opt)}")


class _BaselineChecks:
    def __init__(self, checks: CheckConfig):
        self.checks = checks
        self.arrival = 0
        self.doublings = 0

    def fail(self, which, machine, details):
        raise InvariantViolation(which, self.arrival, machine, details)

    def on_event(self, ev: Event, state: BaselineState) -> None:
        if ev.kind == "Arrival":
            self.arrival += 1
        elif ev.kind == "Place" and self.checks.check_load_bound:
            i = ev.machine
            if not _fits(state.phase_work[i], state.speeds[i], 2 * state.guess):
                self.fail("phase-load-bound", i, "phase load exceeds 2T")
        elif ev.kind == "PhaseDoubled":
            self.doublings += 1
            if self.checks.check_termination and self.doublings > self.checks.max_doublings:
                self.fail("termination", None, f"more than {self.checks.max_doublings} doublings")

    def after_arrival(self, state: BaselineState, opt) -> None:
        c = self.checks
        t = state.guess
        if c.check_load_bound:
            cap = 4 * t
            for i, w in enumerate(state.total_work):
                if w * cap.denominator >= cap.numerator * state.speeds[i]:
                    self.fail("total-load-bound", i, f"total load {format_rational(ratio(w, state.speeds[i]))} is not below 4T = {format_rational(cap)}")
        if opt is not None:
            if c.check_guess_soundness and not t / 2 < opt:
                self.fail("guess-soundness", None, f"T/2 = {format_rational(t / 2)} is not below OPT = {format_rational(opt)}")
            if c.check_ratio and not state.max_load() < 8 * opt:
                self.fail("competitive-ratio", None, f"max load {format_rational(state.max_load())} is not below 8 * OPT {format_rational(opt)}")


def _opt_key(speeds, jobs) -> tuple:
    return (tuple(speeds), tuple(sorted(j.size for j in jobs)))


def prefix_opt(instance: Instance, k: int, checks: CheckConfig, cache: Optional[dict] = None):
    """``(opt, lower_bound)`` for the first ``k`` jobs; ``opt`` is None when not computed exactly."""
    if checks.opt_mode is OptMode.OFF:
        return None, None
    jobs = instance.jobs[:k]
    lb = opt_lower_bound(instance.machines, jobs)
    if checks.opt_mode is not OptMode.EXACT or k > checks.exact_max_n or instance.m > checks.exact_max_m:
        return None, lb
    key = _opt_key(instance.speeds, jobs)
    if cache is not None and key in cache:
        return cache[key], lb
    opt = opt_exact(instance.machines, jobs, checks.node_budget).value
    if cache is not None:
        cache[key] = opt
    return opt, lb


def run_simulation(
    algo: Algo,
    instance: Instance,
    checks: CheckConfig = CheckConfig(),
    record_trace: bool = True,
    opt_cache: Optional[dict] = None,
):
    """Feed the instance job by job, checking invariants after every arrival.

    Returns ``(MetricsReport, trace)``. On the first failed check an
    :class:`InvariantViolation` is raised carrying the partial report and trace.
    """
    classical = algo == CLASSICAL
    trace: Optional[list] = [] if record_trace else None
    exact_everywhere = (
        checks.opt_mode is OptMode.EXACT and instance.n <= checks.exact_max_n and instance.m <= checks.exact_max_m
    )
    report = MetricsReport(
        algo=algo_name(algo),
        params=params_dict(algo),
        opt_mode=checks.opt_mode.value,
        opt_exact_everywhere=exact_everywhere,
    )
    if classical:
        state = BaselineState.empty(instance.machines)
        checker = _BaselineChecks(checks)
        ledger = None
    else:
        state = _engine.new_state(instance.machines)
        checker = _EngineChecks(algo, checks, instance)
        ledger = MigrationLedger()

    try:
        for k, job in enumerate(instance.jobs, start=1):
            if classical:
                baseline_insert(state, job, trace, checker.on_event)
            else:
                _engine.insert_arrival(algo, state, ledger, trace, job, checker.on_event)
            opt, lb = prefix_opt(instance, k, checks, opt_cache)
            if classical:
                checker.after_arrival(state, opt)
                top = state.max_load()
                migrated = net = 0
                cumulative = 0
            else:
                checker.after_arrival(state, ledger, job, opt)
                top = max_load(state)
                migrated = ledger.per_arrival_migrated[-1]
                net = ledger.per_arrival_net_migrated[-1]
                cumulative = ratio(ledger.cumulative_migrated, ledger.cumulative_arrived)
            observed = ratio(top, opt) if opt is not None else None
            report.per_arrival.append(
                ArrivalMetrics(k, job.id, job.size, top, state.guess, opt, lb, observed, migrated, net, cumulative)
            )
            if observed is not None and (report.max_ratio is None or observed > report.max_ratio):
                report.max_ratio = observed
            if lb is not None:
                r_lb = ratio(top, lb)
                if report.max_ratio_lb is None or r_lb > report.max_ratio_lb:
                    report.max_ratio_lb = r_lb
    except InvariantViolation as exc:
        report.violation = exc.to_dict()
        _finish(report, state, ledger, checker, classical)
        exc.report = report
        exc.trace = trace
        raise
    _finish(report, state, ledger, checker, classical)
    return report, trace


def _finish(report, state, ledger, checker, classical) -> None:
    if classical:
        report.final_loads = state.total_load
    else:
        report.final_loads = state.loads()
        report.cumulative_arrived = ledger.cumulative_arrived
        report.cumulative_migrated = ledger.cumulative_migrated
        report.cumulative_net_migrated = ledger.cumulative_net_migrated
    report.doublings = checker.doublings
    if report.per_arrival:
        report.final_ratio = report.per_arrival[-1].observed_ratio


@dataclass
class FuzzSummary:
    algo: str
    trials: int
    seed: int
    max_n: int
    max_m: int
    violations: list = field(default_factory=list)
    max_observed_ratio: Optional[Rational] = None
    max_ratio_is_exact: bool = True
    worst_trial: Optional[int] = None
    arrivals: int = 0

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "algo": self.algo,
            "trials": self.trials,
            "seed": self.seed,
            "max_n": self.max_n,
            "max_m": self.max_m,
            "arrivals": self.arrivals,
            "violations": self.violations,
            "max_observed_ratio": _fmt(self.max_observed_ratio),
            "max_ratio_is_exact": self.max_ratio_is_exact,
            "worst_trial": self.worst_trial,
        }


def _fuzz_trial(args):
    algo, seed, trial, max_n, max_m, checks, opt_cache = args
    instance = fuzz_instance(seed, trial, max_n, max_m)
    try:
        report, _ = run_simulation(algo, instance, checks, record_trace=False, opt_cache=opt_cache)
    except InvariantViolation as exc:
        return trial, instance, exc.report, exc.to_dict()
    return trial, instance, report, None


def fuzz(
    algo: Algo,
    trials: int,
    seed: int,
    max_n: int,
    max_m: int,
    checks: CheckConfig,
    opt_cache: Optional[dict] = None,
    workers: int = 1,
) -> FuzzSummary:
    """Run ``trials`` seeded random instances; violations are collected, not raised."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if max_n < 1 or max_m < 1:
        raise ValueError("max_n and max_m must be at least 1")
    summary = FuzzSummary(algo_name(algo), trials, seed, max_n, max_m)
    if workers > 1:
        jobs = [(algo, seed, t, max_n, max_m, checks, None) for t in range(trials)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fuzz_trial, jobs, chunksize=max(1, trials // (workers * 8))))
    else:
        results = (_fuzz_trial((algo, seed, t, max_n, max_m, checks, opt_cache)) for t in range(trials))
    for trial, instance, report, violation in results:
        summary.arrivals += len(report.per_arrival)
        if violation is not None:
            summary.violations.append({"trial": trial, "instance": instance.to_dict(), **violation})
        exact = report.max_ratio is not None and report.opt_exact_everywhere
        candidate = report.max_ratio if exact else report.max_ratio_lb
        if candidate is None:
            continue
        if not exact:
            summary.max_ratio_is_exact = False
        if summary.max_observed_ratio is None or candidate > summary.max_observed_ratio:
            summary.max_observed_ratio = candidate
            summary.worst_trial = trial
    return summary
