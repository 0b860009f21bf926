"""Guess-and-double insertion with bounded migration.

The engine keeps, per machine, the jobs of earlier phases (old) apart from the
jobs committed in the current phase (new). A job taken from the priority queue
goes to the slowest machine that can take it without exceeding ``eta * T`` and
whose new load is still below ``T``. On the way, large old jobs of that
machine are re-labelled as new (a *shift*), and the migration potential
``gamma * p`` granted by the placed job is spent on pushing old jobs back into
the queue (an *eviction*). When no machine qualifies the guess ``T`` is
multiplied by ``xi`` and every job becomes old.

Presets ``AM1``, ``AM2`` and ``NONAM`` pick ``(gamma, xi, eta)`` so that every
machine load stays within ``(1 + eta) * T``.
"""
from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .core import (
    Event,
    Job,
    MigrationLedger,
    Rational,
    ScheduleState,
    ratio,
    rational,
)

EventHook = Callable[[Event, ScheduleState], None]


class EngineInvariantError(RuntimeError):
    """An internal invariant of the insertion procedure was broken (a bug)."""


class Mode(str, enum.Enum):
    AMORTIZED = "amortized"
    NON_AMORTIZED = "non-amortized"


class PresetKind(str, enum.Enum):
    AM1 = "am1"
    AM2 = "am2"
    NONAM = "nonam"


@dataclass(frozen=True)
class AlgoParams:
    """Parameters of one algorithm variant.

    ``ratio_target`` is ``(1 + eta) * xi`` and ``migration_budget`` is
    ``1 / (1 - gamma)``; both are exact. Parameters built with :func:`preset`
    carry ``guaranteed=True``; hand-assembled ones do not.
    """

    mode: Mode
    gamma: Rational
    xi: Rational
    eta: Rational
    epsilon: Optional[Rational] = None
    name: str = "custom"
    guaranteed: bool = False
    ratio_target: Rational = field(init=False)
    migration_budget: Rational = field(init=False)

    def __post_init__(self) -> None:
        mode = Mode(self.mode)
        gamma, xi, eta = rational(self.gamma), rational(self.xi), rational(self.eta)
        if not 0 < gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
        if not xi > 1:
            raise ValueError(f"xi must exceed 1, got {xi}")
        if not eta >= 1:
            raise ValueError(f"eta must be at least 1, got {eta}")
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "eta", eta)
        if self.epsilon is not None:
            object.__setattr__(self, "epsilon", rational(self.epsilon))
        object.__setattr__(self, "ratio_target", rational((1 + eta) * Fraction(xi)))
        object.__setattr__(self, "migration_budget", rational(1 / (1 - Fraction(gamma))))

    @property
    def amortized(self) -> bool:
        return self.mode is Mode.AMORTIZED

    @property
    def stated_migration_factor(self) -> Optional[Rational]:
        """Migration factor as stated for the preset: ``2/eps + 1`` or ``8/eps + 1``."""
        if not self.guaranteed or self.epsilon is None:
            return None
        coeff = 8 if self.name == PresetKind.NONAM.value else 2
        return rational(coeff / Fraction(self.epsilon) + 1)

    @property
    def stated_ratio(self) -> Optional[Rational]:
        """Headline competitive ratio of the preset (``3+eps``, ``4+eps``, ``8/3+eps``)."""
        if not self.guaranteed or self.epsilon is None:
            return None
        base = {"am1": Fraction(3), "am2": Fraction(8, 3), "nonam": Fraction(4)}[self.name]
        return rational(base + Fraction(self.epsilon))


NONAM_MAX_DENOMINATOR = 10**6


def preset(kind, epsilon) -> AlgoParams:
    kind = PresetKind(kind.lower() if isinstance(kind, str) else kind)
    eps = Fraction(rational(epsilon))
    if eps <= 0:
        raise ValueError(f"epsilon must be positive, got {eps}")
    if kind is PresetKind.AM1:
        gamma = 2 / (eps + 2)
        return AlgoParams(Mode.AMORTIZED, gamma, 1 / gamma + Fraction(1, 2), 1, eps, kind.value, True)
    if kind is PresetKind.AM2:
        gamma = 2 / (eps + 2)
        return AlgoParams(Mode.AMORTIZED, gamma, 1 / gamma + Fraction(1, 3), 1 / gamma, eps, kind.value, True)
    if eps > 8:
        raise ValueError(f"nonam requires epsilon in (0, 8], got {eps}")
    gamma = nonam_gamma(eps)
    return AlgoParams(Mode.NON_AMORTIZED, gamma, 2 / gamma, 1 / gamma, eps, kind.value, True)


def nonam_gamma(epsilon, max_denominator: int = NONAM_MAX_DENOMINATOR) -> Fraction:
    """Largest ``a/b <= 2 / (sqrt(9 + 2 eps) - 1)`` with ``b <= max_denominator``.

    The real root solves ``2 (1 + 1/g) / g = 4 + eps``. Membership is decided
    exactly: ``a/b <= 2/(sqrt(D) - 1)`` iff ``a^2 D <= (2b + a)^2``.
    """
    disc = 9 + 2 * Fraction(epsilon)
    dn, dd = disc.numerator, disc.denominator

    def at_most(a: int, b: int) -> bool:
        return a * a * dn <= (2 * b + a) ** 2 * dd

    return largest_fraction_at_most(at_most, max_denominator)


def largest_fraction_at_most(at_most: Callable[[int, int], bool], max_denominator: int) -> Fraction:
    """Stern-Brocot descent towards a positive real ``x`` given by ``at_most(a, b) == (a/b <= x)``."""
    a, b = 0, 1  # a/b <= x
    c, d = 1, 0  # c/d > x
    while b + d <= max_denominator:
        if at_most(a + c, b + d):
            k = _gallop(lambda k: b + k * d <= max_denominator and at_most(a + k * c, b + k * d))
            a, b = a + k * c, b + k * d
        else:
            k = _gallop(lambda k: d + k * b <= max_denominator and not at_most(c + k * a, d + k * b))
            c, d = c + k * a, d + k * b
    return Fraction(a, b)


def _gallop(pred: Callable[[int], bool]) -> int:
    """Largest ``k >= 1`` with ``pred(k)``; ``pred`` is monotone and ``pred(1)`` holds."""
    lo, hi = 1, 2
    while pred(hi):
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return lo


def is_eligible(params: AlgoParams, state: ScheduleState, job: Job, machine: int) -> bool:
    """``p / s_i <= eta * T``."""
    return ratio(job.size, state.speeds[machine]) <= params.eta * state.guess


def is_saturated(state: ScheduleState, machine: int) -> bool:
    """New load of the machine is at least ``T``; old load never counts."""
    t = state.guess
    return state.machines[machine].new_work * t.denominator >= t.numerator * state.speeds[machine]


def candidate_machines(params: AlgoParams, state: ScheduleState, job: Job) -> list:
    """Eligible, unsaturated machines, slowest first (larger index first on equal speed)."""
    return [
        i
        for i in range(state.m - 1, -1, -1)
        if is_eligible(params, state, job, i) and not is_saturated(state, i)
    ]


def new_state(machines) -> ScheduleState:
    return ScheduleState.empty(machines)


def insert_arrival(
    params: AlgoParams,
    state: ScheduleState,
    ledger: MigrationLedger,
    trace: Optional[list],
    job: Job,
    on_event: Optional[EventHook] = None,
) -> None:
    """Insert one arriving job, running the queue until it is empty.

    The first arrival sets ``T = p / s_1`` and then goes through the same loop
    as every later job. ``trace`` (if given) receives each :class:`Event`;
    ``on_event`` is called with the event and the live state right after the
    step it records.
    """
    if state.queue:
        raise EngineInvariantError("queue must be empty between arrivals")
    speeds = state.speeds
    m = len(speeds)
    machines = state.machines
    amortized = params.mode is Mode.AMORTIZED
    gamma = params.gamma
    eta_n, eta_d = params.eta.numerator, params.eta.denominator

    def emit(kind: str, job_id, machine) -> None:
        if trace is None and on_event is None:
            return
        ev = Event(kind, job_id, machine, state.guess)
        if trace is not None:
            trace.append(ev)
        if on_event is not None:
            on_event(ev, state)

    if state.guess is None:
        state.guess = Fraction(job.size) / speeds[0]
    state.arrived += 1
    ledger.open_arrival(job.size)
    emit("Arrival", job.id, None)

    queue = state.queue
    heapq.heappush(queue, (-job.size, job.id))
    evicted_from: dict = {}
    arrived_work = None
    cap_for = None

    while queue:
        negp, jid = heapq.heappop(queue)
        p = -negp
        doublings = 0
        while True:
            if cap_for is not state.guess:
                cap_for = state.guess
                cap = params.eta * cap_for
                cn, cd = cap.numerator, cap.denominator
            target = -1
            for i in range(m - 1, -1, -1):
                if p * cd <= cn * speeds[i] and not is_saturated(state, i):
                    target = i
                    break
            if target >= 0:
                ms = machines[target]
                if ms.old_jobs:
                    _shift(state, target, p, eta_n, eta_d, emit)
                if not is_saturated(state, target):
                    break
                continue
            if doublings:
                # Past this guess no machine can be saturated and machine 1 is eligible.
                if arrived_work is None:
                    arrived_work = sum((ms.work for ms in machines), 0) + sum(-q for q, _ in queue) + p
                limit = max(Fraction(p) / (params.eta * speeds[0]), Fraction(arrived_work) / speeds[-1])
                if state.guess > limit:
                    raise EngineInvariantError(
                        f"job {jid} could not be placed after {doublings} doublings (T={state.guess})"
                    )
            _double(params, state)
            doublings += 1
            emit("PhaseDoubled", None, None)

        ms = machines[target]
        pot = gamma * p
        if amortized and ms.potential:
            pot += ms.potential
        if ms.old_jobs:
            for oid, osize in sorted(ms.old_jobs.items(), key=_by_size_desc):
                if osize <= pot:
                    pot -= osize
                    ms.pop_old(oid)
                    heapq.heappush(queue, (-osize, oid))
                    ledger.charge(osize)
                    evicted_from[oid] = target
                    emit("Evict", oid, target)
        ms.add_new(jid, p)
        if amortized:
            ms.potential = rational(pot)
        source = evicted_from.pop(jid, None)
        if source is not None and source != target:
            ledger.charge_net(p)
        emit("Place", jid, target)


def _by_size_desc(item):
    return (-item[1], item[0])


def _shift(state: ScheduleState, i: int, p: Rational, eta_n: int, eta_d: int, emit) -> None:
    """Re-label old jobs with ``size >= p / eta`` on machine ``i`` as new."""
    ms = state.machines[i]
    big = [(jid, q) for jid, q in ms.old_jobs.items() if q * eta_n >= p * eta_d]
    if not big:
        return
    big.sort(key=_by_size_desc)
    s = state.speeds[i]
    for jid, q in big:
        ms.pop_old(jid)
        ms.add_new(jid, q)
        state.shifted_load[i] = rational(state.shifted_load[i] + Fraction(q) / s)
        emit("Shift", jid, i)


def _double(params: AlgoParams, state: ScheduleState) -> None:
    state.guess = state.guess * params.xi
    state.phase += 1
    amortized = params.mode is Mode.AMORTIZED
    for ms in state.machines:
        ms.age()
        if amortized:
            ms.potential = 0
    state.phase_start_old_load = [ratio(ms.old_work, s) for ms, s in zip(state.machines, state.speeds)]
    state.shifted_load = [0] * state.m


class OnlineScheduler:
    """Convenience wrapper bundling a state, its ledger and its trace."""

    def __init__(self, params: AlgoParams, machines, record_trace: bool = True, on_event: Optional[EventHook] = None):
        self.params = params
        self.state = new_state(machines)
        self.ledger = MigrationLedger()
        self.trace: Optional[list] = [] if record_trace else None
        self.on_event = on_event

    def insert(self, job: Job) -> None:
        insert_arrival(self.params, self.state, self.ledger, self.trace, job, self.on_event)

    def run(self, jobs) -> "OnlineScheduler":
        for job in jobs:
            self.insert(job)
        return self
