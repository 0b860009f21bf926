"""Classical migration-free doubling algorithm (8-competitive comparator).

Within a phase each job goes to the slowest machine whose phase load stays at
most ``2T``; load from earlier phases is ignored. If no machine admits the
job, ``T`` is doubled and a new phase starts.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .core import Event, Job, MachineSet, Rational, ratio


@dataclass
class BaselineState:
    speeds: tuple
    guess: Optional[Fraction] = None
    phase_work: list = field(default_factory=list)
    total_work: list = field(default_factory=list)
    assignments: dict = field(default_factory=dict)
    phase: int = 0

    @classmethod
    def empty(cls, machines) -> "BaselineState":
        speeds = tuple(machines.speeds if isinstance(machines, MachineSet) else MachineSet(tuple(machines)).speeds)
        return cls(speeds=speeds, phase_work=[0] * len(speeds), total_work=[0] * len(speeds))

    @property
    def m(self) -> int:
        return len(self.speeds)

    @property
    def phase_load(self) -> list:
        return [ratio(w, s) for w, s in zip(self.phase_work, self.speeds)]

    @property
    def total_load(self) -> list:
        return [ratio(w, s) for w, s in zip(self.total_work, self.speeds)]

    def max_load(self) -> Rational:
        return max(self.total_load, default=0)


def baseline_insert(
    state: BaselineState,
    job: Job,
    trace: Optional[list] = None,
    on_event: Optional[Callable[[Event, BaselineState], None]] = None,
) -> int:
    """Place ``job`` and return the chosen 0-based machine index."""
    speeds = state.speeds

    def emit(kind, job_id, machine):
        if trace is None and on_event is None:
            return
        ev = Event(kind, job_id, machine, state.guess)
        if trace is not None:
            trace.append(ev)
        if on_event is not None:
            on_event(ev, state)

    if state.guess is None:
        state.guess = Fraction(job.size) / speeds[0]
    emit("Arrival", job.id, None)
    p = job.size
    while True:
        bound = 2 * state.guess
        bn, bd = bound.numerator, bound.denominator
        for i in range(state.m - 1, -1, -1):
            if (state.phase_work[i] + p) * bd <= bn * speeds[i]:
                state.phase_work[i] += p
                state.total_work[i] += p
                state.assignments[job.id] = i
                emit("Place", job.id, i)
                return i
        state.guess = state.guess * 2
        state.phase += 1
        state.phase_work = [0] * state.m
        emit("PhaseDoubled", None, None)
