"""Exact-arithmetic domain types shared by the engine, baseline, oracle and harness.

Every numeric quantity is a rational number. Integral values are kept as plain
``int`` and everything else as :class:`fractions.Fraction`; both satisfy
``numbers.Rational`` and compare exactly with each other. Keeping the integral
case as ``int`` makes the cross-multiplied comparisons in the hot loops run on
machine integers.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Literal, Optional, Sequence, Union

Rational = Union[int, Fraction]

_RATIONAL_RE = re.compile(r"^\s*(-?\d+)\s*(?:/\s*(\d+)\s*)?$")


class InstanceError(ValueError):
    """Raised for malformed or inconsistent instance data."""


def rational(value) -> Rational:
    """Normalise ``value`` to an exact rational; integral results become ``int``."""
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, int):
        return value
    if isinstance(value, Fraction):
        return value.numerator if value.denominator == 1 else value
    if isinstance(value, str):
        return parse_rational(value)
    if isinstance(value, float):
        raise TypeError("floats are not accepted; pass an int, Fraction or 'num/den' string")
    q = Fraction(value)
    return q.numerator if q.denominator == 1 else q


def parse_rational(text: str) -> Rational:
    """Parse ``"7"`` or ``"9/2"``. Decimal and exponent notation is rejected."""
    m = _RATIONAL_RE.match(text)
    if m is None:
        raise ValueError(f"expected an integer or 'num/den' string, got {text!r}")
    num = int(m.group(1))
    if m.group(2) is None:
        return num
    den = int(m.group(2))
    if den == 0:
        raise ValueError(f"zero denominator in {text!r}")
    return rational(Fraction(num, den))


def format_rational(value: Rational) -> str:
    """Canonical string form: ``"3"`` or ``"25/4"`` (lowest terms)."""
    return str(Fraction(value))


def format_decimal(value: Rational, digits: int = 6) -> str:
    return f"{float(Fraction(value)):.{digits}f}"


def ratio(num: Rational, den: Rational) -> Rational:
    """Exact quotient ``num / den`` normalised with :func:`rational`."""
    return rational(Fraction(num) / den)


@dataclass(frozen=True, slots=True)
class Job:
    id: int
    size: Rational

    def __post_init__(self) -> None:
        object.__setattr__(self, "size", rational(self.size))
        if self.size <= 0:
            raise InstanceError(f"job {self.id}: size must be positive, got {self.size}")


@dataclass(frozen=True)
class MachineSet:
    """Machine speeds, fastest first."""

    speeds: tuple

    def __post_init__(self) -> None:
        speeds = tuple(rational(s) for s in self.speeds)
        object.__setattr__(self, "speeds", speeds)
        if not speeds:
            raise InstanceError("at least one machine is required")
        for i, s in enumerate(speeds):
            if s <= 0:
                raise InstanceError(f"speeds[{i}]: speed must be positive, got {s}")
        for i in range(1, len(speeds)):
            if speeds[i] > speeds[i - 1]:
                raise InstanceError(
                    f"speeds[{i}]: speeds must be non-increasing "
                    f"({format_rational(speeds[i - 1])} then {format_rational(speeds[i])})"
                )

    def __len__(self) -> int:
        return len(self.speeds)

    def __getitem__(self, i: int) -> Rational:
        return self.speeds[i]

    def __iter__(self):
        return iter(self.speeds)


@dataclass(frozen=True)
class Instance:
    machines: MachineSet
    jobs: tuple

    def __post_init__(self) -> None:
        if not isinstance(self.machines, MachineSet):
            object.__setattr__(self, "machines", MachineSet(tuple(self.machines)))
        object.__setattr__(self, "jobs", tuple(self.jobs))
        for k, job in enumerate(self.jobs, start=1):
            if job.id != k:
                raise InstanceError(f"jobs[{k - 1}]: job ids must be 1..n in arrival order, got {job.id}")

    @classmethod
    def from_values(cls, speeds: Iterable, sizes: Iterable) -> "Instance":
        jobs = [Job(k, rational(p)) for k, p in enumerate(sizes, start=1)]
        return cls(MachineSet(tuple(speeds)), tuple(jobs))

    @property
    def speeds(self) -> tuple:
        return self.machines.speeds

    @property
    def n(self) -> int:
        return len(self.jobs)

    @property
    def m(self) -> int:
        return len(self.machines)

    def prefix(self, k: int) -> "Instance":
        return Instance(self.machines, self.jobs[:k])

    def scaled(self, factor: Rational) -> "Instance":
        return Instance.from_values(self.speeds, (job.size * factor for job in self.jobs))

    def to_dict(self) -> dict:
        return {
            "speeds": [format_rational(s) for s in self.speeds],
            "jobs": [format_rational(j.size) for j in self.jobs],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data) -> "Instance":
        if not isinstance(data, dict):
            raise InstanceError("instance must be a JSON object with 'speeds' and 'jobs'")
        for key in ("speeds", "jobs"):
            if key not in data:
                raise InstanceError(f"missing field {key!r}")
            if not isinstance(data[key], list):
                raise InstanceError(f"field {key!r} must be an array")
        speeds = [_field_rational(data["speeds"], "speeds", i) for i in range(len(data["speeds"]))]
        sizes = [_field_rational(data["jobs"], "jobs", i) for i in range(len(data["jobs"]))]
        for i, p in enumerate(sizes):
            if p <= 0:
                raise InstanceError(f"jobs[{i}]: size must be positive, got {format_rational(p)}")
        return cls.from_values(speeds, sizes)

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InstanceError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "Instance":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")


def _field_rational(values: list, name: str, i: int) -> Rational:
    raw = values[i]
    if isinstance(raw, bool) or not isinstance(raw, (str, int)):
        raise InstanceError(f"{name}[{i}]: expected a string holding an integer or 'num/den', got {raw!r}")
    try:
        return rational(raw) if isinstance(raw, int) else parse_rational(raw)
    except ValueError as exc:
        raise InstanceError(f"{name}[{i}]: {exc}") from None


@dataclass
class MachineState:
    """Jobs on one machine split into old (earlier phases) and new (current phase).

    ``old_work`` and ``new_work`` are the incremental size sums of the two
    partitions; loads are obtained by dividing by the machine speed.
    """

    old_jobs: dict = field(default_factory=dict)
    new_jobs: dict = field(default_factory=dict)
    old_work: Rational = 0
    new_work: Rational = 0
    potential: Rational = 0

    def add_old(self, job_id: int, size: Rational) -> None:
        self.old_jobs[job_id] = size
        self.old_work += size

    def add_new(self, job_id: int, size: Rational) -> None:
        self.new_jobs[job_id] = size
        self.new_work += size

    def pop_old(self, job_id: int) -> Rational:
        size = self.old_jobs.pop(job_id)
        self.old_work -= size
        return size

    def age(self) -> None:
        """Turn every new job into an old one."""
        if self.new_jobs:
            self.old_jobs.update(self.new_jobs)
            self.old_work += self.new_work
            self.new_jobs = {}
            self.new_work = 0

    @property
    def work(self) -> Rational:
        return self.old_work + self.new_work


@dataclass
class ScheduleState:
    speeds: tuple
    machines: list
    guess: Optional[Fraction] = None
    queue: list = field(default_factory=list)
    phase: int = 0
    phase_start_old_load: list = field(default_factory=list)
    shifted_load: list = field(default_factory=list)
    arrived: int = 0

    @classmethod
    def empty(cls, machines: Union[MachineSet, Sequence]) -> "ScheduleState":
        speeds = tuple(machines.speeds if isinstance(machines, MachineSet) else MachineSet(tuple(machines)).speeds)
        m = len(speeds)
        return cls(
            speeds=speeds,
            machines=[MachineState() for _ in range(m)],
            phase_start_old_load=[0] * m,
            shifted_load=[0] * m,
        )

    @property
    def m(self) -> int:
        return len(self.speeds)

    @property
    def virgin(self) -> bool:
        return self.guess is None

    def assignment(self) -> dict:
        """Map job id to its current machine index."""
        out = {}
        for i, ms in enumerate(self.machines):
            for jid in ms.old_jobs:
                out[jid] = i
            for jid in ms.new_jobs:
                out[jid] = i
        return out

    def loads(self) -> list:
        return [load_of(self, i) for i in range(self.m)]


Which = Literal["old", "new", "total"]


def load_of(state: ScheduleState, machine: int, which: Which = "total") -> Rational:
    ms = state.machines[machine]
    if which == "old":
        work = ms.old_work
    elif which == "new":
        work = ms.new_work
    elif which == "total":
        work = ms.old_work + ms.new_work
    else:
        raise ValueError(f"unknown partition {which!r}")
    return ratio(work, state.speeds[machine])


def max_load(state: ScheduleState) -> Rational:
    best_work, best_speed = 0, 1
    for ms, s in zip(state.machines, state.speeds):
        w = ms.old_work + ms.new_work
        if w * best_speed > best_work * s:
            best_work, best_speed = w, s
    return ratio(best_work, best_speed)


def recomputed_load(state: ScheduleState, machine: int, which: Which = "total") -> Rational:
    """Load re-derived from the job sets, bypassing the incremental sums."""
    ms = state.machines[machine]
    parts = {"old": (ms.old_jobs,), "new": (ms.new_jobs,), "total": (ms.old_jobs, ms.new_jobs)}[which]
    work = sum((p for part in parts for p in part.values()), 0)
    return ratio(work, state.speeds[machine])


EventKind = Literal["Arrival", "PhaseDoubled", "Shift", "Evict", "Place"]


@dataclass(frozen=True, slots=True)
class Event:
    """One step of an insertion run. ``machine`` is a 0-based index."""

    kind: str
    job_id: Optional[int]
    machine: Optional[int]
    guess_after: Rational

    def to_dict(self) -> dict:
        out: dict = {"ev": self.kind}
        if self.job_id is not None:
            out["job"] = self.job_id
        if self.machine is not None:
            out["machine"] = self.machine + 1
        out["T"] = format_rational(self.guess_after)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass
class MigrationLedger:
    per_arrival_migrated: list = field(default_factory=list)
    per_arrival_net_migrated: list = field(default_factory=list)
    cumulative_arrived: Rational = 0
    cumulative_migrated: Rational = 0

    def open_arrival(self, size: Rational) -> None:
        self.cumulative_arrived += size
        self.per_arrival_migrated.append(0)
        self.per_arrival_net_migrated.append(0)

    def charge(self, size: Rational) -> None:
        self.per_arrival_migrated[-1] += size
        self.cumulative_migrated += size

    def charge_net(self, size: Rational) -> None:
        self.per_arrival_net_migrated[-1] += size

    @property
    def cumulative_net_migrated(self) -> Rational:
        return sum(self.per_arrival_net_migrated, 0)


def write_trace(events: Iterable[Event], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(ev.to_json())
            fh.write("\n")
