"""Offline optimum: exact branch-and-bound and a cheap structural lower bound."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .core import Job, MachineSet, Rational, ratio

DEFAULT_NODE_BUDGET = 10**7


class BudgetExhausted(RuntimeError):
    """The exact search hit its node budget; fall back to :func:`opt_lower_bound`."""

    def __init__(self, explored: int, budget: int):
        super().__init__(f"branch-and-bound exceeded {budget} nodes")
        self.explored = explored
        self.budget = budget


@dataclass(frozen=True)
class OptResult:
    value: Rational
    assignment: dict  # job id -> 0-based machine index
    explored_nodes: int


def _speeds(machines) -> tuple:
    if isinstance(machines, MachineSet):
        return machines.speeds
    return MachineSet(tuple(machines)).speeds


def makespan(machines, jobs: Sequence[Job], assignment: dict) -> Rational:
    speeds = _speeds(machines)
    work = [0] * len(speeds)
    for job in jobs:
        work[assignment[job.id]] += job.size
    return max(ratio(w, s) for w, s in zip(work, speeds))


def opt_lower_bound(machines, jobs: Sequence[Job]) -> Rational:
    """Max over k of (k largest sizes) / (k fastest speeds), and total work / total speed."""
    if not jobs:
        raise ValueError("at least one job is required")
    speeds = _speeds(machines)
    sizes = sorted((j.size for j in jobs), reverse=True)
    best = ratio(sum(sizes, 0), sum(speeds, 0))
    size_sum = speed_sum = 0
    for k in range(min(len(sizes), len(speeds))):
        size_sum += sizes[k]
        speed_sum += speeds[k]
        bound = ratio(size_sum, speed_sum)
        if bound > best:
            best = bound
    return best


class _Found(Exception):
    pass


def opt_exact(machines, jobs: Sequence[Job], node_budget: int = DEFAULT_NODE_BUDGET) -> OptResult:
    """Exact minimum makespan by depth-first branch-and-bound.

    Jobs are branched largest first. A branch is cut when a machine would reach
    the incumbent makespan, or when the spare capacity below the incumbent
    cannot hold the remaining work. Machines with equal speed and equal
    current work are interchangeable, so only one of them is tried.
    """
    if not jobs:
        raise ValueError("at least one job is required")
    if node_budget <= 0:
        raise ValueError("node_budget must be positive")
    speeds = _speeds(machines)
    m = len(speeds)
    order = sorted(jobs, key=lambda j: (-j.size, j.id))
    sizes = [j.size for j in order]
    n = len(order)
    remaining = [0] * (n + 1)
    for k in range(n - 1, -1, -1):
        remaining[k] = remaining[k + 1] + sizes[k]

    # Greedy incumbent: earliest completion, ties to the lower index.
    work = [0] * m
    choice = [0] * n
    for k, p in enumerate(sizes):
        i = min(range(m), key=lambda i: (ratio(work[i] + p, speeds[i]), i))
        work[i] += p
        choice[k] = i
    best_value = max(ratio(w, s) for w, s in zip(work, speeds))
    best_choice = list(choice)
    lower = opt_lower_bound(speeds, jobs)
    explored = n

    if best_value > lower:
        work = [0] * m
        choice = [0] * n
        state = {"value": Fraction(best_value), "choice": best_choice, "explored": explored}

        def descend(k: int) -> None:
            best = state["value"]
            bn, bd = best.numerator, best.denominator
            if k == n:
                value = max(ratio(w, s) for w, s in zip(work, speeds))
                state["value"] = Fraction(value)
                state["choice"] = list(choice)
                if value <= lower:
                    raise _Found
                return
            spare = 0
            for i in range(m):
                gap = bn * speeds[i] - bd * work[i]
                if gap > 0:
                    spare += gap
            if spare <= bd * remaining[k]:
                return
            p = sizes[k]
            seen = set()
            options = []
            for i in range(m):
                key = (speeds[i], work[i])
                if key in seen:
                    continue
                seen.add(key)
                w = work[i] + p
                if w * bd < bn * speeds[i]:
                    options.append((ratio(w, speeds[i]), i))
            options.sort()
            for _, i in options:
                state["explored"] += 1
                if state["explored"] > node_budget:
                    raise BudgetExhausted(state["explored"], node_budget)
                # the incumbent may have improved since the options were built
                cur = state["value"]
                if (work[i] + p) * cur.denominator >= cur.numerator * speeds[i]:
                    continue
                work[i] += p
                choice[k] = i
                descend(k + 1)
                work[i] -= p

        try:
            descend(0)
        except _Found:
            pass
        best_value = state["value"]
        best_choice = state["choice"]
        explored = state["explored"]

    assignment = {order[k].id: best_choice[k] for k in range(n)}
    return OptResult(ratio(best_value, 1), assignment, explored)
