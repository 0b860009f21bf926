import math
from fractions import Fraction

import pytest

from usm.core import Job, MachineSet, MigrationLedger, ScheduleState
from usm.engine import (
    AlgoParams,
    EngineInvariantError,
    Mode,
    NONAM_MAX_DENOMINATOR,
    OnlineScheduler,
    candidate_machines,
    insert_arrival,
    is_eligible,
    is_saturated,
    largest_fraction_at_most,
    nonam_gamma,
    preset,
)


def params(eta=1, gamma=Fraction(1, 2), xi=Fraction(5, 2), mode=Mode.AMORTIZED):
    return AlgoParams(mode, gamma, xi, eta)


def state_with(speeds, guess, new_work=(), old_work=()):
    st = ScheduleState.empty(speeds)
    st.guess = Fraction(guess)
    jid = 100
    for i, w in enumerate(new_work):
        if w:
            st.machines[i].add_new(jid, w)
            jid += 1
    for i, w in enumerate(old_work):
        if w:
            st.machines[i].add_old(jid, w)
            jid += 1
    return st


class TestPresets:
    def test_am1(self):
        p = preset("am1", 2)
        assert (p.gamma, p.xi, p.eta) == (Fraction(1, 2), Fraction(5, 2), 1)
        assert (p.ratio_target, p.migration_budget) == (5, 2)
        assert p.mode is Mode.AMORTIZED and p.guaranteed

    def test_nonam(self):
        p = preset("nonam", 8)
        assert (p.gamma, p.xi, p.eta) == (Fraction(1, 2), 4, 2)
        assert (p.ratio_target, p.migration_budget) == (12, 2)
        assert p.mode is Mode.NON_AMORTIZED

    def test_am2(self):
        p = preset("am2", 2)
        assert (p.gamma, p.xi, p.eta) == (Fraction(1, 2), Fraction(7, 3), 2)
        assert p.ratio_target == 7
        assert p.ratio_target >= Fraction(8, 3) + 2

    @pytest.mark.parametrize("eps", [Fraction(1, 2), 1, 2, 4])
    def test_amortized_gamma(self, eps):
        for kind in ("am1", "am2"):
            p = preset(kind, eps)
            assert p.gamma == 2 / (Fraction(eps) + 2)
            assert p.stated_migration_factor == 2 / Fraction(eps) + 1

    def test_am1_ratio_is_three_plus_eps(self):
        for eps in (Fraction(1, 2), 1, 2, 4):
            p = preset("am1", eps)
            assert p.ratio_target == 3 + Fraction(eps)

    def test_nonam_range(self):
        with pytest.raises(ValueError):
            preset("nonam", 9)
        with pytest.raises(ValueError):
            preset("am1", 0)

    def test_am_gamma_at_least_inverse_xi(self):
        for eps in (Fraction(1, 10), 1, 10):
            for kind in ("am1", "am2"):
                p = preset(kind, eps)
                assert p.gamma >= 1 / Fraction(p.xi)

    def test_custom_params_validated(self):
        with pytest.raises(ValueError):
            AlgoParams(Mode.AMORTIZED, 1, 2, 1)
        with pytest.raises(ValueError):
            AlgoParams(Mode.AMORTIZED, Fraction(1, 2), 1, 1)
        with pytest.raises(ValueError):
            AlgoParams(Mode.AMORTIZED, Fraction(1, 2), 2, Fraction(1, 2))
        assert AlgoParams(Mode.AMORTIZED, Fraction(1, 2), 2, 1).stated_ratio is None


class TestNonamRounding:
    """The rounded gamma is checked against a float-free brute force and against floats."""

    @pytest.mark.parametrize("eps", [Fraction(1, 2), 1, 2, 3, 4, Fraction(7, 3), 8])
    def test_against_float_root(self, eps):
        g = nonam_gamma(eps)
        root = 2 / (math.sqrt(9 + 2 * float(eps)) - 1)
        assert g.denominator <= NONAM_MAX_DENOMINATOR
        assert float(g) <= root + 1e-12
        assert root - float(g) < 1e-9

    @pytest.mark.parametrize("eps", [1, 2, Fraction(5, 2)])
    def test_is_best_small_denominator(self, eps):
        # exhaustive oracle for a small denominator cap
        disc = 9 + 2 * Fraction(eps)
        cap = 60
        best = max(
            Fraction(a, b)
            for b in range(1, cap + 1)
            for a in range(1, 3 * b)
            if Fraction(a, b) ** 2 * disc <= (2 + Fraction(a, b)) ** 2
        )
        assert nonam_gamma(eps, cap) == best

    def test_ratio_target_recomputed(self):
        p = preset("nonam", 1)
        assert p.gamma == Fraction(801965, 928926)
        assert p.ratio_target == (1 + 1 / p.gamma) * 2 / p.gamma
        assert p.ratio_target >= 5
        assert p.ratio_target - 5 < Fraction(1, 10**5)

    def test_exact_root_hit(self):
        assert nonam_gamma(8) == Fraction(1, 2)

    def test_largest_fraction_generic(self):
        below_sqrt2 = lambda a, b: a * a <= 2 * b * b
        brute = max(Fraction(a, b) for b in range(1, 13) for a in range(1, 2 * b) if below_sqrt2(a, b))
        assert largest_fraction_at_most(below_sqrt2, 12) == brute == Fraction(7, 5)


class TestPredicates:
    def test_eligible_boundary(self):
        assert is_eligible(params(eta=1), state_with((2,), 2), Job(1, 4), 0)

    def test_not_eligible(self):
        assert not is_eligible(params(eta=1), state_with((1,), 2), Job(1, 4), 0)

    def test_eligible_with_eta(self):
        assert is_eligible(params(eta=2), state_with((1,), Fraction(5, 2)), Job(1, 4), 0)

    def test_saturated_boundary(self):
        assert is_saturated(state_with((1,), 2, new_work=(2,)), 0)

    def test_old_load_never_saturates(self):
        assert not is_saturated(state_with((1,), 2, old_work=(1000,)), 0)

    def test_unsaturated(self):
        assert not is_saturated(state_with((1,), Fraction(5, 2), new_work=(2,)), 0)

    def test_candidates_empty(self):
        assert candidate_machines(params(), state_with((1, 1), 1), Job(1, 5)) == []

    def test_candidates_slowest_first(self):
        assert candidate_machines(params(), state_with((2, 1), 10), Job(1, 1)) == [1, 0]

    def test_candidates_equal_speed_tiebreak(self):
        assert candidate_machines(params(), state_with((1, 1), 10), Job(1, 1)) == [1, 0]


class TestHandTraces:
    def test_first_job_and_doubling(self):
        s = OnlineScheduler(preset("am1", 2), MachineSet((2, 1)))
        s.insert(Job(1, 4))
        assert s.state.guess == 2
        assert s.state.loads() == [2, 0]
        s.insert(Job(2, 4))
        assert s.state.guess == 5
        assert s.state.loads() == [2, 4]
        assert s.state.machines[1].potential == 2
        assert s.ledger.per_arrival_migrated == [0, 0]
        assert [e.kind for e in s.trace[2:]] == ["Arrival", "PhaseDoubled", "Place"]

    def test_eviction_and_reinsertion(self):
        s = OnlineScheduler(preset("am1", 2), MachineSet((1, 1))).run(
            [Job(1, 1), Job(2, 1), Job(3, 4)]
        )
        got = [(e.kind, e.job_id, e.machine, e.guess_after) for e in s.trace]
        assert got == [
            ("Arrival", 1, None, 1),
            ("Place", 1, 1, 1),
            ("Arrival", 2, None, 1),
            ("Place", 2, 0, 1),
            ("Arrival", 3, None, 1),
            ("PhaseDoubled", None, None, Fraction(5, 2)),
            ("PhaseDoubled", None, None, Fraction(25, 4)),
            ("Evict", 1, 1, Fraction(25, 4)),
            ("Place", 3, 1, Fraction(25, 4)),
            ("Place", 1, 1, Fraction(25, 4)),
        ]
        assert s.state.loads() == [1, 5]
        assert s.ledger.per_arrival_migrated == [0, 0, 1]
        assert s.ledger.per_arrival_net_migrated == [0, 0, 0]
        assert s.state.machines[1].potential == Fraction(3, 2)
        assert s.ledger.per_arrival_migrated[-1] <= 4 * preset("am1", 2).migration_budget

    def test_shift_relabels_large_old_job(self):
        # AM1, eta=1: old job of size >= the incoming job is re-labelled as new.
        p = preset("am1", 2)
        st = state_with((1,), 10, old_work=(6,))
        led, trace = MigrationLedger(), []
        insert_arrival(p, st, led, trace, Job(1, 3))
        kinds = [e.kind for e in trace]
        assert kinds == ["Arrival", "Shift", "Place"]
        assert st.machines[0].old_jobs == {}
        assert st.machines[0].new_work == 9
        assert st.shifted_load == [6]
        assert led.cumulative_migrated == 0

    def test_shift_saturates_and_moves_on(self):
        # The shifted job saturates machine 2, so the arrival goes to machine 1.
        p = preset("am1", 2)
        st = state_with((1, 1), 10, old_work=(0, 10))
        trace = []
        insert_arrival(p, st, MigrationLedger(), trace, Job(1, 5))
        assert [(e.kind, e.machine) for e in trace] == [("Arrival", None), ("Shift", 1), ("Place", 0)]

    def test_nonamortized_keeps_no_potential(self):
        s = OnlineScheduler(preset("nonam", 8), MachineSet((1, 1))).run([Job(1, 5), Job(2, 1), Job(3, 1)])
        assert all(ms.potential == 0 for ms in s.state.machines)

    def test_amortized_potential_reset_on_doubling(self):
        s = OnlineScheduler(preset("am1", 2), MachineSet((1,))).run([Job(1, 1)])
        assert s.state.machines[0].potential == Fraction(1, 2)
        s.insert(Job(2, 3))
        assert s.state.phase == 2
        assert s.state.machines[0].potential <= Fraction(3, 2) + Fraction(1, 2)

    def test_queue_must_be_empty(self):
        st = state_with((1,), 1)
        st.queue.append((-1, 99))
        with pytest.raises(EngineInvariantError):
            insert_arrival(preset("am1", 1), st, MigrationLedger(), None, Job(1, 1))

    def test_trace_not_required(self):
        s = OnlineScheduler(preset("am2", 1), MachineSet((3, 1)), record_trace=False).run([Job(1, 2), Job(2, 9)])
        assert s.trace is None and s.state.arrived == 2


def test_broken_predicate_hits_termination_guard(monkeypatch):
    import usm.engine as engine

    monkeypatch.setattr(engine, "is_saturated", lambda state, machine: True)
    s = OnlineScheduler(preset("am1", 1), MachineSet((1,)))
    with pytest.raises(EngineInvariantError):
        s.insert(Job(1, 1))
