import json
from fractions import Fraction

import pytest

from usm.core import (
    Event,
    Instance,
    InstanceError,
    Job,
    MachineSet,
    MigrationLedger,
    ScheduleState,
    format_decimal,
    format_rational,
    load_of,
    max_load,
    parse_rational,
    rational,
    recomputed_load,
    write_trace,
)


class TestRational:
    def test_normalises_integral_fractions_to_int(self):
        assert rational(Fraction(6, 3)) == 2
        assert type(rational(Fraction(6, 3))) is int
        assert rational(Fraction(1, 3)) == Fraction(1, 3)

    def test_parse(self):
        assert parse_rational("7") == 7
        assert parse_rational("9/2") == Fraction(9, 2)
        assert parse_rational(" 4/2 ") == 2

    @pytest.mark.parametrize("text", ["1.5", "1e3", "1/0", "", "a/b", "3/-2"])
    def test_parse_rejects(self, text):
        with pytest.raises(ValueError):
            parse_rational(text)

    def test_rejects_float_and_bool(self):
        with pytest.raises(TypeError):
            rational(0.5)
        with pytest.raises(TypeError):
            rational(True)

    def test_format(self):
        assert format_rational(Fraction(25, 4)) == "25/4"
        assert format_rational(3) == "3"
        assert format_decimal(Fraction(1, 3)) == "0.333333"


class TestMachineSet:
    def test_non_increasing_required(self):
        with pytest.raises(InstanceError, match=r"speeds\[1\]"):
            MachineSet((1, 2))

    def test_positive_and_nonempty(self):
        with pytest.raises(InstanceError):
            MachineSet(())
        with pytest.raises(InstanceError, match=r"speeds\[1\]"):
            MachineSet((1, 0))

    def test_equal_speeds_allowed(self):
        assert MachineSet((2, 2, 1)).speeds == (2, 2, 1)


class TestJobAndInstance:
    def test_job_size_positive(self):
        with pytest.raises(InstanceError):
            Job(1, 0)

    def test_ids_in_arrival_order(self):
        with pytest.raises(InstanceError):
            Instance(MachineSet((1,)), (Job(2, 1),))

    def test_round_trip(self, tmp_path):
        inst = Instance.from_values((3, 2, Fraction(1, 2)), (9, Fraction(7, 3)))
        path = tmp_path / "i.json"
        inst.dump(path)
        assert Instance.load(path) == inst
        assert json.loads(path.read_text()) == {"speeds": ["3", "2", "1/2"], "jobs": ["9", "7/3"]}

    def test_integer_fields_accepted(self):
        inst = Instance.from_json('{"speeds": [1], "jobs": [2, "3/2"]}')
        assert [j.size for j in inst.jobs] == [2, Fraction(3, 2)]

    @pytest.mark.parametrize(
        "text, where",
        [
            ('{"speeds": ["1"], "jobs": ["0.5"]}', r"jobs\[0\]"),
            ('{"speeds": ["1"], "jobs": ["1", "-2"]}', r"jobs\[1\]"),
            ('{"speeds": ["1", "2"], "jobs": ["1"]}', r"speeds\[1\]"),
            ('{"speeds": ["1"]}', "jobs"),
            ('{"speeds": ["1"], "jobs": [1.5]}', r"jobs\[0\]"),
            ('{"speeds": ["1"],\n "jobs": [}', "line 2"),
            ('[1, 2]', "JSON object"),
        ],
    )
    def test_diagnostics(self, text, where):
        with pytest.raises(InstanceError, match=where):
            Instance.from_json(text)

    def test_prefix_and_scaled(self):
        inst = Instance.from_values((1,), (1, 2, 3))
        assert [j.size for j in inst.prefix(2).jobs] == [1, 2]
        assert [j.size for j in inst.scaled(Fraction(1, 2)).jobs] == [Fraction(1, 2), 1, Fraction(3, 2)]


class TestLoads:
    def _state(self, speeds):
        return ScheduleState.empty(speeds)

    def test_empty_machine(self):
        st = self._state((1,))
        for which in ("old", "new", "total"):
            assert load_of(st, 0, which) == 0

    def test_old_partition(self):
        st = self._state((3, 2))
        st.machines[1].add_old(1, 4)
        assert load_of(st, 1, "old") == 2

    def test_total_partition(self):
        st = self._state((3,))
        st.machines[0].add_old(1, 3)
        st.machines[0].add_new(2, 9)
        st.machines[0].add_new(3, 7)
        assert load_of(st, 0, "total") == Fraction(19, 3)
        assert recomputed_load(st, 0) == Fraction(19, 3)
        assert load_of(st, 0, "new") == Fraction(16, 3)

    def test_unknown_partition(self):
        with pytest.raises(ValueError):
            load_of(self._state((1,)), 0, "both")

    @pytest.mark.parametrize(
        "speeds, works, expected",
        [
            ((1, 1, 1), (0, 0, 0), 0),
            ((1, 1, 1), (2, 4, 4), 4),
            ((3, 1), (19, 5), Fraction(19, 3)),
        ],
    )
    def test_max_load(self, speeds, works, expected):
        st = self._state(speeds)
        for i, w in enumerate(works):
            if w:
                st.machines[i].add_new(i + 1, w)
        assert max_load(st) == expected

    def test_age_moves_new_to_old(self):
        st = self._state((1,))
        ms = st.machines[0]
        ms.add_old(1, 2)
        ms.add_new(2, 3)
        ms.age()
        assert ms.old_jobs == {1: 2, 2: 3} and ms.new_jobs == {}
        assert (ms.old_work, ms.new_work) == (5, 0)


def test_event_json_is_one_based():
    ev = Event("Place", 3, 0, Fraction(25, 4))
    assert ev.to_dict() == {"ev": "Place", "job": 3, "machine": 1, "T": "25/4"}
    assert Event("PhaseDoubled", None, None, 2).to_dict() == {"ev": "PhaseDoubled", "T": "2"}


def test_write_trace(tmp_path):
    path = tmp_path / "t.jsonl"
    write_trace([Event("Arrival", 1, None, 1), Event("Place", 1, 1, 1)], path)
    lines = path.read_text().splitlines()
    assert [json.loads(l)["ev"] for l in lines] == ["Arrival", "Place"]


def test_migration_ledger():
    led = MigrationLedger()
    led.open_arrival(4)
    led.charge(1)
    led.charge_net(1)
    led.open_arrival(2)
    assert led.per_arrival_migrated == [1, 0]
    assert (led.cumulative_arrived, led.cumulative_migrated, led.cumulative_net_migrated) == (6, 1, 1)
