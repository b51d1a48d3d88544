import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import genome_of
from roadgen.analysis import (
    BudgetSampleStats,
    SampleRow,
    TestResult,
    budget_sample,
    fault_rate,
    novelty_stats,
)
from roadgen.geometry import RoadGenome


def results(durations, outcomes=None, valid=None):
    outcomes = outcomes or ["PASS"] * len(durations)
    valid = valid or [True] * len(durations)
    return [TestResult(f"t{i}", o, d, v) for i, (d, o, v) in enumerate(zip(durations, outcomes, valid))]


class TestResultType:
    def test_rejects_bad_outcome(self):
        with pytest.raises(ValueError):
            TestResult("a", "MAYBE", 1.0)

    def test_rejects_nonpositive_duration(self):
        with pytest.raises(ValueError):
            TestResult("a", "PASS", 0.0)

    def test_from_dict(self):
        r = TestResult.from_dict({"id": 3, "test_outcome": "FAIL", "test_duration": 2.5})
        assert r == TestResult("3", "FAIL", 2.5, True)


class TestBudgetSample:
    def test_constant_durations(self):
        stats = budget_sample(results([60.0] * 10), 7200, n_samples=20, rng_seed=1)
        assert all(r.n_executed == 120 for r in stats.rows)
        assert all(r.n_faults == 0 for r in stats.rows)

    def test_all_fail(self):
        stats = budget_sample(results([30.0] * 4, ["FAIL"] * 4), 300, n_samples=5)
        assert all(r.n_faults == r.n_executed == 10 for r in stats.rows)

    def test_oversized_test_gives_empty_sample(self):
        stats = budget_sample(results([500.0]), 100, n_samples=3)
        assert all(r.n_executed == 0 for r in stats.rows)

    def test_invalid_tests_cost_nothing(self):
        rs = results([10.0, 10.0], valid=[True, False])
        stats = budget_sample(rs, 100, n_samples=10, rng_seed=2)
        for row in stats.rows:
            assert row.n_executed - row.n_invalid == 10
            assert row.total_duration == 100.0

    def test_no_valid_results(self):
        with pytest.raises(ValueError):
            budget_sample(results([1.0], valid=[False]), 10)

    def test_empty(self):
        with pytest.raises(ValueError):
            budget_sample([], 10)

    def test_deterministic_bytes(self):
        rs = results(list(np.linspace(1, 40, 50)), ["FAIL", "PASS"] * 25)
        assert budget_sample(rs, 500, 30, 7).to_json() == budget_sample(rs, 500, 30, 7).to_json()
        assert budget_sample(rs, 500, 30, 7).to_json() != budget_sample(rs, 500, 30, 8).to_json()

    @settings(max_examples=40, deadline=None)
    @given(durations=st.lists(st.floats(0.5, 100), min_size=1, max_size=30),
           budget=st.floats(1, 2000), seed=st.integers(0, 2**31))
    def test_invariants(self, durations, budget, seed):
        rng = np.random.default_rng(seed)
        outcomes = list(rng.choice(["PASS", "FAIL"], len(durations)))
        stats = budget_sample(results(durations, outcomes), budget, 10, seed)
        for row in stats.rows:
            assert row.total_duration <= budget
            assert row.n_faults <= row.n_executed
        for col in stats.aggregates().values():
            assert col["min"] <= col["avg"] <= col["max"]


def test_table_format_fixture():
    # 100 rows reproducing the published min/avg/max layout
    executed = [778, 815] + [799] * 50 + [798] * 48
    faults = [482, 536] + [509] * 56 + [508] * 42
    stats = BudgetSampleStats(tuple(SampleRow(e, 0, f, 0.0) for e, f in zip(executed, faults)), 7200.0)
    assert stats.table() == [
        {"Statistic": "Min.", "# Executed": 778, "# Invalid": 0, "# Faults": 482},
        {"Statistic": "Avg.", "# Executed": 798.47, "# Invalid": 0.0, "# Faults": 508.58},
        {"Statistic": "Max.", "# Executed": 815, "# Invalid": 0, "# Faults": 536},
    ]


class TestFaultRate:
    def test_all_fail(self):
        assert fault_rate(results([1.0] * 3, ["FAIL"] * 3)) == 1.0

    def test_quarter(self):
        assert fault_rate(results([1.0] * 8, ["FAIL"] * 2 + ["PASS"] * 6)) == 0.25

    def test_invalid_excluded(self):
        rs = results([1.0] * 3, ["FAIL", "PASS", "FAIL"], [True, True, False])
        assert fault_rate(rs) == 0.5


def brute_novelty(gen, train, threshold):
    mins, meds = [], []
    for g in gen:
        d = sorted(math.sqrt(sum((a - b) ** 2 for a, b in zip(g.curvatures, t.curvatures))) for t in train)
        mins.append(d[0])
        n = len(d)
        meds.append(d[n // 2] if n % 2 else (d[n // 2 - 1] + d[n // 2]) / 2)
    return sum(mins) / len(mins), sum(meds) / len(meds), sum(m > threshold for m in mins)


class TestNovelty:
    def test_subset(self, rng):
        train = [RoadGenome.from_curvatures(rng.uniform(-0.1, 0.1, 50)) for _ in range(5)]
        s = novelty_stats(train[:3], train)
        assert s.mean_min_distance == 0.0 and s.n_above_threshold == 0

    def test_two_training(self):
        a, b = np.zeros(50), np.zeros(50)
        a[0], b[0] = 0.1, 0.3
        s = novelty_stats([genome_of(0.0)], [RoadGenome.from_curvatures(a), RoadGenome.from_curvatures(b)])
        assert s.mean_min_distance == pytest.approx(0.1, abs=1e-15)
        assert s.mean_median_distance == pytest.approx(0.2, abs=1e-15)

    def test_brute_force(self, rng):
        gen = [RoadGenome.from_curvatures(rng.uniform(-0.1, 0.1, 50)) for _ in range(20)]
        train = [RoadGenome.from_curvatures(rng.uniform(-0.1, 0.1, 50)) for _ in range(50)]
        s = novelty_stats(gen, train)
        mmin, mmed, count = brute_novelty(gen, train, 0.2)
        assert abs(s.mean_min_distance - mmin) <= 1e-12
        assert abs(s.mean_median_distance - mmed) <= 1e-12
        assert s.n_above_threshold == count

    def test_summary_format(self):
        s = novelty_stats([genome_of(0.0)], [genome_of(0.05), genome_of(0.1)])
        lines = s.summary().splitlines()
        assert len(lines) == 3
        assert lines[2].endswith(": 1")

    def test_empty(self):
        with pytest.raises(ValueError):
            novelty_stats([], [genome_of(0.0)])
