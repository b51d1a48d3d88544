"""Campaign statistics: budgeted resampling, fault rate, novelty against training data."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from roadgen.geometry import RoadGenome, distance_matrix
from roadgen.simulator import FAIL, PASS

COLUMNS = ("n_executed", "n_invalid", "n_faults")
TABLE_HEADERS = ("Statistic", "# Executed", "# Invalid", "# Faults")


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest class

    id: str
    test_outcome: str
    test_duration: float
    valid: bool = True

    def __post_init__(self):
        if self.test_outcome not in (PASS, FAIL):
            raise ValueError(f"test_outcome must be PASS or FAIL, got {self.test_outcome!r}")
        if not self.test_duration > 0:
            raise ValueError("test_duration must be positive")

    @property
    def failed(self) -> bool:
        return self.test_outcome == FAIL

    @classmethod
    def from_dict(cls, d: dict, valid: bool = True) -> "TestResult":
        return cls(str(d["id"]), d["test_outcome"], float(d["test_duration"]), bool(d.get("valid", valid)))


@dataclass(frozen=True)
class SampleRow:
    n_executed: int
    n_invalid: int
    n_faults: int
    total_duration: float


@dataclass(frozen=True)
class BudgetSampleStats:
    rows: tuple[SampleRow, ...]
    budget: float

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def aggregates(self) -> dict[str, dict[str, float]]:
        out = {}
        for name in COLUMNS:
            col = self.column(name)
            out[name] = {"min": float(col.min()), "avg": float(col.mean()), "max": float(col.max())}
        return out

    def table(self) -> list[dict]:
        """Rows shaped like the classic Min/Avg/Max campaign table."""
        agg = self.aggregates()
        rows = []
        for label, key in (("Min.", "min"), ("Avg.", "avg"), ("Max.", "max")):
            row = {"Statistic": label}
            for header, name in zip(TABLE_HEADERS[1:], COLUMNS):
                value = agg[name][key]
                row[header] = int(value) if key != "avg" else round(value, 2)
            rows.append(row)
        return rows

    def to_json(self) -> str:
        return json.dumps(
            {
                "budget_seconds": self.budget,
                "n_samples": len(self.rows),
                "aggregates": self.aggregates(),
                "samples": [asdict(r) for r in self.rows],
            },
            indent=2,
            sort_keys=True,
        )


def budget_sample(results: Sequence[TestResult], budget: float, n_samples: int = 100,
                  rng_seed: int = 0) -> BudgetSampleStats:
    """Resample a campaign with replacement until the next test would overrun ``budget``.

    Invalid tests are counted but cost no simulation time.
    """
    if not results:
        raise ValueError("results must be nonempty")
    if budget <= 0:
        raise ValueError("budget must be positive")
    if not any(r.valid for r in results):
        raise ValueError("at least one valid result is needed to exhaust a budget")
    durations = np.array([r.test_duration if r.valid else 0.0 for r in results])
    valid = np.array([r.valid for r in results])
    failed = np.array([r.failed for r in results])
    rows = []
    for child in np.random.SeedSequence(rng_seed).spawn(n_samples):
        rng = np.random.default_rng(child)
        used = 0.0
        executed = invalid = faults = 0
        while True:
            i = int(rng.integers(0, len(results)))
            if used + durations[i] > budget:
                break
            used += durations[i]
            executed += 1
            if not valid[i]:
                invalid += 1
            elif failed[i]:
                faults += 1
        rows.append(SampleRow(executed, invalid, faults, used))
    return BudgetSampleStats(tuple(rows), float(budget))


def fault_rate(results: Sequence[TestResult]) -> float:
    valid = [r for r in results if r.valid]
    if not valid:
        raise ValueError("no valid results")
    return sum(r.failed for r in valid) / len(valid)


@dataclass(frozen=True)
class NoveltyStats:
    mean_min_distance: float
    mean_median_distance: float
    n_above_threshold: int
    threshold: float

    def summary(self) -> str:
        return (
            f"mean minimal distance to training: {self.mean_min_distance:.4f}\n"
            f"mean median distance to training: {self.mean_median_distance:.4f}\n"
            f"tests with minimal distance above {self.threshold:g}: {self.n_above_threshold}"
        )


def novelty_stats(generated: Sequence[RoadGenome], training: Sequence[RoadGenome],
                  threshold: float = 0.2) -> NoveltyStats:
    if not generated or not training:
        raise ValueError("both genome sets must be nonempty")
    d = distance_matrix(generated, training)
    mins = d.min(axis=1)
    medians = np.median(d, axis=1)
    return NoveltyStats(float(mins.mean()), float(medians.mean()), int(np.sum(mins > threshold)),
                        float(threshold))
