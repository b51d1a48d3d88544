"""On-disk formats: test cases, results, labeled datasets, population snapshots.

Floats are written with Python's shortest round-trip representation, so every
value read back is bit-identical to the one written.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from roadgen.geometry import LANE_WIDTH, CartesianRoad, Pose, RoadGenome, reconstruct
from roadgen.simulator import FAIL, PASS, LabeledRoad, SimulationTrace


class FormatError(ValueError):
    pass


def _floats(a) -> list[float]:
    return [float(v) for v in a]


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=False)


def _write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


# -- test cases ----------------------------------------------------------------


def test_case_dict(test_id: str, genome: RoadGenome, road: Optional[CartesianRoad] = None,
                   lane_width: float = LANE_WIDTH) -> dict:
    road = road or reconstruct(genome, lane_width=lane_width)
    return {
        "id": test_id,
        "curvatures": _floats(genome.curvatures),
        "arc_lengths": _floats(genome.arc_lengths),
        "road_points": [[float(p.x), float(p.y)] for p in road.poses],
        "lane_width": float(road.lane_width),
    }


def write_test_case(path, test_id: str, genome: RoadGenome, lane_width: float = LANE_WIDTH) -> None:
    _write_text(path, _dump(test_case_dict(test_id, genome, lane_width=lane_width)) + "\n")


def parse_test_case(data: dict) -> tuple[str, RoadGenome, CartesianRoad]:
    """Rebuild genome and road; the road is re-integrated from the genome."""
    try:
        genome = RoadGenome(data["curvatures"], data["arc_lengths"])
        lane_width = float(data.get("lane_width", LANE_WIDTH))
        test_id = str(data["id"])
        points = np.asarray(data["road_points"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed test case: {exc}") from exc
    if points.shape != (len(genome) + 1, 2):
        raise FormatError(f"road_points has shape {points.shape}, expected {(len(genome) + 1, 2)}")
    # first chord leaves at the start heading plus half the first turn
    dx, dy = points[1] - points[0]
    heading = float(np.arctan2(dy, dx)) - genome.curvatures[0] * genome.steps[0] / 2.0
    road = reconstruct(genome, Pose(points[0, 0], points[0, 1], heading), lane_width)
    if not np.allclose(points, road.points, atol=1e-6):
        raise FormatError("road_points disagree with the curvature profile")
    return test_id, genome, road


def read_test_case(path) -> tuple[str, RoadGenome, CartesianRoad]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise FormatError(f"{path}: expected a JSON object")
    return parse_test_case(data)


# -- results ---------------------------------------------------------------------


def result_dict(test_id: str, trace: SimulationTrace) -> dict:
    return {
        "id": test_id,
        "test_outcome": trace.outcome,
        "test_duration": float(trace.duration),
        "oob_events": [
            {"arc_position": float(e.arc_position), "lateral_offset": float(e.lateral_offset),
             "trace_index": int(e.trace_index), "x": float(trace.states[e.trace_index].pose.x),
             "y": float(trace.states[e.trace_index].pose.y)}
            for e in trace.oob_events
        ],
        "trace": [[float(st.pose.x), float(st.pose.y)] for st in trace.states],
    }


def write_result(path, test_id: str, trace: SimulationTrace) -> None:
    _write_text(path, _dump(result_dict(test_id, trace)) + "\n")


def read_result(path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("test_outcome") not in (PASS, FAIL):
        raise FormatError(f"{path}: test_outcome must be PASS or FAIL")
    if not float(data.get("test_duration", 0)) > 0:
        raise FormatError(f"{path}: test_duration must be positive")
    return data


# -- labeled datasets --------------------------------------------------------------


def labeled_line(road: LabeledRoad) -> str:
    return _dump({
        "curvatures": _floats(road.genome.curvatures),
        "arc_lengths": _floats(road.genome.arc_lengths),
        "labels": [bool(v) for v in road.labels],
    })


def write_dataset(path, roads: Iterable[LabeledRoad]) -> int:
    lines = [labeled_line(r) for r in roads]
    _write_text(path, "".join(line + "\n" for line in lines))
    return len(lines)


def read_dataset(path) -> list[LabeledRoad]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                out.append(LabeledRoad(RoadGenome(d["curvatures"], d["arc_lengths"]), d["labels"]))
            except (KeyError, ValueError, TypeError) as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return out


# -- population snapshots and metrics ----------------------------------------------


def write_population(path, members) -> None:
    lines = [
        _dump({
            "curvatures": _floats(m.genome.curvatures),
            "arc_lengths": _floats(m.genome.arc_lengths),
            "f1": float(m.f1),
            "f2": float(m.f2),
        })
        for m in members
    ]
    _write_text(path, "".join(line + "\n" for line in lines))


def read_population(path):
    from roadgen.evolution import Member

    members = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                members.append(Member(RoadGenome(d["curvatures"], d["arc_lengths"]), d["f1"], d["f2"]))
    return members


def write_csv(path, rows: Sequence[dict], fieldnames: Optional[Sequence[str]] = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [asdict(r) if hasattr(r, "__dataclass_fields__") else dict(r) for r in rows]
    fieldnames = list(fieldnames or (rows[0].keys() if rows else []))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
