"""Desk-scale lane-keeping simulator used as the ground-truth oracle.

The agent is a pure-pursuit steering controller on a kinematic bicycle with a
curvature-aware speed planner.  Tyre grip caps the path curvature the car can
realise at speed, so a curve entered too fast pushes the car wide.  A test
fails at the first sample whose lateral offset exceeds the lane tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from roadgen.geometry import CartesianRoad, Pose, RoadGenome, normalize_angle

PASS = "PASS"
FAIL = "FAIL"


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class AgentConfig:
    v_max: float = 70.0 / 3.6
    lookahead: float = 6.0
    max_lateral_accel: float = 4.0  # planner comfort limit
    timestep: float = 0.1
    wheelbase: float = 2.5
    max_steer: float = 0.6
    grip: float = 10.0  # tyre limit on realised lateral acceleration
    max_decel: float = 4.0
    max_accel: float = 2.0
    car_width: float = 2.0
    tolerance: float = 0.3
    max_steps: int = 10_000


@dataclass(frozen=True)
class VehicleState:
    pose: Pose
    speed: float


@dataclass(frozen=True)
class OOBEvent:
    trace_index: int
    lateral_offset: float
    arc_position: float


@dataclass(frozen=True)
class SimulationTrace:
    states: tuple[VehicleState, ...]
    oob_events: tuple[OOBEvent, ...]
    timestep: float
    final_arc_position: float = 0.0

    @property
    def outcome(self) -> str:
        return FAIL if self.oob_events else PASS

    @property
    def duration(self) -> float:
        return len(self.states) * self.timestep


@dataclass(frozen=True)
class LabeledRoad:
    genome: RoadGenome
    labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        labels = np.array(self.labels, dtype=bool)
        if labels.shape != (len(self.genome),):
            raise ValueError("one label per genome point required")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def failed(self) -> bool:
        return bool(self.labels.any())


class Centerline:
    """Polyline view of a road with exact arc-length bookkeeping."""

    def __init__(self, road: CartesianRoad):
        self.road = road
        self.points = road.points
        self.start = self.points[:-1]
        self.delta = np.diff(self.points, axis=0)
        self.chord2 = np.einsum("ij,ij->i", self.delta, self.delta)
        self.seg_len = road.segment_lengths()
        self.seg_curv = road.segment_curvatures()
        self.cum = np.concatenate([[0.0], np.cumsum(self.seg_len)])
        self.length = float(self.cum[-1])

    def project(self, x: float, y: float) -> tuple[float, float]:
        """Return ``(arc_position, signed_lateral_offset)``; left is positive."""
        rel = np.array([x, y]) - self.start
        t = np.clip(np.einsum("ij,ij->i", rel, self.delta) / self.chord2, 0.0, 1.0)
        foot = self.start + t[:, None] * self.delta
        d2 = np.sum((np.array([x, y]) - foot) ** 2, axis=1)
        k = int(np.argmin(d2))
        dx, dy = self.delta[k]
        rx, ry = rel[k]
        cross = dx * ry - dy * rx
        dist = math.sqrt(d2[k])
        offset = math.copysign(dist, cross) if cross != 0 else 0.0
        return float(self.cum[k] + t[k] * self.seg_len[k]), offset

    def point_at(self, s: float) -> tuple[float, float]:
        if s >= self.length:
            end = self.road.poses[-1]
            extra = s - self.length
            return end.x + extra * math.cos(end.heading), end.y + extra * math.sin(end.heading)
        s = max(s, 0.0)
        k = min(int(np.searchsorted(self.cum, s, side="right")) - 1, len(self.seg_len) - 1)
        t = (s - self.cum[k]) / self.seg_len[k]
        px, py = self.start[k] + t * self.delta[k]
        return float(px), float(py)

    def curvature_at(self, s: float) -> float:
        if s >= self.length or s < 0:
            return 0.0
        k = min(int(np.searchsorted(self.cum, s, side="right")) - 1, len(self.seg_len) - 1)
        return float(self.seg_curv[k])


def oob_threshold(lane_width: float, car_width: float, tolerance: float) -> float:
    return lane_width / 2.0 - car_width / 2.0 + tolerance * car_width


def detect_oob(state: VehicleState, road: CartesianRoad, tolerance: float = 0.3,
               car_width: float = 2.0, centerline: Optional[Centerline] = None) -> Optional[float]:
    """Signed lateral offset if the vehicle is out of bounds, else ``None``."""
    if not 0.0 <= tolerance <= 1.0:
        raise ValueError("tolerance must lie in [0, 1]")
    line = centerline or Centerline(road)
    _, offset = line.project(state.pose.x, state.pose.y)
    return offset_oob(offset, road.lane_width, car_width, tolerance)


def offset_oob(offset: float, lane_width: float, car_width: float, tolerance: float) -> Optional[float]:
    if abs(offset) > oob_threshold(lane_width, car_width, tolerance):
        return offset
    return None


def _advance(x, y, heading, curvature, distance):
    turn = curvature * distance
    if abs(curvature) < 1e-12:
        chord = distance
    else:
        chord = 2.0 * math.sin(turn / 2.0) / curvature
    mid = heading + turn / 2.0
    return x + chord * math.cos(mid), y + chord * math.sin(mid), heading + turn


def simulate(road: CartesianRoad, config: AgentConfig = AgentConfig()) -> SimulationTrace:
    line = Centerline(road)
    if line.length < config.lookahead:
        raise SimulationError(
            f"road length {line.length:.3f} m is shorter than lookahead {config.lookahead} m"
        )
    start = road.poses[0]
    x, y, heading = start.x, start.y, start.heading
    v = config.v_max
    dt = config.timestep
    threshold = oob_threshold(road.lane_width, config.car_width, config.tolerance)

    states: list[VehicleState] = []
    events: list[OOBEvent] = []
    s_proj = 0.0
    for _ in range(config.max_steps):
        s_here, _ = line.project(x, y)
        target_s = s_here + config.lookahead
        tx, ty = line.point_at(target_s)
        alpha = math.atan2(ty - y, tx - x) - heading
        dist = math.hypot(tx - x, ty - y)
        k_cmd = 2.0 * math.sin(alpha) / dist
        steer = max(-config.max_steer, min(config.max_steer, math.atan(config.wheelbase * k_cmd)))

        kappa_ahead = abs(line.curvature_at(target_s))
        v_target = config.v_max
        if kappa_ahead > 0:
            v_target = min(v_target, math.sqrt(config.max_lateral_accel / kappa_ahead))
        dv = max(-config.max_decel * dt, min(config.max_accel * dt, v_target - v))
        v = min(config.v_max, max(0.0, v + dv))

        k_path = math.tan(steer) / config.wheelbase
        if v > 0:
            k_limit = config.grip / (v * v)
            k_path = max(-k_limit, min(k_limit, k_path))
        x, y, heading = _advance(x, y, heading, k_path, v * dt)

        s_proj, offset = line.project(x, y)
        states.append(VehicleState(Pose(x, y, heading), v))
        if abs(offset) > threshold:
            events.append(OOBEvent(len(states) - 1, offset, s_proj))
            break
        if s_proj >= line.length - 1e-9:
            break
    return SimulationTrace(tuple(states), tuple(events), dt, s_proj)


def label(genome: RoadGenome, trace: SimulationTrace) -> LabeledRoad:
    """Mark the genome point nearest to every OOB event (ties to lower index)."""
    labels = np.zeros(len(genome), dtype=bool)
    for event in trace.oob_events:
        labels[int(np.argmin(np.abs(genome.arc_lengths - event.arc_position)))] = True
    return LabeledRoad(genome, labels)


def simulate_many(roads: Sequence[CartesianRoad], config: AgentConfig = AgentConfig()) -> list[SimulationTrace]:
    return [simulate(r, config) for r in roads]


def generate_seed_pool(n: int, rng_seed: int, config: AgentConfig = AgentConfig(),
                       ga_config=None) -> list[LabeledRoad]:
    """Sample, smooth, validate, simulate and label ``n`` random roads."""
    from roadgen.evolution import GAConfig, init_random
    from roadgen.geometry import reconstruct

    if n < 1:
        raise ValueError("n must be positive")
    ga_config = ga_config or GAConfig()
    rng = np.random.default_rng(rng_seed)
    genomes = init_random(n, rng, ga_config)
    return [label(g, simulate(reconstruct(g), config)) for g in genomes]
