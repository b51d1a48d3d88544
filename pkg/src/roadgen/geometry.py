"""Frenet-space roads: encoding, planar reconstruction, smoothing, validity.

A road is a sequence of constant-curvature pieces.  Point ``i`` of a genome
carries the signed curvature ``c_i`` of the piece ending at cumulative arc
length ``s_i``; positive curvature turns left.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from roadgen.spline import smoothing_spline

BLOCK_SIZE = 50
STEP = 1.0
LANE_WIDTH = 4.0
MAP_SIZE = 200.0
CURVATURE_LIMIT = 0.1
STRAIGHT_EPS = 1e-9


class GenomeError(ValueError):
    """Raised when a genome violates its structural invariants."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RoadGenome:
    curvatures: np.ndarray
    arc_lengths: np.ndarray

    def __post_init__(self):
        c = _frozen(self.curvatures)
        s = _frozen(self.arc_lengths)
        if c.ndim != 1 or c.shape != s.shape:
            raise GenomeError("curvatures and arc_lengths must be 1-d and equal length")
        if c.size == 0:
            raise GenomeError("genome must contain at least one point")
        if not np.all(np.isfinite(c)) or not np.all(np.isfinite(s)):
            raise GenomeError("genome values must be finite")
        if s[0] <= 0 or np.any(np.diff(s) <= 0):
            raise GenomeError("arc lengths must be positive and strictly increasing")
        object.__setattr__(self, "curvatures", c)
        object.__setattr__(self, "arc_lengths", s)

    @classmethod
    def from_curvatures(cls, curvatures: Sequence[float], step: float = STEP) -> "RoadGenome":
        c = np.asarray(curvatures, dtype=float)
        return cls(c, step * np.arange(1, c.size + 1))

    @property
    def steps(self) -> np.ndarray:
        """Arc-length increments; the first piece starts at s = 0."""
        return np.diff(self.arc_lengths, prepend=0.0)

    @property
    def length(self) -> float:
        return float(self.arc_lengths[-1])

    def __len__(self) -> int:
        return self.curvatures.size

    def with_curvatures(self, curvatures: Sequence[float]) -> "RoadGenome":
        return RoadGenome(curvatures, self.arc_lengths)

    def __eq__(self, other):
        if not isinstance(other, RoadGenome):
            return NotImplemented
        return np.array_equal(self.curvatures, other.curvatures) and np.array_equal(
            self.arc_lengths, other.arc_lengths
        )

    def __hash__(self):
        return hash((self.curvatures.tobytes(), self.arc_lengths.tobytes()))


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_angle(self.heading))

    @property
    def tangent(self) -> tuple[float, float]:
        return math.cos(self.heading), math.sin(self.heading)

    @property
    def normal(self) -> tuple[float, float]:
        return -math.sin(self.heading), math.cos(self.heading)


@dataclass(frozen=True, eq=False)
class CartesianRoad:
    poses: tuple[Pose, ...]
    lane_width: float = LANE_WIDTH

    @property
    def points(self) -> np.ndarray:
        return np.array([(p.x, p.y) for p in self.poses])

    @property
    def headings(self) -> np.ndarray:
        return np.array([p.heading for p in self.poses])

    def segment_lengths(self) -> np.ndarray:
        """Arc length of each piece, recovered exactly from chord and turn."""
        chords = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        turn = np.array([normalize_angle(t) for t in np.diff(self.headings)])
        half = np.abs(turn) / 2.0
        ratio = np.ones_like(half)
        bent = half > 1e-12
        ratio[bent] = half[bent] / np.sin(half[bent])
        return chords * ratio

    def segment_curvatures(self) -> np.ndarray:
        turn = np.array([normalize_angle(t) for t in np.diff(self.headings)])
        return turn / self.segment_lengths()


class Violation(enum.Enum):
    SELF_INTERSECTING = "SelfIntersecting"
    CURVATURE_OUT_OF_RANGE = "CurvatureOutOfRange"
    OUT_OF_MAP_BOUNDS = "OutOfMapBounds"


@dataclass(frozen=True)
class ValidityReport:
    violations: frozenset = field(default_factory=frozenset)

    @property
    def valid(self) -> bool:
        return not self.violations


def reconstruct(genome: RoadGenome, start: Pose = Pose(0.0, 0.0, 0.0),
                lane_width: float = LANE_WIDTH) -> CartesianRoad:
    """Integrate the piecewise-constant curvature profile in closed form."""
    x, y, theta = start.x, start.y, start.heading
    poses = [start]
    for c, ds in zip(genome.curvatures, genome.steps):
        turn = c * ds
        if abs(c) < STRAIGHT_EPS:
            chord = ds
        else:
            chord = 2.0 * math.sin(turn / 2.0) / c
        direction = theta + turn / 2.0
        x += chord * math.cos(direction)
        y += chord * math.sin(direction)
        theta += turn
        poses.append(Pose(x, y, theta))
    return CartesianRoad(tuple(poses), lane_width)


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def segments_intersect(points: np.ndarray) -> np.ndarray:
    """Boolean matrix ``M[i, j]``: chord i meets chord j (closed segments).

    Adjacent chords share a vertex by construction and are reported False.
    """
    p = np.asarray(points, dtype=float)
    a, b = p[:-1], p[1:]
    n = a.shape[0]
    ax, ay = a[:, 0][:, None], a[:, 1][:, None]
    bx, by = b[:, 0][:, None], b[:, 1][:, None]
    cx, cy = a[:, 0][None, :], a[:, 1][None, :]
    dx, dy = b[:, 0][None, :], b[:, 1][None, :]

    o1 = _orient(ax, ay, bx, by, cx, cy)
    o2 = _orient(ax, ay, bx, by, dx, dy)
    o3 = _orient(cx, cy, dx, dy, ax, ay)
    o4 = _orient(cx, cy, dx, dy, bx, by)
    proper = (np.sign(o1) * np.sign(o2) < 0) & (np.sign(o3) * np.sign(o4) < 0)

    def on_seg(px, py, qx, qy, rx, ry, o):
        # r lies on segment pq given orientation o == 0
        return (o == 0) & (np.minimum(px, qx) <= rx) & (rx <= np.maximum(px, qx)) & (
            np.minimum(py, qy) <= ry) & (ry <= np.maximum(py, qy))

    touch = (
        on_seg(ax, ay, bx, by, cx, cy, o1)
        | on_seg(ax, ay, bx, by, dx, dy, o2)
        | on_seg(cx, cy, dx, dy, ax, ay, o3)
        | on_seg(cx, cy, dx, dy, bx, by, o4)
    )
    hit = proper | touch
    idx = np.arange(n)
    hit[np.abs(idx[:, None] - idx[None, :]) < 2] = False
    return hit


def is_self_intersecting(road: CartesianRoad) -> bool:
    return bool(segments_intersect(road.points).any())


def validate(road: CartesianRoad, genome: RoadGenome, map_size: float = MAP_SIZE,
             curvature_limit: float = CURVATURE_LIMIT) -> ValidityReport:
    violations = set()
    if is_self_intersecting(road):
        violations.add(Violation.SELF_INTERSECTING)
    if np.any(np.abs(genome.curvatures) > curvature_limit):
        violations.add(Violation.CURVATURE_OUT_OF_RANGE)
    pts = road.points
    extent = pts.max(axis=0) - pts.min(axis=0)
    if np.any(extent > map_size):
        violations.add(Violation.OUT_OF_MAP_BOUNDS)
    return ValidityReport(frozenset(violations))


def is_valid(genome: RoadGenome, map_size: float = MAP_SIZE) -> bool:
    return validate(reconstruct(genome), genome, map_size).valid


def smooth(genome: RoadGenome, factor: float = 0.01) -> RoadGenome:
    """Smooth the curvature-vs-arc-length profile; arc lengths are kept."""
    fit = smoothing_spline(genome.arc_lengths, genome.curvatures, factor)
    return genome.with_curvatures(fit.values)


def genome_distance(a: RoadGenome, b: RoadGenome) -> float:
    if len(a) != len(b):
        raise GenomeError(f"length mismatch: {len(a)} != {len(b)}")
    return float(np.linalg.norm(a.curvatures - b.curvatures))


def distance_matrix(genomes: Sequence[RoadGenome],
                    others: Sequence[RoadGenome] | None = None) -> np.ndarray:
    """Pairwise curvature-space distances (rows: ``genomes``)."""
    a = np.stack([g.curvatures for g in genomes])
    b = a if others is None else np.stack([g.curvatures for g in others])
    return cdist(a, b)
