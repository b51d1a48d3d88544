"""SVG rendering of a road, optionally with the driven trace and its OOB points.

Coordinates are metres; the y axis is flipped so the picture reads like a map.
Output depends only on the inputs, so identical inputs give identical bytes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional
from xml.sax.saxutils import escape

import numpy as np

from roadgen.geometry import CartesianRoad

LANE_COLOR = "grey"
CENTER_COLOR = "black"
TRACE_COLOR = "green"
OOB_COLOR = "red"
MARGIN = 5.0


def _fmt(v: float) -> str:
    out = f"{v:.4f}".rstrip("0").rstrip(".")
    return "0" if out in ("-0", "") else out


def _points_attr(xy: np.ndarray) -> str:
    return " ".join(f"{_fmt(x)},{_fmt(-y)}" for x, y in xy)


def lane_boundaries(road: CartesianRoad) -> tuple[np.ndarray, np.ndarray]:
    """Left and right lane edges, offset half a lane along each pose normal."""
    pts = road.points
    h = road.headings
    normal = np.stack([-np.sin(h), np.cos(h)], axis=1)
    half = road.lane_width / 2.0
    return pts + half * normal, pts - half * normal


def render(road: CartesianRoad, result: Optional[dict] = None, title: str = "") -> str:
    left, right = lane_boundaries(road)
    clouds = [left, right]
    trace = np.empty((0, 2))
    events = []
    if result is not None:
        trace = np.asarray(result.get("trace", []), dtype=float).reshape(-1, 2)
        events = [(float(e["x"]), float(e["y"])) for e in result.get("oob_events", [])]
        clouds.append(trace)
        if events:
            clouds.append(np.array(events))
    allpts = np.concatenate(clouds)
    xmin, ymin = allpts.min(axis=0) - MARGIN
    xmax, ymax = allpts.max(axis=0) + MARGIN
    w, h = xmax - xmin, ymax - ymin

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{_fmt(xmin)} {_fmt(-ymax)} {_fmt(w)} {_fmt(h)}" '
        f'width="{_fmt(w * 4)}" height="{_fmt(h * 4)}">',
    ]
    if title:
        lines.append(f"<title>{escape(title)}</title>")
    for name, edge in (("left", left), ("right", right)):
        lines.append(f'<polyline class="lane-boundary {name}" fill="none" stroke="{LANE_COLOR}" '
                     f'stroke-width="0.3" points="{_points_attr(edge)}"/>')
    lines.append(f'<polyline class="centerline" fill="none" stroke="{CENTER_COLOR}" stroke-width="0.1" '
                 f'stroke-dasharray="1,1" points="{_points_attr(road.points)}"/>')
    if len(trace):
        lines.append(f'<polyline class="trace" fill="none" stroke="{TRACE_COLOR}" stroke-width="0.2" '
                     f'points="{_points_attr(trace)}"/>')
    for x, y in events:
        lines.append(f'<circle class="oob" cx="{_fmt(x)}" cy="{_fmt(-y)}" r="0.8" fill="{OOB_COLOR}"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_svg(path, road: CartesianRoad, result: Optional[dict] = None, title: str = "") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render(road, result, title), encoding="utf-8")
