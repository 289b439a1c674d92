"""Bundled scenario suites.

``table1`` has 175 scenarios in six families:

====================  =====  ==================================================
family                count  layout
====================  =====  ==================================================
static                72     3x3 positions, 8 headings (multiples of pi/4)
line                  48     8 lines, both directions, 0.5 / 0.8 / 1.0 m/s
ellipse               18     N in 1..16, 18, 20 vehicles, evenly spaced
eight                 18     same N, as one platoon on a lying figure eight
clusters              7      vehicles-clusters 3-1 4-2 6-3 9-5 11-7 16-9 20-11
two_vehicle           12     right-hand, left-hand, parallel at 3 speeds;
                             passing a parked vehicle at 3 angles
====================  =====  ==================================================

Scenario length is the ID initiation window of the slowest ID in the scene
plus ``MEASURE_FRAMES``, or the time to drive the path, whichever is longer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .simulator import Scenario, _eight

FRAME_RATE = 50.0
MEASURE_FRAMES = 50
LATENCY_FRAMES = 250
CLUSTER_LAYOUTS = ((3, 1), (4, 2), (6, 3), (9, 5), (11, 7), (16, 9), (20, 11))
FLEET_SIZES = tuple(range(1, 17)) + (18, 20)
LINE_SPEEDS = (0.5, 0.8, 1.0)
LATENCY_COUNTS = (3, 16, 20)

STATIC_X = (1.0, 2.25, 3.5)
STATIC_Y = (0.8, 2.0, 3.2)
HEADINGS = tuple(k * math.pi / 4 for k in (0, 1, -1, 2, -2, 3, -3, 4))

LINES = (
    ((0.75, 2.0), (3.75, 2.0)),
    ((0.75, 1.0), (3.75, 1.0)),
    ((0.75, 3.0), (3.75, 3.0)),
    ((2.25, 0.5), (2.25, 3.5)),
    ((1.2, 0.5), (1.2, 3.5)),
    ((3.3, 0.5), (3.3, 3.5)),
    ((0.75, 0.5), (3.75, 3.5)),
    ((0.75, 3.5), (3.75, 0.5)),
)

EIGHT_AXES = (1.8, 2.8)
LANE_OFFSET = 0.15


def initiation_frames(max_id: int) -> int:
    """Frames needed to see two whole on-runs of the slowest ID, worst case."""
    n = 2 + 3 * max_id
    return 5 * n + 1


def _frames(vehicle_ids, drive_seconds: float = 0.0) -> int:
    need = initiation_frames(max(vehicle_ids)) + MEASURE_FRAMES
    return max(need, int(math.ceil(drive_seconds * FRAME_RATE)) + 1)


def _scenario(name, kind, ids, speed=0.0, drive_seconds=0.0, **params) -> Scenario:
    frames = _frames(ids, drive_seconds)
    return Scenario(name, kind, len(ids), speed, frames / FRAME_RATE, FRAME_RATE, params, tuple(ids))


def _static_family() -> list[Scenario]:
    out = []
    k = 0
    for x in STATIC_X:
        for y in STATIC_Y:
            for yaw in HEADINGS:
                out.append(_scenario(f"static_{k:02d}", "static_grid", [k % 4], poses=[[x, y, yaw]]))
                k += 1
    return out


def _line_family() -> list[Scenario]:
    out = []
    k = 0
    for li, (a, b) in enumerate(LINES):
        for direction, (p0, p1) in enumerate(((a, b), (b, a))):
            length = math.dist(p0, p1)
            for v in LINE_SPEEDS:
                out.append(_scenario(f"line_{li}{'ab'[direction]}_{v:.1f}", "straight_line", [k % 4], v,
                                     length / v, start=list(p0), end=list(p1)))
                k += 1
    return out


def _fleet_family() -> list[Scenario]:
    out = []
    for n in FLEET_SIZES:
        out.append(_scenario(f"ellipse_{n:02d}", "ellipse", list(range(n)), 0.8,
                             center=[2.25, 2.0], semi_axes=[1.7, 1.5]))
    loop = _eight((2.25, 2.0), EIGHT_AXES).length
    for n in FLEET_SIZES:
        # one platoon shorter than half the loop never meets itself at the crossing
        gap = min(0.3, (loop / 2 - 0.6) / max(n - 1, 1))
        out.append(_scenario(f"eight_{n:02d}", "figure_eight", list(range(n)), 0.8,
                             center=[2.25, 2.0], semi_axes=list(EIGHT_AXES), gap=gap, start=0.3))
    return out


def _cluster_family() -> list[Scenario]:
    return [_scenario(f"clusters_{n:02d}_{c:02d}", "clusters", list(range(n)), clusters=c)
            for n, c in CLUSTER_LAYOUTS]


def _two_vehicle_family() -> list[Scenario]:
    out = []
    y0, y1 = 2.0 - LANE_OFFSET, 2.0 + LANE_OFFSET
    x0, x1 = 0.5, 4.0
    cases = {
        "right_hand": [[x0, y0, x1, y0], [x1, y1, x0, y1]],
        "left_hand": [[x0, y1, x1, y1], [x1, y0, x0, y0]],
        "parallel": [[x0, y0, x1, y0], [x0, y1, x1, y1]],
    }
    for name, lines in cases.items():
        for v in LINE_SPEEDS:
            out.append(_scenario(f"two_{name}_{v:.1f}", "straight_line", [0, 1], v, (x1 - x0) / v,
                                 lines=lines))
    for deg in (0, 45, 90):
        parked = [[2.25, 2.0, math.radians(deg)]]
        lane = 2.0 - 0.3
        out.append(_scenario(f"two_passing_{deg:02d}", "straight_line", [0, 1], 0.8, (x1 - x0) / 0.8,
                             lines=[[x0, lane, x1, lane]], parked=parked))
    return out


def table1_suite() -> list[Scenario]:
    suite = (_static_family() + _line_family() + _fleet_family() + _cluster_family()
             + _two_vehicle_family())
    assert len(suite) == 175
    return suite


@dataclass(frozen=True)
class LatencyCase:
    case: str            # "average" (clusters) or "worst" (platoon)
    vehicles: int
    clusters: int
    scenario: Scenario


def latency_suite(frames: int = LATENCY_FRAMES) -> list[LatencyCase]:
    layout = dict(CLUSTER_LAYOUTS)
    out = []
    for n in LATENCY_COUNTS:
        c = layout[n]
        ids = tuple(range(n))
        out.append(LatencyCase("average", n, c, Scenario(
            f"latency_clusters_{n:02d}", "clusters", n, 0.0, frames / FRAME_RATE, FRAME_RATE,
            {"clusters": c}, ids)))
        out.append(LatencyCase("worst", n, 1, Scenario(
            f"latency_platoon_{n:02d}", "platoon", n, 0.5, frames / FRAME_RATE, FRAME_RATE,
            {"center": [2.25, 2.0], "semi_axes": [1.7, 1.5]}, ids)))
    return out


def manifest() -> list[dict]:
    rows = []
    for sc in table1_suite():
        rows.append({"name": sc.name, "kind": sc.kind, "vehicles": sc.vehicle_count,
                     "speed": sc.speed, "frames": sc.frame_count})
    return rows
