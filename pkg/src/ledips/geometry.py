"""Planar geometry shared by every stage: poses, the ground-plane camera model
and the LED layout of a vehicle.

Conventions
-----------
World frame: map plane in meters, origin at a map corner, x along the 4.5 m
edge, y along the 4.0 m edge. Body frame: vehicle midpoint at the origin,
x pointing forward. Image frame: pixel (i, j) has its center at u = i, v = j.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import GeometryError, ProjectionError

MAP_WIDTH = 4.5
MAP_HEIGHT = 4.0

# Homogeneous w below this magnitude is treated as a point at infinity.
_W_EPS = 1e-12


def normalize_angle(angle):
    """Wrap an angle (scalar or array) into (-pi, pi]."""
    if np.ndim(angle) == 0:
        a = math.remainder(float(angle), 2.0 * math.pi)
        return a + 2.0 * math.pi if a <= -math.pi else a
    a = np.remainder(np.asarray(angle, dtype=float) + math.pi, 2.0 * math.pi) - math.pi
    return np.where(a <= -math.pi, a + 2.0 * math.pi, a)


def angle_diff(a, b):
    """Signed difference a - b wrapped into (-pi, pi]."""
    return normalize_angle(np.subtract(a, b))


def on_map(p, margin: float = 0.0) -> bool:
    x, y = float(p[0]), float(p[1])
    return margin <= x <= MAP_WIDTH - margin and margin <= y <= MAP_HEIGHT - margin


@dataclass(frozen=True)
class Pose:
    """Vehicle midpoint in world coordinates and heading of the forward axis."""

    x: float
    y: float
    yaw: float

    def __post_init__(self):
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


def rotation(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s], [s, c]])


def body_to_world(pose: Pose, offset) -> np.ndarray:
    """Place body-frame offsets (shape (2,) or (N, 2)) in the world frame."""
    offset = np.asarray(offset, dtype=float)
    return offset @ rotation(pose.yaw).T + np.array([pose.x, pose.y])


def world_to_body(pose: Pose, point) -> np.ndarray:
    point = np.asarray(point, dtype=float)
    return (point - np.array([pose.x, pose.y])) @ rotation(pose.yaw)


@dataclass(frozen=True, eq=False)
class CameraCalibration:
    """Ground-plane homography mapping world (x, y, 1) to image (u, v, 1)."""

    homography: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        h = np.array(self.homography, dtype=float)
        if h.shape != (3, 3) or not np.all(np.isfinite(h)):
            raise GeometryError("homography must be a finite 3x3 matrix")
        if abs(np.linalg.det(h)) < 1e-15:
            raise GeometryError("homography is singular")
        h.setflags(write=False)
        object.__setattr__(self, "homography", h)
        inv = np.linalg.inv(h)
        inv.setflags(write=False)
        object.__setattr__(self, "_inverse", inv)

    @property
    def inverse(self) -> np.ndarray:
        return self._inverse  # type: ignore[attr-defined]

    @classmethod
    def for_map(cls, width: int = 2048, height: int = 1810,
                map_size: tuple[float, float] = (MAP_WIDTH, MAP_HEIGHT)) -> "CameraCalibration":
        """Axis-aligned scaling that makes the image cover the whole map."""
        sx = width / map_size[0]
        sy = height / map_size[1]
        h = np.array([[sx, 0.0, -0.5], [0.0, sy, -0.5], [0.0, 0.0, 1.0]])
        return cls(h, width, height)

    @property
    def meters_per_pixel(self) -> float:
        # Local scale at the map center; exact for the axis-aligned default.
        c = np.array([MAP_WIDTH / 2, MAP_HEIGHT / 2])
        a = world_to_image(self, c)
        b = world_to_image(self, c + np.array([0.01, 0.0]))
        return 0.01 / float(np.linalg.norm(b - a))


def _apply_homography(h: np.ndarray, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    single = pts.ndim == 1
    p = np.atleast_2d(pts)
    w = p[:, 0] * h[2, 0] + p[:, 1] * h[2, 1] + h[2, 2]
    if np.any(np.abs(w) < _W_EPS):
        raise ProjectionError("point maps to infinity")
    u = (p[:, 0] * h[0, 0] + p[:, 1] * h[0, 1] + h[0, 2]) / w
    v = (p[:, 0] * h[1, 0] + p[:, 1] * h[1, 1] + h[1, 2]) / w
    out = np.column_stack([u, v])
    return out[0] if single else out


def world_to_image(cal: CameraCalibration, p) -> np.ndarray:
    """Project world point(s) onto the image plane."""
    return _apply_homography(cal.homography, p)


def image_to_world(cal: CameraCalibration, q) -> np.ndarray:
    """Back-project image point(s) onto the ground plane."""
    return _apply_homography(cal.inverse, q)


def sorted_distances(pts: np.ndarray) -> np.ndarray:
    """All pairwise distances of a small point set, ascending."""
    pts = np.asarray(pts, dtype=float)
    i, j = np.triu_indices(len(pts), k=1)
    return np.sort(np.hypot(*(pts[i] - pts[j]).T))


def _cross(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _inside_triangle(p, a, b, c) -> bool:
    d1, d2, d3 = _cross(b - a, p - a), _cross(c - b, p - b), _cross(a - c, p - c)
    return (d1 > 0 and d2 > 0 and d3 > 0) or (d1 < 0 and d2 < 0 and d3 < 0)


@dataclass(frozen=True)
class VehicleGeometry:
    """Body-frame LED layout and matching tolerance.

    ``back_left``/``back_right`` are the rear LEDs, ``front`` the third
    positioning LED, ``id_led`` the flashing identification LED inside the
    triangle. All in meters, body frame.
    """

    back_left: tuple[float, float] = (-0.082, 0.017)
    back_right: tuple[float, float] = (-0.082, -0.017)
    front: tuple[float, float] = (0.082, 0.0)
    id_led: tuple[float, float] = (-0.010, 0.0)
    tolerance: float = 0.005
    validate: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        for name in ("back_left", "back_right", "front", "id_led"):
            object.__setattr__(self, name, tuple(float(c) for c in getattr(self, name)))
        if self.validate:
            self._check()

    def _check(self) -> None:
        g = self.points
        tau = self.tolerance
        if not tau > 0:
            raise GeometryError("tolerance must be positive")
        d = sorted_distances(g[:3])
        if d[-1] - d[0] < 1e-9:
            raise GeometryError("positioning triangle must not be equilateral")
        if not _inside_triangle(g[3], g[0], g[1], g[2]):
            raise GeometryError("identification LED must lie strictly inside the triangle")
        if not self.vehicle_width < self.vehicle_length:
            raise GeometryError("vehicle width must be shorter than vehicle length")
        distinct = np.unique(np.round(sorted_distances(g), 12))
        if len(distinct) > 1 and np.min(np.diff(distinct)) <= 2 * tau:
            raise GeometryError("tolerance too large: reference distances closer than 2*tolerance")
        sums = self.distance_sums
        if not np.all(sums[3] < sums[:3]):
            raise GeometryError("identification LED must have the smallest distance sum")

    @cached_property
    def points(self) -> np.ndarray:
        """Body-frame LED positions in order back_left, back_right, front, id_led."""
        pts = np.array([self.back_left, self.back_right, self.front, self.id_led])
        pts.setflags(write=False)
        return pts

    @cached_property
    def vehicle_width(self) -> float:
        return float(np.linalg.norm(self.points[0] - self.points[1]))

    @cached_property
    def vehicle_length(self) -> float:
        return float(sorted_distances(self.points)[-1])

    @cached_property
    def reference_distances(self) -> dict[int, np.ndarray]:
        """Sorted distance lists for the 3-LED and 4-LED appearance."""
        return {3: sorted_distances(self.points[:3]), 4: sorted_distances(self.points)}

    @cached_property
    def distance_sums(self) -> np.ndarray:
        g = self.points
        return np.array([sum(np.linalg.norm(g[i] - g[j]) for j in range(4) if j != i)
                         for i in range(4)])

    @cached_property
    def pair_offsets(self) -> dict[tuple[int, int], float]:
        """Angle to add to a measured LED-pair direction to get the heading.

        Pairs are ordered by body index (0 back_left, 1 back_right, 2 front).
        """
        g = self.points
        out = {}
        for i, j in itertools.combinations(range(3), 2):
            dx, dy = g[j] - g[i]
            out[(i, j)] = -math.atan2(dy, dx)
        return out

    @cached_property
    def back_midpoint(self) -> np.ndarray:
        return (self.points[0] + self.points[1]) / 2.0

    @cached_property
    def left_sign(self) -> float:
        """Sign of cross(front - back_mid, back_left - back_mid) in the body frame."""
        m = self.back_midpoint
        return math.copysign(1.0, _cross(self.points[2] - m, self.points[0] - m))

    def world_leds(self, pose: Pose) -> np.ndarray:
        return body_to_world(pose, self.points)
