"""Compute Pose: identification-LED filtering, back-pair labeling, median of the
three pair headings and the back-midpoint shift.

Scalar functions operate on one vehicle; :func:`estimate_poses` is the same
math vectorized over a batch of labeled vehicles and is what the pipeline runs.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import GeometryError
from .geometry import Pose, VehicleGeometry, normalize_angle, rotation

_PAIRS = tuple(itertools.combinations(range(3), 2))


def id_led_index(points) -> int:
    """Index of the identification LED among 4 vehicle points: the point with
    the smallest sum of distances to the other three."""
    pts = np.asarray(points, dtype=float)
    if pts.shape != (4, 2):
        raise GeometryError("expected 4 points")
    d = np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1))
    sums = d.sum(axis=1)
    order = np.argsort(sums, kind="stable")
    if sums[order[1]] - sums[order[0]] <= 1e-9:
        raise GeometryError("identification LED is ambiguous: distance sums tie")
    return int(order[0])


def split_id_led(points) -> tuple[np.ndarray, np.ndarray]:
    """Split 4 points into (3 positioning points, identification point)."""
    pts = np.asarray(points, dtype=float)
    k = id_led_index(pts)
    return np.delete(pts, k, axis=0), pts[k]


def back_labels(points, geom: VehicleGeometry) -> tuple[int, int, int]:
    """Indices (back_left, back_right, front) within 3 positioning points."""
    pts = np.asarray(points, dtype=float)
    if pts.shape != (3, 2):
        raise GeometryError("expected 3 points")
    backs = [(i, j) for i, j in _PAIRS
             if abs(np.linalg.norm(pts[i] - pts[j]) - geom.vehicle_width) <= geom.tolerance]
    if len(backs) != 1:
        raise GeometryError(f"expected exactly one back pair, found {len(backs)}")
    a, b = backs[0]
    f = 3 - a - b
    mid = (pts[a] + pts[b]) / 2.0
    fwd, side = pts[f] - mid, pts[a] - mid
    cross = fwd[0] * side[1] - fwd[1] * side[0]
    if cross == 0.0:
        raise GeometryError("front LED is collinear with the back pair")
    if math.copysign(1.0, cross) != geom.left_sign:
        a, b = b, a
    return a, b, f


def classify_back(points, geom: VehicleGeometry) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (back_left, back_right, front) points."""
    pts = np.asarray(points, dtype=float)
    a, b, f = back_labels(pts, geom)
    return pts[a], pts[b], pts[f]


def _offsets(geom: VehicleGeometry) -> np.ndarray:
    return np.array([geom.pair_offsets[p] for p in _PAIRS])


def _circular_median3(c: np.ndarray) -> np.ndarray:
    # Unwrap around the first candidate, then take the middle value.
    d = normalize_angle(c - c[..., :1])
    return normalize_angle(c[..., 0] + np.sort(d, axis=-1)[..., 1])


def pair_headings(back_left, back_right, front, geom: VehicleGeometry) -> np.ndarray:
    """Heading candidate from each LED pair (bl-br, bl-f, br-f)."""
    pts = np.array([back_left, back_right, front], dtype=float)
    ang = np.array([math.atan2(*(pts[j] - pts[i])[::-1]) for i, j in _PAIRS])
    return normalize_angle(ang + _offsets(geom))


def estimate_orientation(back_left, back_right, front, geom: VehicleGeometry) -> float:
    return float(_circular_median3(pair_headings(back_left, back_right, front, geom)))


def estimate_position(back_left, back_right, yaw: float, geom: VehicleGeometry) -> np.ndarray:
    mid = (np.asarray(back_left, dtype=float) + np.asarray(back_right, dtype=float)) / 2.0
    return mid - rotation(yaw) @ geom.back_midpoint


def label_vehicle(points, geom: VehicleGeometry) -> tuple[tuple[int, int, int], int | None]:
    """Role indices ((back_left, back_right, front), id_led or None) of 3 or 4 points."""
    pts = np.asarray(points, dtype=float)
    if len(pts) == 4:
        k = id_led_index(pts)
        rest = [i for i in range(4) if i != k]
        a, b, f = back_labels(pts[rest], geom)
        return (rest[a], rest[b], rest[f]), k
    if len(pts) == 3:
        return back_labels(pts, geom), None
    raise GeometryError(f"a vehicle has 3 or 4 points, got {len(pts)}")


def estimate_pose(points, geom: VehicleGeometry) -> Pose:
    """Pose of one vehicle from its current-frame points (3 or 4)."""
    pts = np.asarray(points, dtype=float)
    (a, b, f), _ = label_vehicle(pts, geom)
    yaw = estimate_orientation(pts[a], pts[b], pts[f], geom)
    x, y = estimate_position(pts[a], pts[b], yaw, geom)
    return Pose(float(x), float(y), yaw)


def estimate_poses(labeled: np.ndarray, geom: VehicleGeometry) -> np.ndarray:
    """Vectorized poses for labeled vehicles.

    ``labeled`` has shape (N, 3, 2) in order back_left, back_right, front.
    Returns an (N, 3) array of x, y, yaw.
    """
    p = np.asarray(labeled, dtype=float).reshape(-1, 3, 2)
    i = np.array([a for a, _ in _PAIRS])
    j = np.array([b for _, b in _PAIRS])
    d = p[:, j, :] - p[:, i, :]
    cand = normalize_angle(np.arctan2(d[..., 1], d[..., 0]) + _offsets(geom))
    yaw = _circular_median3(cand) if len(p) else np.zeros(0)
    mid = (p[:, 0, :] + p[:, 1, :]) / 2.0
    c, s = np.cos(yaw), np.sin(yaw)
    gx, gy = geom.back_midpoint
    x = mid[:, 0] - (c * gx - s * gy)
    y = mid[:, 1] - (s * gx + c * gy)
    return np.column_stack([x, y, yaw])
