import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ledips.errors import GeometryError
from ledips.geometry import Pose, VehicleGeometry, angle_diff, body_to_world, rotation
from ledips.pose import (back_labels, classify_back, estimate_orientation, estimate_pose, estimate_poses,
                         estimate_position, id_led_index, label_vehicle, pair_headings, split_id_led)

G = VehicleGeometry()
TAU = G.tolerance
yaws = st.floats(-math.pi, math.pi)
xs = st.floats(0.3, 4.2)
ys = st.floats(0.3, 3.7)


def leds(x, y, yaw):
    return G.world_leds(Pose(x, y, yaw))


def test_split_exact_geometry():
    pts = leds(0, 0, 0)
    rest, idp = split_id_led(pts)
    assert np.array_equal(idp, pts[3]) and np.array_equal(rest, pts[:3])


@given(xs, ys, yaws, st.permutations(range(4)))
def test_split_under_rigid_transform_and_shuffle(x, y, yaw, perm):
    pts = leds(x, y, yaw)[list(perm)]
    assert perm[id_led_index(pts)] == 3


def test_split_survives_quarter_tolerance_noise():
    # Each point moves at most sqrt(2)*tau/4, so a distance moves at most twice
    # that and a difference of two distance sums at most 6 times that.
    margin = min(G.distance_sums[:3]) - G.distance_sums[3]
    assert margin > 6 * 2 * math.sqrt(2) * TAU / 4
    r = np.random.default_rng(4)
    for _ in range(2000):
        pts = leds(*r.uniform([0.5, 0.5, -math.pi], [4, 3.5, math.pi]))
        pts += r.uniform(-TAU / 4, TAU / 4, pts.shape)
        assert id_led_index(pts) == 3


def test_split_tie_is_an_error():
    square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    with pytest.raises(GeometryError):
        id_led_index(square)


def test_classify_back_yaw_zero():
    pts = leds(1, 1, 0)[:3]
    bl, br, f = classify_back(pts[[2, 0, 1]], G)
    assert np.array_equal(bl, pts[0]) and np.array_equal(br, pts[1]) and np.array_equal(f, pts[2])


def test_classify_back_reversed_vehicle():
    pts = leds(1, 1, math.pi)[:3]
    bl, br, f = classify_back(pts, G)
    # reversed: body-left now has the smaller world y
    assert bl[1] < br[1]
    assert np.array_equal(bl, pts[0]) and np.array_equal(br, pts[1])


def test_equilateral_is_rejected():
    s = G.vehicle_width
    tri = np.array([[0.0, 0.0], [s, 0.0], [s / 2, s * math.sqrt(3) / 2]])
    with pytest.raises(GeometryError):
        back_labels(tri, G)


def test_orientation_examples():
    p = leds(1, 1, 0)
    assert abs(estimate_orientation(p[0], p[1], p[2], G)) < 1e-12
    p = leds(2, 2, 2.0)
    assert abs(estimate_orientation(p[0], p[1], p[2], G) - 2.0) < 1e-9


def test_orientation_one_pair_outlier():
    bl, br, f = leds(2.0, 2.0, 0.7)[:3]
    # push the front along the bl-front line: only the br-front pair is hit
    u = (f - bl) / np.linalg.norm(f - bl)
    bad = f + 3 * TAU * u
    h = pair_headings(bl, br, bad, G)
    clean = h[[0, 1]]
    assert abs(h[2] - 0.7) > 0.01
    est = estimate_orientation(bl, br, bad, G)
    assert min(clean) - 1e-12 <= est <= max(clean) + 1e-12


@given(xs, ys, yaws, st.integers(0, 2), st.integers(0, 1), st.floats(-5 * TAU, 5 * TAU),
       st.integers(0, 2 ** 32 - 1))
def test_median_robustness(x, y, yaw, point, which, offset, seed):
    pts = leds(x, y, yaw)[:3].copy()
    pts += np.random.default_rng(seed).normal(0, TAU / 20, pts.shape)
    # move one point along the line to one of its pair mates; that pair's
    # heading is untouched and the other pair through this point absorbs it
    mates = [k for k in range(3) if k != point]
    keep = mates[which]
    u = (pts[point] - pts[keep]) / np.linalg.norm(pts[point] - pts[keep])
    pts[point] = pts[point] + offset * u
    h = pair_headings(*pts, G)
    pair_ids = [(0, 1), (0, 2), (1, 2)]
    dirty = pair_ids.index(tuple(sorted((point, mates[1 - which]))))
    clean = [h[i] for i in range(3) if i != dirty]
    est = estimate_orientation(*pts, G)
    worst = max(abs(angle_diff(c, yaw)) for c in clean)
    assert abs(angle_diff(est, yaw)) <= worst + 1e-12


def test_orientation_wraps_at_pi():
    for yaw in (math.pi, -math.pi + 1e-9, math.pi - 1e-9):
        p = leds(2, 2, yaw)
        assert abs(angle_diff(estimate_orientation(p[0], p[1], p[2], G), yaw)) < 1e-9


def test_position_examples():
    p = leds(1, 1, 0)
    assert np.abs(estimate_position(p[0], p[1], 0.0, G) - (1, 1)).max() < 1e-12
    p = leds(2, 3, math.pi / 3)
    assert np.abs(estimate_position(p[0], p[1], math.pi / 3, G) - (2, 3)).max() < 1e-9
    d = 0.004 * (p[0] - p[1]) / np.linalg.norm(p[0] - p[1])
    assert np.abs(estimate_position(p[0] + d, p[1] - d, math.pi / 3, G) - (2, 3)).max() < 1e-12


def test_estimate_pose_forward_oracle():
    r = np.random.default_rng(9)
    for _ in range(1000):
        x, y, yaw = r.uniform([0.3, 0.3, -math.pi], [4.2, 3.7, math.pi])
        pts = leds(x, y, yaw)
        use = pts if r.random() < 0.5 else pts[:3]
        pose = estimate_pose(r.permutation(use), G)
        assert math.hypot(pose.x - x, pose.y - y) < 1e-9
        assert abs(angle_diff(pose.yaw, yaw)) < 1e-9


@given(xs, ys, yaws, yaws, st.floats(-2, 2), st.floats(-2, 2))
def test_equivariance(x, y, yaw, theta, tx, ty):
    pts = leds(x, y, yaw)
    p0 = estimate_pose(pts, G)
    moved = body_to_world(Pose(tx, ty, theta), pts)
    p1 = estimate_pose(moved, G)
    want = rotation(theta) @ np.array([p0.x, p0.y]) + (tx, ty)
    assert np.abs(np.array([p1.x, p1.y]) - want).max() < 1e-9
    assert abs(angle_diff(p1.yaw, p0.yaw + theta)) < 1e-9


def test_batched_matches_scalar():
    r = np.random.default_rng(1)
    labeled, scalar = [], []
    for _ in range(200):
        pts = leds(*r.uniform([0.3, 0.3, -math.pi], [4.2, 3.7, math.pi]))
        pts[:3] += r.normal(0, 0.001, (3, 2))
        labeled.append(pts[:3])
        p = estimate_pose(pts[:3], G)
        scalar.append((p.x, p.y, p.yaw))
    batch = estimate_poses(np.array(labeled), G)
    assert np.abs(batch[:, :2] - np.array(scalar)[:, :2]).max() < 1e-12
    assert np.abs(angle_diff(batch[:, 2], np.array(scalar)[:, 2])).max() < 1e-12
    assert estimate_poses(np.zeros((0, 3, 2)), G).shape == (0, 3)


def test_label_vehicle_sizes():
    with pytest.raises(GeometryError):
        label_vehicle(np.zeros((2, 2)), G)
    (a, b, f), k = label_vehicle(leds(1, 1, 0.2)[[3, 2, 1, 0]], G)
    assert (a, b, f, k) == (3, 2, 1, 0)
