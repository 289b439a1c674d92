import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ledips.assembly import (MatchKind, assemble, brute_force_assemble, build_neighbor_map,
                             check_outcome, match_step, matches_geometry, merge_duplicates,
                             resolve_conflicts, vehicle_index_sets)
from ledips.errors import OracleLimitError
from ledips.geometry import Pose, VehicleGeometry, body_to_world
from ledips.simulator import random_scene

FIXTURES = Path(__file__).parent / "fixtures"
G = VehicleGeometry()


def load_points(name):
    return np.loadtxt(FIXTURES / name)


def vehicle(x, y, yaw, leds=(0, 1, 2, 3)):
    return G.world_leds(Pose(x, y, yaw))[list(leds)]


def test_matches_geometry_tolerance_edges():
    pts = vehicle(1, 1, 0.4, (0, 1, 2))
    assert matches_geometry(pts, G)
    assert not matches_geometry(pts[:2], G)
    moved = pts.copy()
    moved[2, 0] += 0.5 * G.tolerance
    assert matches_geometry(moved, G)
    far = pts.copy()
    far[1] = far[0] + (far[1] - far[0]) * (G.vehicle_width + 1.5 * G.tolerance) / G.vehicle_width
    assert not matches_geometry(far, G)


def test_neighbor_map_exact_triangle():
    nm = build_neighbor_map(vehicle(2, 2, 0, (0, 1, 2)), G)
    assert nm.partners(0) == {1} and nm.partners(1) == {0} and nm.partners(2) == frozenset()
    assert nm.area(0) == {0, 1, 2}
    assert nm.area(2) == {0, 1, 2}


def test_no_back_pair_out_of_tolerance():
    pts = np.array([[1.0, 1.0], [1.0 + G.vehicle_width + 3 * G.tolerance, 1.0]])
    nm = build_neighbor_map(pts, G)
    assert nm.partners(0) == frozenset() and nm.partners(1) == frozenset()


def test_annulus_holds_only_the_partner():
    pts = load_points("three_vehicle_scene.txt")
    nm = build_neighbor_map(pts, G)
    assert nm.partners(1) == {0}    # the green point v2 and its mate v1
    assert [sorted(nm.partners(i)) for i in range(10)] == [[1], [0], [], [], [5], [4], [], [], [9], [8]]
    out = assemble(pts, G)
    assert vehicle_index_sets(out) == {frozenset({0, 1, 2, 3}), frozenset({4, 5, 6}), frozenset({7, 8, 9})}


def test_isolated_point_is_disturbance():
    nm = build_neighbor_map(np.array([[1.0, 1.0], [3.0, 3.0]]), G)
    assert match_step(0, nm, G).kind is MatchKind.DISTURBANCE


def test_front_point_step_finds_vehicle():
    nm = build_neighbor_map(vehicle(2, 2, 1.0, (0, 1, 2)), G)
    res = match_step(2, nm, G)
    assert res.kind is MatchKind.VEHICLE and res.members == {0, 1, 2}


def test_ambiguous_scene_steps():
    pts = load_points("ambiguous_scene.txt")
    nm = build_neighbor_map(pts, G)
    # orange back sees its own front and the green point: not yet decidable
    assert match_step(0, nm, G).kind is MatchKind.NOT_YET
    # blue back together with the green point is a vehicle
    res = match_step(4, nm, G)
    assert res.kind is MatchKind.VEHICLE and res.members == {3, 4, 5}
    assert match_step(3, nm, G).kind is MatchKind.NOT_YET


def test_ambiguous_scene_brute_force_and_assemble():
    pts = load_points("ambiguous_scene.txt")
    bf = brute_force_assemble(pts, G)
    assert bf.candidates == ((0, 1, 2), (0, 1, 3), (3, 4, 5))
    assert not bf.conflict_free
    out = assemble(pts, G)
    assert vehicle_index_sets(out) == {frozenset({0, 1, 2}), frozenset({3, 4, 5})}
    assert not out.used_fallback


def test_twenty_separated_vehicles():
    r = np.random.default_rng(2)
    # footprint larger than vehicle length plus two tolerances keeps LED sets apart
    scene = random_scene(r, 20, 0, G, footprint=(0.2, 0.2))
    out = assemble(scene.points, G)
    assert vehicle_index_sets(out) == scene.vehicle_sets()
    assert not out.disturbance and not out.unmapped


def test_five_disturbance_points():
    r = np.random.default_rng(5)
    scene = random_scene(r, 0, 5, G)
    assert not brute_force_assemble(scene.points, G).candidates
    out = assemble(scene.points, G)
    assert not out.vehicles
    assert len(out.disturbance | out.unmapped) == 5


def test_brute_force_trivia():
    assert brute_force_assemble(np.zeros((0, 2)), G).candidates == ()
    assert brute_force_assemble(vehicle(1, 1, 0.2, (0, 1, 2)), G).candidates == ((0, 1, 2),)
    with pytest.raises(OracleLimitError):
        brute_force_assemble(np.random.default_rng(0).random((31, 2)), G)


def test_brute_force_pruning_changes_nothing():
    r = np.random.default_rng(11)
    for _ in range(40):
        scene = random_scene(r, int(r.integers(1, 4)), int(r.integers(0, 6)), G, exclusive=False)
        p = scene.points
        assert brute_force_assemble(p, G, prune=True) == brute_force_assemble(p, G, prune=False)


def test_maximal_drops_nested_triangle():
    bf = brute_force_assemble(vehicle(2, 2, 0.3), G)
    # the lit vehicle plus its positioning triangle seen without the ID LED
    assert bf.candidates == ((0, 1, 2), (0, 1, 2, 3))
    assert bf.maximal() == ((0, 1, 2, 3),)


def test_resolve_conflicts_prefers_larger_then_lower():
    assert resolve_conflicts([(0, 1, 2), (0, 1, 2, 3), (4, 5, 6), (3, 7, 8)]) == [(0, 1, 2, 3), (4, 5, 6)]


def test_merge_duplicates():
    pts = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 5e-7], [1.0, 1.0 + 2e-6]])
    kept, idx = merge_duplicates(pts)
    assert idx.tolist() == [0, 1, 3]
    assert merge_duplicates(np.zeros((1, 2)))[1].tolist() == [0]


def test_fallback_resolves_stall():
    r = np.random.default_rng(3)
    for _ in range(200):
        scene = random_scene(r, int(r.integers(2, 10)), int(r.integers(0, 20)), G, exclusive=False)
        stalled = assemble(scene.points, G, fallback=False)
        if stalled.unmapped:
            break
    else:
        pytest.fail("no stalling scene found")
    out = assemble(scene.points, G)
    assert out.used_fallback
    assert len(out.unmapped) < len(stalled.unmapped)
    assert check_outcome(out, scene.points, G) == []


def test_empty_and_tiny_inputs():
    out = assemble(np.zeros((0, 2)), G)
    assert out.vehicles == () and out.iterations == 0
    out = assemble(np.array([[1.0, 1.0]]), G)
    assert out.disturbance == {0}


scene_args = st.tuples(st.integers(0, 2 ** 32 - 1), st.integers(1, 8), st.integers(0, 8))


def _scene(args, **kw):
    seed, nv, nd = args
    return random_scene(np.random.default_rng(seed), nv, nd, G, **kw)


@given(scene_args)
def test_soundness_and_partition(args):
    scene = _scene(args, noise=G.tolerance / 8)
    out = assemble(scene.points, G)
    assert check_outcome(out, scene.points, G) == []
    assert out.iterations <= len(scene.points)


@given(scene_args, st.floats(-math.pi, math.pi), st.floats(-3, 3), st.floats(-3, 3))
def test_rigid_invariance(args, yaw, tx, ty):
    scene = _scene(args)
    moved = body_to_world(Pose(tx, ty, yaw), scene.points)
    assert vehicle_index_sets(assemble(moved, G)) == vehicle_index_sets(assemble(scene.points, G))


@given(scene_args)
def test_deterministic(args):
    scene = _scene(args)
    assert assemble(scene.points, G) == assemble(scene.points, G)


@given(scene_args)
def test_every_vehicle_is_a_brute_force_candidate(args):
    scene = _scene(args, exclusive=False)
    if len(scene.points) > 30:
        return
    cands = {frozenset(c) for c in brute_force_assemble(scene.points, G).candidates}
    assert vehicle_index_sets(assemble(scene.points, G)) <= cands


@given(scene_args)
def test_neighbor_relation_symmetric(args):
    scene = _scene(args, exclusive=False)
    nm = build_neighbor_map(scene.points, G)
    n = len(nm)
    for p in range(n):
        for q in nm.area(p):
            assert p in nm.area(q)
        for q in nm.partners(p):
            assert p in nm.partners(q)
