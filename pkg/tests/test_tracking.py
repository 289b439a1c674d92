import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ledips.assembly import AssembledVehicle
from ledips.geometry import Pose
from ledips.identification import IdState, build_id_table
from ledips.tracking import PlausibilityLimits, Track, associate

from oracles import optimal_assignment

DT = 0.02
LIM = PlausibilityLimits(max_speed=2.0)
V_OFF = AssembledVehicle(0, 1, 2)
V_ON = AssembledVehicle(0, 1, 2, 3)


def track(tid, x, y, yaw=0.0, **kw):
    return Track(tid, Pose(x, y, yaw), 0, 0.0, **kw)


def det(x, y, yaw=0.0, lit=False):
    return (V_ON if lit else V_OFF, Pose(x, y, yaw))


def test_nearest_match():
    a = associate([track(0, 1, 1)], [det(1.01, 1.0)], DT, LIM, frame=1)
    assert a.pairs == ((0, 0),) and not a.new
    assert a.updated[0].last_pose == Pose(1.01, 1.0, 0.0) and a.updated[0].last_frame == 1


def test_implausible_jump_opens_new_track():
    a = associate([track(0, 1, 1)], [det(2, 1)], DT, LIM, frame=1)
    assert a.updated[0].missed_frames == 1
    assert len(a.new) == 1 and a.new[0].track_id == 1
    assert a.next_track_id == 2


def test_yaw_rate_gate():
    lim = PlausibilityLimits(max_speed=2.0, max_yaw_rate=math.pi)
    a = associate([track(0, 1, 1, 0.0)], [det(1, 1, 0.1)], DT, lim)
    assert len(a.new) == 1
    a = associate([track(0, 1, 1, math.pi - 0.01)], [det(1, 1, -math.pi + 0.01)], DT, lim)
    assert not a.new  # wrap-around is a small turn


def test_two_tracks_keep_their_side_and_agree_with_optimum():
    tracks = [track(0, 1.0, 1.0), track(1, 1.2, 1.0)]
    dets = [det(1.19, 1.005), det(1.005, 0.995)]
    a = associate(tracks, dets, DT, LIM)
    assert dict(a.pairs) == {0: 1, 1: 0}
    cost = [[math.hypot(d[1].x - t.last_pose.x, d[1].y - t.last_pose.y) for d in dets] for t in tracks]
    assert tuple(dict(a.pairs)[t] for t in (0, 1)) == optimal_assignment(cost)


def test_where_greedy_departs_from_optimum():
    # greedy grabs the closest pair first and leaves the other track a worse match
    lim = PlausibilityLimits(max_speed=100.0)
    tracks = [track(0, 1.0, 1.0), track(1, 1.010, 1.0)]
    dets = [det(1.006, 1.0), det(1.015, 1.0)]
    a = associate(tracks, dets, DT, lim)
    assert dict(a.pairs) == {1: 0, 0: 1}
    cost = [[abs(d[1].x - t.last_pose.x) for d in dets] for t in tracks]
    assert optimal_assignment(cost) == (0, 1)


def test_retirement_after_five_misses():
    tracks = [track(0, 1, 1)]
    for k in range(1, 6):
        a = associate(tracks, [], DT, LIM, frame=k)
        tracks = list(a.updated)
        if k < 5:
            assert tracks[0].missed_frames == k and not a.lost
    assert not tracks and a.lost[0].missed_frames == 5


def test_missed_frames_widen_the_gate():
    t = track(0, 1, 1, missed_frames=2)
    # 3 frame periods at 2 m/s = 0.12 m
    assert not associate([t], [det(1.11, 1)], DT, LIM).new
    assert associate([t], [det(1.13, 1)], DT, LIM).new


def test_id_recheck_rejects_contradiction():
    table = build_id_table(50.0, 20)
    # two whole runs of length 2 seen and an on-run of 2 in progress: the next
    # off frame closes a third run and classifies as ID 0
    state = IdState(True, 2, True, (2, 2), (True, True), 10)
    good = track(0, 1, 1, id_state=state, resolved_vehicle_id=0)
    a = associate([good], [det(1, 1, lit=False)], DT, LIM, id_table=table)
    assert not a.new and a.updated[0].resolved_vehicle_id == 0
    bad = track(0, 1, 1, id_state=state, resolved_vehicle_id=4)
    a = associate([bad], [det(1, 1, lit=False)], DT, LIM, id_table=table)
    assert a.rejected == 1 and len(a.new) == 1 and a.updated[0].missed_frames == 1


def test_new_track_starts_id_state():
    a = associate([], [det(1, 1, lit=True)], DT, LIM, next_track_id=7)
    (t,) = a.new
    assert t.track_id == 7 and t.id_state.current_run_is_on and t.id_led_visible


def test_dt_must_be_positive():
    with pytest.raises(ValueError):
        associate([], [], 0.0)
    with pytest.raises(ValueError):
        PlausibilityLimits(max_speed=0)


world = st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(-math.pi, math.pi))


@given(st.lists(world, max_size=6), st.lists(world, max_size=6), st.randoms(use_true_random=False))
def test_one_to_one_and_order_free(tr, de, rnd):
    lim = PlausibilityLimits(max_speed=20.0, max_yaw_rate=50.0)
    tracks = [track(i, *p) for i, p in enumerate(tr)]
    dets = [det(*p) for p in de]
    a = associate(tracks, dets, DT, lim)
    tids = [t for t, _ in a.pairs]
    dids = [d for _, d in a.pairs]
    assert len(set(tids)) == len(tids) and len(set(dids)) == len(dids)
    assert sorted(dids) == list(range(len(dets)))  # every detection lands somewhere
    perm = list(range(len(dets)))
    rnd.shuffle(perm)
    b = associate(tracks, [dets[i] for i in perm], DT, lim)
    by_pose = lambda assoc, ds: {t: ds[d][1] for t, d in assoc.pairs}
    assert by_pose(a, dets) == by_pose(b, [dets[i] for i in perm])
    assert [t.track_id for t in a.updated] == [t.track_id for t in b.updated]


def test_crossing_free_run_has_no_swaps():
    # two vehicles 0.2 m apart moving in parallel at 1 m/s for 100 frames
    tracks, nxt = [], 0
    owner = {}
    for k in range(100):
        x = 0.5 + 0.02 * k
        dets = [det(x, 1.0), det(x, 1.2)]
        if k % 2:
            dets.reverse()
        a = associate(tracks, dets, DT, LIM, frame=k, next_track_id=nxt)
        nxt = a.next_track_id
        tracks = list(a.updated) + list(a.new)
        for tid, d in a.pairs:
            lane = round(dets[d][1].y, 1)
            assert owner.setdefault(tid, lane) == lane
    assert nxt == 2
