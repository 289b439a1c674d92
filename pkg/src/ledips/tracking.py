"""Match Vehicles: frame-to-frame association of detected vehicles to tracks.

Greedy nearest-neighbor on midpoint distance over all track/detection pairs,
globally sorted, with physical plausibility gates on displacement and yaw
change and an identity recheck against the track's stored ID.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

from .assembly import AssembledVehicle
from .geometry import Pose, angle_diff
from .identification import IdState, IdTable, classify, mark_gap, update_id_state

RETIRE_AFTER = 5


@dataclass(frozen=True)
class PlausibilityLimits:
    max_speed: float = 4.0
    max_yaw_rate: float = 2.0 * math.pi

    def __post_init__(self):
        if not (self.max_speed > 0 and self.max_yaw_rate > 0):
            raise ValueError("plausibility limits must be positive")


@dataclass(frozen=True)
class Track:
    track_id: int
    last_pose: Pose
    last_frame: int
    last_timestamp: float
    id_state: IdState = field(default_factory=IdState)
    resolved_vehicle_id: int | None = None
    missed_frames: int = 0
    id_led_visible: bool = False


Detection = tuple[AssembledVehicle, Pose]


@dataclass(frozen=True)
class Association:
    updated: tuple[Track, ...]
    new: tuple[Track, ...]
    lost: tuple[Track, ...]
    next_track_id: int
    # (track_id, detection index) for every accepted pairing
    pairs: tuple[tuple[int, int], ...] = ()
    rejected: int = 0


def _observe(track: Track, led_on: bool, table: IdTable | None) -> tuple[IdState, int | None]:
    state = mark_gap(track.id_state) if track.missed_frames else track.id_state
    new_state = update_id_state(state, led_on)
    if table is None or new_state.completed_on_runs == state.completed_on_runs:
        return new_state, None
    return new_state, classify(new_state, table)


def associate(tracks: Sequence[Track], detections: Sequence[Detection], dt: float,
              limits: PlausibilityLimits = PlausibilityLimits(), *,
              frame: int = 0, timestamp: float = 0.0, id_table: IdTable | None = None,
              next_track_id: int | None = None, retire_after: int = RETIRE_AFTER) -> Association:
    """Assign detections to tracks.

    ``dt`` is the frame period; a track that missed k frames may move
    ``max_speed * dt * (k + 1)``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if next_track_id is None:
        next_track_id = max((t.track_id for t in tracks), default=-1) + 1

    candidates = []
    for ti, tr in enumerate(tracks):
        elapsed = dt * (tr.missed_frames + 1)
        reach = limits.max_speed * elapsed
        turn = limits.max_yaw_rate * elapsed
        px, py = tr.last_pose.x, tr.last_pose.y
        for di, (_, pose) in enumerate(detections):
            dist = math.hypot(pose.x - px, pose.y - py)
            if dist > reach or abs(angle_diff(pose.yaw, tr.last_pose.yaw)) > turn:
                continue
            # tie-break on detection content so the result ignores input order
            candidates.append((dist, tr.track_id, pose.x, pose.y, pose.yaw, ti, di))
    candidates.sort()

    taken_t: dict[int, Track] = {}
    taken_d: set[int] = set()
    pairs = []
    rejected = 0
    for dist, _, _, _, _, ti, di in candidates:
        if ti in taken_t or di in taken_d:
            continue
        tr = tracks[ti]
        vehicle, pose = detections[di]
        led_on = vehicle.id_led is not None
        state, vid = _observe(tr, led_on, id_table)
        resolved = tr.resolved_vehicle_id
        if vid is not None:
            if resolved is not None and vid != resolved:
                rejected += 1
                continue
            resolved = vid
        taken_t[ti] = replace(tr, last_pose=pose, last_frame=frame, last_timestamp=timestamp,
                              id_state=state, resolved_vehicle_id=resolved, missed_frames=0,
                              id_led_visible=led_on)
        taken_d.add(di)
        pairs.append((tr.track_id, di))

    updated, lost = [], []
    for ti, tr in enumerate(tracks):
        if ti in taken_t:
            updated.append(taken_t[ti])
            continue
        missed = replace(tr, missed_frames=tr.missed_frames + 1)
        (lost if missed.missed_frames >= retire_after else updated).append(missed)

    new = []
    fresh = sorted((d for d in range(len(detections)) if d not in taken_d),
                   key=lambda d: (detections[d][1].x, detections[d][1].y, detections[d][1].yaw, d))
    for di in fresh:
        vehicle, pose = detections[di]
        led_on = vehicle.id_led is not None
        new.append(Track(next_track_id, pose, frame, timestamp, update_id_state(IdState(), led_on),
                         None, 0, led_on))
        pairs.append((next_track_id, di))
        next_track_id += 1
    return Association(tuple(updated), tuple(new), tuple(lost), next_track_id, tuple(pairs), rejected)
