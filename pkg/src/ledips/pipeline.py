"""Frame-ordered positioning engine.

A frame goes through find points, find vehicles, match vehicles and compute
ID and pose. The first two stages are pure functions of the frame
(:func:`prepare`), the last two mutate track state (:func:`finish`); the
engine state is an immutable value so replaying frames reproduces outputs.
"""

from __future__ import annotations

import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from . import assembly
from .blobs import DEFAULT_THRESHOLD, AnyFrame, PointFrame, area_band, blob_centroids, detect_blobs
from .errors import LedipsError, SequenceError
from .geometry import CameraCalibration, Pose, VehicleGeometry, image_to_world
from .identification import IdTable, build_id_table
from .pose import estimate_poses
from .tracking import RETIRE_AFTER, PlausibilityLimits, Track, associate

log = logging.getLogger(__name__)

DEADLINE_MS = 20.0


@dataclass(frozen=True)
class EngineConfig:
    geometry: VehicleGeometry = field(default_factory=VehicleGeometry)
    calibration: CameraCalibration = field(default_factory=CameraCalibration.for_map)
    id_table: IdTable = field(default_factory=lambda: build_id_table(50.0, 20))
    limits: PlausibilityLimits = field(default_factory=PlausibilityLimits)
    threshold: int = DEFAULT_THRESHOLD
    min_area: int = area_band(3.0)[0]
    max_area: int = area_band(3.0)[1]
    deadline_ms: float = DEADLINE_MS
    retire_after: int = RETIRE_AFTER
    check_invariants: bool = True

    @property
    def frame_period(self) -> float:
        return 1.0 / self.id_table.f_camera


@dataclass(frozen=True)
class PoseSample:
    vehicle_id: int | None
    pose: Pose
    sequence: int
    timestamp: float
    track_id: int = -1


@dataclass(frozen=True)
class StepLatencies:
    find_points: float
    find_vehicles: float
    match_vehicles: float
    compute_id_pose: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return {"find_points": self.find_points, "find_vehicles": self.find_vehicles,
                "match_vehicles": self.match_vehicles, "compute_id_pose": self.compute_id_pose,
                "total": self.total}


@dataclass(frozen=True)
class Diagnostic:
    sequence: int
    kind: str
    message: str


@dataclass(frozen=True)
class EngineState:
    tracks: tuple[Track, ...] = ()
    next_track_id: int = 0
    last_sequence: int | None = None


@dataclass(frozen=True, eq=False)
class Prepared:
    """Output of the stateless stages for one frame."""

    sequence: int
    timestamp: float
    points: np.ndarray
    outcome: assembly.AssemblyOutcome
    poses: np.ndarray
    diagnostics: tuple[Diagnostic, ...]
    t_points_ns: int
    t_vehicles_ns: int
    t_pose_ns: int


@dataclass(frozen=True, eq=False)
class FrameResult:
    sequence: int
    timestamp: float
    samples: tuple[PoseSample, ...]
    latencies: StepLatencies
    late: bool
    diagnostics: tuple[Diagnostic, ...]
    n_points: int
    outcome: assembly.AssemblyOutcome
    lost: tuple[Track, ...] = ()


def _ms(ns: int) -> float:
    return ns / 1e6


def find_points(frame: AnyFrame, config: EngineConfig) -> np.ndarray:
    if isinstance(frame, PointFrame):
        image_pts = frame.centroids
    else:
        blobs = detect_blobs(frame, config.threshold, config.min_area, config.max_area)
        image_pts = blob_centroids(blobs)
    if len(image_pts) == 0:
        return np.zeros((0, 2))
    return image_to_world(config.calibration, image_pts)


def prepare(frame: AnyFrame, config: EngineConfig) -> Prepared:
    """Find points, find vehicles, and compute current-frame poses."""
    diags: list[Diagnostic] = []
    geom = config.geometry
    t0 = time.perf_counter_ns()
    try:
        pts = find_points(frame, config)
    except LedipsError as exc:
        diags.append(Diagnostic(frame.sequence, "find_points", str(exc)))
        pts = np.zeros((0, 2))
    t1 = time.perf_counter_ns()
    try:
        pts, _ = assembly.merge_duplicates(pts)
        outcome = assembly.assemble(pts, geom)
    except LedipsError as exc:
        diags.append(Diagnostic(frame.sequence, "find_vehicles", str(exc)))
        outcome = assembly.AssemblyOutcome((), frozenset(), frozenset(range(len(pts))))
    t2 = time.perf_counter_ns()
    if outcome.vehicles:
        idx = np.array([v.positioning for v in outcome.vehicles])
        poses = estimate_poses(pts[idx], geom)
    else:
        poses = np.zeros((0, 3))
    t3 = time.perf_counter_ns()
    if config.check_invariants:
        for problem in assembly.check_outcome(outcome, pts, geom):
            diags.append(Diagnostic(frame.sequence, "invariant", problem))
    if outcome.used_fallback:
        diags.append(Diagnostic(frame.sequence, "fallback", "brute-force assembly used"))
    return Prepared(frame.sequence, float(frame.timestamp), pts, outcome, poses, tuple(diags),
                    t1 - t0, t2 - t1, t3 - t2)


def finish(state: EngineState, prep: Prepared, config: EngineConfig,
           total_start_ns: int | None = None) -> tuple[EngineState, FrameResult]:
    """Match vehicles to tracks, update identities and emit pose samples."""
    if state.last_sequence is not None and prep.sequence <= state.last_sequence:
        raise SequenceError(f"frame {prep.sequence} after frame {state.last_sequence}")
    diags = list(prep.diagnostics)
    t0 = time.perf_counter_ns()
    detections = [(v, Pose(float(x), float(y), float(yaw)))
                  for v, (x, y, yaw) in zip(prep.outcome.vehicles, prep.poses)]
    assoc = associate(state.tracks, detections, config.frame_period, config.limits,
                      frame=prep.sequence, timestamp=prep.timestamp, id_table=config.id_table,
                      next_track_id=state.next_track_id, retire_after=config.retire_after)
    t1 = time.perf_counter_ns()
    tracks = sorted(assoc.updated + assoc.new, key=lambda t: t.track_id)
    samples = tuple(PoseSample(t.resolved_vehicle_id, t.last_pose, prep.sequence, prep.timestamp,
                               t.track_id)
                    for t in tracks if t.missed_frames == 0 and t.last_frame == prep.sequence)
    t2 = time.perf_counter_ns()
    if assoc.rejected:
        diags.append(Diagnostic(prep.sequence, "id_rejected",
                                f"{assoc.rejected} pairing(s) contradicted a stored ID"))
    for t in assoc.lost:
        diags.append(Diagnostic(prep.sequence, "lost_track",
                                f"track {t.track_id} (id {t.resolved_vehicle_id}) retired"))
    lat = StepLatencies(
        find_points=_ms(prep.t_points_ns),
        find_vehicles=_ms(prep.t_vehicles_ns),
        match_vehicles=_ms(t1 - t0),
        compute_id_pose=_ms(prep.t_pose_ns + (t2 - t1)),
        total=0.0,
    )
    steps = lat.find_points + lat.find_vehicles + lat.match_vehicles + lat.compute_id_pose
    total = _ms(time.perf_counter_ns() - total_start_ns) if total_start_ns is not None else steps
    lat = StepLatencies(lat.find_points, lat.find_vehicles, lat.match_vehicles,
                        lat.compute_id_pose, max(total, steps))
    new_state = EngineState(tuple(tracks), assoc.next_track_id, prep.sequence)
    result = FrameResult(prep.sequence, prep.timestamp, samples, lat, lat.total > config.deadline_ms,
                         tuple(diags), len(prep.points), prep.outcome, assoc.lost)
    for d in diags:
        if d.kind == "invariant":
            log.warning("frame=%d kind=%s msg=%s", d.sequence, d.kind, d.message)
        else:
            log.debug("frame=%d kind=%s msg=%s", d.sequence, d.kind, d.message)
    return new_state, result


def step(state: EngineState, frame: AnyFrame, config: EngineConfig) -> tuple[EngineState, FrameResult]:
    start = time.perf_counter_ns()
    return finish(state, prepare(frame, config), config, start)


class Engine:
    """Stateful wrapper around :func:`step`."""

    def __init__(self, config: EngineConfig | None = None):
        self.config = config or EngineConfig()
        self.state = EngineState()

    def process_frame(self, frame: AnyFrame) -> FrameResult:
        self.state, result = step(self.state, frame, self.config)
        return result

    def run(self, frames: Iterable[AnyFrame], staged: bool = False,
            queue_size: int = 4) -> Iterator[FrameResult]:
        if not staged:
            for frame in frames:
                yield self.process_frame(frame)
            return
        for result in run_staged(self, frames, queue_size):
            yield result


_DONE = object()


def run_staged(engine: Engine, frames: Iterable[AnyFrame], queue_size: int = 4) -> Iterator[FrameResult]:
    """Run the stateless stages in a worker thread, one frame ahead of the
    serial tracking stage, over a bounded queue that preserves frame order."""
    q: queue.Queue = queue.Queue(maxsize=queue_size)
    config = engine.config
    stop = threading.Event()

    def produce():
        try:
            for frame in frames:
                if stop.is_set():
                    break
                start = time.perf_counter_ns()
                q.put((prepare(frame, config), start))
        except BaseException as exc:  # surfaced in the consumer
            q.put(exc)
        q.put(_DONE)

    worker = threading.Thread(target=produce, name="ledips-prepare", daemon=True)
    worker.start()
    try:
        while True:
            item = q.get()
            if item is _DONE:
                break
            if isinstance(item, BaseException):
                raise item
            prep, start = item
            engine.state, result = finish(engine.state, prep, config, None)
            yield result
    finally:
        stop.set()
        while worker.is_alive():
            try:
                q.get_nowait()
            except queue.Empty:
                worker.join(timeout=0.01)
