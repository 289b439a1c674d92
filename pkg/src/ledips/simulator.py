"""Synthetic camera: analytic vehicle trajectories, white-disk rendering on a
black frame, flashing identification LEDs and aligned ground truth.

Everything random draws from one ``numpy.random.Generator`` seeded per
scenario, so a scenario and a seed fix every frame.
"""

from __future__ import annotations

import csv
import itertools
import math
import os
import queue
import threading
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .blobs import Frame, PointFrame, write_pgm
from .errors import ConfigError
from .geometry import MAP_HEIGHT, MAP_WIDTH, CameraCalibration, Pose, VehicleGeometry, world_to_image
from .identification import IdTable, square_wave_on

KINDS = ("static_grid", "straight_line", "circle", "ellipse", "figure_eight", "platoon", "clusters")
MAX_VEHICLES = 20
# Body footprint (length, width) used for the no-collision check, meters.
FOOTPRINT = (0.20, 0.09)
PLATOON_GAP = 0.22
CLUSTER_SPACING = 0.15
_TABLE_SAMPLES = 20001


@dataclass(frozen=True)
class OcclusionWindow:
    """LEDs of one vehicle hidden on frames ``start <= seq < stop`` (stop None: forever).

    LED indices: 0 back_left, 1 back_right, 2 front, 3 id_led.
    """

    vehicle_id: int
    leds: tuple[int, ...] = (0, 1, 2, 3)
    start: int = 0
    stop: int | None = None

    def covers(self, sequence: int) -> bool:
        return self.start <= sequence and (self.stop is None or sequence < self.stop)


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: str
    vehicle_count: int
    speed: float = 0.0
    duration: float = 1.0
    frame_rate: float = 50.0
    params: Mapping[str, Any] = field(default_factory=dict)
    vehicle_ids: tuple[int, ...] | None = None
    occlusions: tuple[OcclusionWindow, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"scenario {self.name!r}: unknown kind {self.kind!r}")
        if not 1 <= self.vehicle_count <= MAX_VEHICLES:
            raise ConfigError(f"scenario {self.name!r}: vehicle_count must be in 1..{MAX_VEHICLES}")
        if not (self.duration > 0 and self.frame_rate > 0):
            raise ConfigError(f"scenario {self.name!r}: duration and frame_rate must be positive")
        if self.speed < 0:
            raise ConfigError(f"scenario {self.name!r}: speed must be non-negative")
        if self.kind in ("platoon", "figure_eight") and not self.params.get("gap", PLATOON_GAP) > 0:
            raise ConfigError(f"scenario {self.name!r}: gap must be positive")
        ids = self.ids
        if len(ids) != self.vehicle_count or len(set(ids)) != len(ids):
            raise ConfigError(f"scenario {self.name!r}: vehicle_ids must be {self.vehicle_count} distinct ids")

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(self.vehicle_ids) if self.vehicle_ids is not None else tuple(range(self.vehicle_count))

    @property
    def frame_count(self) -> int:
        return max(1, int(round(self.duration * self.frame_rate)))


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray     # (F,)
    poses: np.ndarray     # (F, V, 3) x, y, yaw
    vehicle_ids: tuple[int, ...]

    def pose(self, frame: int, vehicle: int) -> Pose:
        x, y, yaw = self.poses[frame, vehicle]
        return Pose(float(x), float(y), float(yaw))


@dataclass(frozen=True)
class VehicleTruth:
    vehicle_id: int
    pose: Pose
    id_led_on: bool
    occluded: tuple[int, ...] = ()


@dataclass(frozen=True)
class GroundTruthRecord:
    sequence: int
    timestamp: float
    vehicles: tuple[VehicleTruth, ...]
    disturbances: int = 0


@dataclass(frozen=True)
class RenderParams:
    blob_radius: float = 3.0
    width: int = 2048
    height: int = 1810
    quantization: bool = True
    centroid_noise: float = 0.0     # pixels, standard deviation
    disturbance_rate: float = 0.0   # mean blobs per frame (Poisson)
    occlusion_rate: float = 0.0     # per LED per frame
    safe_disturbances: bool = True

    def __post_init__(self):
        if self.blob_radius < 1:
            raise ConfigError("blob_radius must be at least 1 pixel")
        if self.width <= 0 or self.height <= 0:
            raise ConfigError("image size must be positive")
        if self.centroid_noise < 0 or self.disturbance_rate < 0:
            raise ConfigError("noise and disturbance rate must be non-negative")
        if not 0 <= self.occlusion_rate <= 1:
            raise ConfigError("occlusion_rate must be in [0, 1]")


# --------------------------------------------------------------------------
# paths


class _Path:
    """Arc-length parametrized planar path. ``at(s)`` returns x, y, yaw arrays."""

    length: float
    closed: bool

    def at(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError


class _Segment(_Path):
    def __init__(self, p0, p1):
        self.p0 = np.asarray(p0, dtype=float)
        d = np.asarray(p1, dtype=float) - self.p0
        self.length = float(np.hypot(*d))
        if self.length == 0:
            raise ConfigError("line endpoints must differ")
        self.u = d / self.length
        self.yaw = math.atan2(d[1], d[0])
        self.closed = False

    def at(self, s):
        s = np.asarray(s, dtype=float)
        return self.p0[0] + s * self.u[0], self.p0[1] + s * self.u[1], np.full_like(s, self.yaw)


class _Circle(_Path):
    def __init__(self, center, radius, direction=1, start_angle=0.0):
        if not radius > 0:
            raise ConfigError("circle radius must be positive")
        self.c = np.asarray(center, dtype=float)
        self.r = float(radius)
        self.dir = 1.0 if direction >= 0 else -1.0
        self.a0 = float(start_angle)
        self.length = 2 * math.pi * self.r
        self.closed = True

    def at(self, s):
        th = self.a0 + self.dir * np.asarray(s, dtype=float) / self.r
        return (self.c[0] + self.r * np.cos(th), self.c[1] + self.r * np.sin(th),
                th + self.dir * math.pi / 2)


class _Curve(_Path):
    """Closed parametric curve over phi in [0, 2*pi), reparametrized by arc
    length through a dense lookup table; yaw comes from the exact tangent."""

    def __init__(self, fn, dfn, direction=1):
        self.fn, self.dfn = fn, dfn
        self.dir = 1.0 if direction >= 0 else -1.0
        phi = np.linspace(0.0, 2 * math.pi, _TABLE_SAMPLES)
        dx, dy = dfn(phi)
        speed = np.hypot(dx, dy)
        seg = (speed[1:] + speed[:-1]) / 2 * np.diff(phi)
        self.s_table = np.concatenate([[0.0], np.cumsum(seg)])
        self.phi_table = phi
        self.length = float(self.s_table[-1])
        self.closed = True

    def at(self, s):
        s = np.mod(np.asarray(s, dtype=float), self.length)
        if self.dir < 0:
            s = self.length - s
        phi = np.interp(s, self.s_table, self.phi_table)
        x, y = self.fn(phi)
        dx, dy = self.dfn(phi)
        yaw = np.arctan2(self.dir * dy, self.dir * dx)
        return x, y, yaw


def _ellipse(center, semi_axes, direction=1) -> _Curve:
    (cx, cy), (a, b) = center, semi_axes
    if not (a > 0 and b > 0):
        raise ConfigError("semi axes must be positive")
    return _Curve(lambda p: (cx + a * np.cos(p), cy + b * np.sin(p)),
                  lambda p: (-a * np.sin(p), b * np.cos(p)), direction)


def _eight(center, semi_axes, direction=1) -> _Curve:
    # lemniscate of Gerono lying on its side, crossing itself at the center
    (cx, cy), (a, b) = center, semi_axes
    if not (a > 0 and b > 0):
        raise ConfigError("semi axes must be positive")
    return _Curve(lambda p: (cx + a * np.sin(p), cy + b * np.sin(p) * np.cos(p)),
                  lambda p: (a * np.cos(p), b * np.cos(2 * p)), direction)


_CENTER = (MAP_WIDTH / 2, MAP_HEIGHT / 2)


def _param(sc: Scenario, key: str, default=None):
    v = sc.params.get(key, default)
    if v is None:
        raise ConfigError(f"scenario {sc.name!r}: missing parameter {key!r}")
    return v


def _along(path: _Path, offsets: Sequence[float], speed: float, t: np.ndarray, clamp: Sequence[float] | None = None):
    """Poses (F, V, 3) of vehicles at arc offsets moving at ``speed``."""
    out = np.empty((len(t), len(offsets), 3))
    for k, s0 in enumerate(offsets):
        s = s0 + speed * t
        if clamp is not None:
            s = np.minimum(s, clamp[k])
        x, y, yaw = path.at(s)
        out[:, k, 0], out[:, k, 1], out[:, k, 2] = x, y, yaw
    return out


def _static(poses, n_frames: int) -> np.ndarray:
    p = np.asarray(poses, dtype=float).reshape(-1, 3)
    return np.broadcast_to(p, (n_frames,) + p.shape).copy()


def cluster_sizes(vehicles: int, clusters: int) -> list[int]:
    if not 1 <= clusters <= vehicles:
        raise ConfigError("cluster count must be in 1..vehicle_count")
    base, extra = divmod(vehicles, clusters)
    return [base + (1 if i < extra else 0) for i in range(clusters)]


def cluster_poses(sizes: Sequence[int], spacing: float = CLUSTER_SPACING,
                  center=_CENTER, extent=(3.4, 3.0)) -> np.ndarray:
    """Static poses of vehicles standing side by side in groups on a grid."""
    c = len(sizes)
    cols = max(1, math.ceil(math.sqrt(c * extent[0] / extent[1])))
    rows = math.ceil(c / cols)
    xs = np.linspace(-extent[0] / 2, extent[0] / 2, cols) if cols > 1 else np.zeros(1)
    ys = np.linspace(-extent[1] / 2, extent[1] / 2, rows) if rows > 1 else np.zeros(1)
    poses = []
    for g, size in enumerate(sizes):
        gx = center[0] + xs[g % cols]
        gy = center[1] + ys[g // cols]
        yaw = ((3 * g) % 8) * math.pi / 4
        normal = np.array([-math.sin(yaw), math.cos(yaw)])
        for m in range(size):
            lateral = (m - (size - 1) / 2) * spacing
            poses.append((gx + lateral * normal[0], gy + lateral * normal[1], yaw))
    return np.array(poses)


def generate_trajectory(sc: Scenario, geom: VehicleGeometry | None = None,
                        validate: bool = True) -> Trajectory:
    """Analytic poses at every frame time of the scenario."""
    n = sc.vehicle_count
    t = np.arange(sc.frame_count) / sc.frame_rate
    p = sc.params
    kind = sc.kind
    if kind == "static_grid":
        poses = _static(_param(sc, "poses"), len(t))
    elif kind == "straight_line":
        parked = np.asarray(p.get("parked", ()), dtype=float).reshape(-1, 3)
        moving = n - len(parked)
        if "lines" in p:
            lines = np.asarray(p["lines"], dtype=float).reshape(-1, 4)
            if len(lines) != moving:
                raise ConfigError(f"scenario {sc.name!r}: need one line per moving vehicle")
            parts = []
            for line in lines:
                path = _Segment(line[:2], line[2:])
                parts.append(_along(path, [0.0], sc.speed, t, [path.length]))
            poses = np.concatenate(parts, axis=1) if parts else np.zeros((len(t), 0, 3))
        else:
            path = _Segment(_param(sc, "start"), _param(sc, "end"))
            gap = float(p.get("gap", PLATOON_GAP))
            offsets = [(moving - 1 - k) * gap for k in range(moving)]
            if moving and offsets[0] > path.length:
                raise ConfigError(f"scenario {sc.name!r}: vehicles do not fit on the line")
            poses = _along(path, offsets, sc.speed, t, [path.length - k * gap for k in range(moving)])
        if len(parked):
            poses = np.concatenate([poses, _static(parked, len(t))], axis=1)
    elif kind == "circle":
        path = _Circle(p.get("center", _CENTER), _param(sc, "radius", 1.0),
                       p.get("direction", 1), p.get("start_angle", 0.0))
        gap = p.get("gap", path.length / n)
        poses = _along(path, [-k * gap for k in range(n)], sc.speed, t)
    elif kind == "ellipse":
        path = _ellipse(p.get("center", _CENTER), p.get("semi_axes", (1.7, 1.5)), p.get("direction", 1))
        gap = p.get("gap", path.length / n)
        poses = _along(path, [-k * gap for k in range(n)], sc.speed, t)
    elif kind == "figure_eight":
        path = _eight(p.get("center", _CENTER), p.get("semi_axes", (1.8, 2.8)), p.get("direction", 1))
        gap = float(p.get("gap", 0.3))
        s0 = float(p.get("start", 0.0))
        poses = _along(path, [s0 - k * gap for k in range(n)], sc.speed, t)
    elif kind == "platoon":
        gap = float(p.get("gap", PLATOON_GAP))
        if p.get("lane", "ellipse") == "line":
            path = _Segment(_param(sc, "start"), _param(sc, "end"))
            offsets = [(n - 1 - k) * gap for k in range(n)]
            if offsets[0] + sc.speed * t[-1] > path.length:
                raise ConfigError(f"scenario {sc.name!r}: platoon leaves its lane")
        else:
            path = _ellipse(p.get("center", _CENTER), p.get("semi_axes", (1.7, 1.5)), p.get("direction", 1))
            offsets = [-k * gap for k in range(n)]
            if n * gap >= path.length:
                raise ConfigError(f"scenario {sc.name!r}: platoon longer than its lane")
        poses = _along(path, offsets, sc.speed, t)
    elif kind == "clusters":
        sizes = p.get("sizes") or cluster_sizes(n, int(_param(sc, "clusters")))
        if sum(sizes) != n:
            raise ConfigError(f"scenario {sc.name!r}: cluster sizes must sum to vehicle_count")
        poses = _static(cluster_poses(sizes, float(p.get("spacing", CLUSTER_SPACING))), len(t))
    else:  # pragma: no cover - guarded by Scenario
        raise ConfigError(kind)
    if poses.shape[1] != n:
        raise ConfigError(f"scenario {sc.name!r}: produced {poses.shape[1]} vehicles, expected {n}")
    poses[..., 2] = np.remainder(poses[..., 2] + math.pi, 2 * math.pi) - math.pi
    traj = Trajectory(t, poses, sc.ids)
    if validate:
        check_trajectory(traj, geom or VehicleGeometry(), sc.name)
    return traj


def world_leds(poses: np.ndarray, geom: VehicleGeometry) -> np.ndarray:
    """LED world positions (..., 4, 2) for poses (..., 3)."""
    poses = np.asarray(poses, dtype=float)
    c, s = np.cos(poses[..., 2]), np.sin(poses[..., 2])
    g = geom.points
    x = poses[..., 0, None] + c[..., None] * g[:, 0] - s[..., None] * g[:, 1]
    y = poses[..., 1, None] + s[..., None] * g[:, 0] + c[..., None] * g[:, 1]
    return np.stack([x, y], axis=-1)


def _rect_corners(pose, footprint) -> np.ndarray:
    l, w = footprint[0] / 2, footprint[1] / 2
    c, s = math.cos(pose[2]), math.sin(pose[2])
    local = np.array([(l, w), (-l, w), (-l, -w), (l, -w)])
    return pose[:2] + local @ np.array([[c, s], [-s, c]])


def footprints_overlap(a, b, footprint=FOOTPRINT) -> bool:
    """Separating-axis test for two oriented rectangles."""
    ca, cb = _rect_corners(np.asarray(a, float), footprint), _rect_corners(np.asarray(b, float), footprint)
    for corners in (ca, cb):
        for k in range(2):
            edge = corners[k + 1] - corners[k]
            axis = np.array([-edge[1], edge[0]])
            pa, pb = ca @ axis, cb @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def check_trajectory(traj: Trajectory, geom: VehicleGeometry, name: str = "",
                     footprint=FOOTPRINT) -> None:
    leds = world_leds(traj.poses, geom)
    off = (leds[..., 0] < 0) | (leds[..., 0] > MAP_WIDTH) | (leds[..., 1] < 0) | (leds[..., 1] > MAP_HEIGHT)
    if off.any():
        f, v, _ = np.argwhere(off)[0]
        raise ConfigError(f"scenario {name!r}: vehicle {traj.vehicle_ids[v]} leaves the map at frame {f}")
    pos = traj.poses[..., :2]
    nv = pos.shape[1]
    if nv < 2:
        return
    d = np.linalg.norm(pos[:, :, None, :] - pos[:, None, :, :], axis=-1)
    close = np.argwhere(np.triu(d < math.hypot(*footprint), k=1))
    for f, i, j in close:
        if footprints_overlap(traj.poses[f, i], traj.poses[f, j], footprint):
            raise ConfigError(f"scenario {name!r}: vehicles {traj.vehicle_ids[i]} and "
                              f"{traj.vehicle_ids[j]} collide at frame {f}")


# --------------------------------------------------------------------------
# geometry completion checks


def _combos(n: int, k: int) -> np.ndarray:
    return np.array(list(itertools.combinations(range(n), k)), dtype=int).reshape(-1, k)


def matching_subsets(points: np.ndarray, combos: np.ndarray, geom: VehicleGeometry) -> np.ndarray:
    """Boolean mask over ``combos`` (M, k), k in {3, 4}: index sets whose sorted
    pairwise distances match the reference list within tolerance."""
    if len(combos) == 0:
        return np.zeros(0, dtype=bool)
    k = combos.shape[1]
    sub = points[combos]
    ii, jj = np.triu_indices(k, 1)
    d = np.sort(np.linalg.norm(sub[:, ii] - sub[:, jj], axis=-1), axis=1)
    return np.all(np.abs(d - geom.reference_distances[k]) <= geom.tolerance, axis=1)


def completes_geometry(candidate, others: np.ndarray, geom: VehicleGeometry,
                       exempt: Sequence[frozenset[int]] = ()) -> bool:
    """True if ``candidate`` points plus some of ``others`` form a 3- or 4-point
    vehicle pattern that uses at least one candidate point and is not one of
    the ``exempt`` index sets (indices into the concatenation others+candidate)."""
    cand = np.asarray(candidate, dtype=float).reshape(-1, 2)
    others = np.asarray(others, dtype=float).reshape(-1, 2)
    reach = geom.vehicle_length + geom.tolerance
    if len(others):
        dist = np.linalg.norm(others[:, None, :] - cand[None, :, :], axis=-1)
        near = np.flatnonzero((dist <= reach).any(axis=1))
    else:
        near = np.zeros(0, dtype=int)
    local = np.concatenate([others[near], cand])
    global_idx = np.concatenate([near, len(others) + np.arange(len(cand))])
    n_old = len(near)
    for k in (3, 4):
        combos = _combos(len(local), k)
        if len(combos) == 0:
            continue
        combos = combos[(combos >= n_old).any(axis=1)]
        hits = combos[matching_subsets(local, combos, geom)]
        for h in hits:
            if frozenset(global_idx[h].tolist()) not in exempt:
                return True
    return False


# --------------------------------------------------------------------------
# rendering


def stamp_disks(shape: tuple[int, int], centers: np.ndarray, radius: float, value: int = 255) -> np.ndarray:
    """Black image with filled disks: a pixel is lit iff its center (i, j) lies
    within ``radius`` of a disk center (u, v)."""
    h, w = shape
    img = np.zeros((h, w), dtype=np.uint8)
    r2 = radius * radius
    for u, v in np.asarray(centers, dtype=float).reshape(-1, 2):
        i0, i1 = max(0, math.floor(u - radius)), min(w - 1, math.ceil(u + radius))
        j0, j1 = max(0, math.floor(v - radius)), min(h - 1, math.ceil(v + radius))
        if i1 < i0 or j1 < j0:
            continue
        ii = np.arange(i0, i1 + 1)
        jj = np.arange(j0, j1 + 1)[:, None]
        mask = (ii - u) ** 2 + (jj - v) ** 2 <= r2
        img[j0:j1 + 1, i0:i1 + 1][mask] = value
    return img


def id_led_states(t: float, vehicle_ids: Sequence[int], id_table: IdTable, phases: Sequence[float]) -> list[bool]:
    return [square_wave_on(t, id_table.entry(v).f_led, ph) for v, ph in zip(vehicle_ids, phases)]


def _in_image(q: np.ndarray, rp: RenderParams) -> np.ndarray:
    return (q[:, 0] >= -0.5) & (q[:, 0] < rp.width - 0.5) & (q[:, 1] >= -0.5) & (q[:, 1] < rp.height - 0.5)


def _sample_disturbances(rng: np.random.Generator, count: int, world: np.ndarray, image: np.ndarray,
                         geom: VehicleGeometry, cal: CameraCalibration,
                         rp: RenderParams, attempts: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Uniform in-map disturbance points, rejection-sampled so that blobs never
    touch and (if ``safe_disturbances``) never complete a vehicle pattern."""
    world = world.reshape(-1, 2)
    image = image.reshape(-1, 2)
    min_px = 2 * rp.blob_radius + 2
    margin = 0.02
    added_w, added_q = [], []
    for _ in range(count):
        for _ in range(attempts):
            p = np.array([rng.uniform(margin, MAP_WIDTH - margin), rng.uniform(margin, MAP_HEIGHT - margin)])
            q = world_to_image(cal, p)
            if not _in_image(q[None], rp)[0]:
                continue
            all_q = np.concatenate([image] + [np.array(added_q).reshape(-1, 2)])
            if len(all_q) and np.min(np.hypot(*(all_q - q).T)) < min_px:
                continue
            all_w = np.concatenate([world] + [np.array(added_w).reshape(-1, 2)])
            if rp.safe_disturbances and completes_geometry(p, all_w, geom):
                continue
            added_w.append(p)
            added_q.append(q)
            break
    return np.array(added_w).reshape(-1, 2), np.array(added_q).reshape(-1, 2)


def render_frame(poses, vehicle_ids: Sequence[int], t: float, geom: VehicleGeometry,
                 cal: CameraCalibration, rp: RenderParams, id_table: IdTable,
                 phases: Sequence[float] | None = None, rng: np.random.Generator | None = None,
                 sequence: int = 0, occluded: Mapping[int, Iterable[int]] | None = None):
    """Render one frame and its ground truth.

    ``occluded`` maps a vehicle id to LED indices forced dark this frame.
    Random noise, occlusions and disturbances need ``rng``.
    """
    poses = np.asarray(poses, dtype=float).reshape(-1, 3)
    if phases is None:
        phases = [0.0] * len(poses)
    leds = world_leds(poses, geom)                     # (V, 4, 2)
    ids_on = id_led_states(t, vehicle_ids, id_table, phases)
    random_fx = rng is not None
    visible_w, truths = [], []
    for k, (vid, on) in enumerate(zip(vehicle_ids, ids_on)):
        hidden = set(occluded.get(vid, ())) if occluded else set()
        if random_fx and rp.occlusion_rate > 0:
            hidden |= set(np.flatnonzero(rng.random(4) < rp.occlusion_rate).tolist())
        for led in range(4):
            if led == 3 and not on:
                continue
            if led not in hidden:
                visible_w.append(leds[k, led])
        truths.append(VehicleTruth(int(vid), Pose(*map(float, poses[k])), bool(on), tuple(sorted(hidden))))
    world = np.array(visible_w).reshape(-1, 2)
    image = world_to_image(cal, world) if len(world) else np.zeros((0, 2))
    if len(image) and not _in_image(image, rp).all():
        raise ConfigError(f"frame {sequence}: an LED projects outside the {rp.width}x{rp.height} image")
    n_dist = 0
    if random_fx and rp.disturbance_rate > 0:
        count = int(rng.poisson(rp.disturbance_rate))
        _, dq = _sample_disturbances(rng, count, world, image, geom, cal, rp)
        n_dist = len(dq)
        image = np.concatenate([image, dq])
    if random_fx and rp.centroid_noise > 0 and len(image):
        image = image + rng.normal(0.0, rp.centroid_noise, image.shape)
    truth = GroundTruthRecord(sequence, float(t), tuple(truths), n_dist)
    if len(image):
        image = image[np.lexsort((image[:, 0], image[:, 1]))]
    if rp.quantization:
        frame = Frame(rp.width, rp.height, stamp_disks((rp.height, rp.width), image, rp.blob_radius),
                      float(t), sequence)
    else:
        area = math.pi * rp.blob_radius ** 2
        frame = PointFrame(rp.width, rp.height, image, float(t), sequence, np.full(len(image), area))
    return frame, truth


# --------------------------------------------------------------------------
# scenario runs


def simulate(sc: Scenario, geom: VehicleGeometry, cal: CameraCalibration, rp: RenderParams,
             id_table: IdTable, seed: int = 0, frames: int | None = None,
             trajectory: Trajectory | None = None) -> Iterator[tuple[Frame | PointFrame, GroundTruthRecord]]:
    """Frames and ground truth of a scenario, deterministic in ``seed``."""
    for vid in sc.ids:
        if not 0 <= vid < len(id_table):
            raise ConfigError(f"scenario {sc.name!r}: vehicle id {vid} outside the ID table")
    traj = trajectory or generate_trajectory(sc, geom)
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0, sc.vehicle_count)
    total = len(traj.times) if frames is None else min(frames, len(traj.times))
    for k in range(total):
        hidden: dict[int, list[int]] = {}
        for w in sc.occlusions:
            if w.covers(k):
                hidden.setdefault(w.vehicle_id, []).extend(w.leds)
        yield render_frame(traj.poses[k], sc.ids, float(traj.times[k]), geom, cal, rp, id_table,
                           phases, rng, k, hidden)


def prefetch(items: Iterable, maxsize: int = 4) -> Iterator:
    """Produce ``items`` ahead of consumption in a thread through a bounded queue."""
    q: queue.Queue = queue.Queue(maxsize=maxsize)
    done = object()
    stop = threading.Event()

    def run():
        try:
            for item in items:
                if stop.is_set():
                    return
                q.put(item)
        except BaseException as exc:
            q.put(exc)
        q.put(done)

    th = threading.Thread(target=run, name="ledips-render", daemon=True)
    th.start()
    try:
        while True:
            item = q.get()
            if item is done:
                return
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()
        while th.is_alive():
            try:
                q.get_nowait()
            except queue.Empty:
                th.join(timeout=0.01)


def write_ground_truth_csv(path: str | os.PathLike, records: Iterable[GroundTruthRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "vehicle_id", "x", "y", "yaw", "id_led_on"])
        for rec in records:
            for v in rec.vehicles:
                w.writerow([rec.sequence, v.vehicle_id, f"{v.pose.x:.9f}", f"{v.pose.y:.9f}",
                            f"{v.pose.yaw:.9f}", int(v.id_led_on)])


def dump_frame(path: str | os.PathLike, frame: Frame | PointFrame, radius: float = 3.0) -> None:
    """Write a frame as PGM; point frames are rasterized for viewing."""
    if isinstance(frame, PointFrame):
        pixels = stamp_disks((frame.height, frame.width), frame.centroids, radius)
    else:
        pixels = frame.pixels
    write_pgm(path, pixels)


# --------------------------------------------------------------------------
# random scenes


@dataclass(frozen=True, eq=False)
class Scene:
    points: np.ndarray       # (N, 2) world points, shuffled
    labels: np.ndarray       # (N,) vehicle index or -1 for disturbance points
    roles: np.ndarray        # (N,) LED index 0..3 or -1
    poses: np.ndarray        # (V, 3)

    def vehicle_sets(self) -> set[frozenset[int]]:
        return {frozenset(np.flatnonzero(self.labels == k).tolist()) for k in range(len(self.poses))}


def random_scene(rng: np.random.Generator, n_vehicles: int, n_disturbances: int = 0,
                 geom: VehicleGeometry | None = None, id_on_prob: float = 0.5,
                 noise: float = 0.0, footprint=FOOTPRINT, exclusive: bool = True,
                 max_tries: int = 2000) -> Scene:
    """Random non-colliding vehicles plus disturbance points on the map.

    With ``exclusive`` every placement is rejected if its LEDs would form a
    vehicle pattern with points of other vehicles, and disturbance points are
    rejected if they would complete one, so the true vehicles are the only
    patterns in the scene. ``noise`` is a per-axis Gaussian sigma in meters,
    clipped at three sigma.
    """
    geom = geom or VehicleGeometry()
    margin = geom.vehicle_length
    poses: list[np.ndarray] = []
    pts: list[np.ndarray] = []
    labels: list[int] = []
    roles: list[int] = []
    tries = 0
    while len(poses) < n_vehicles:
        tries += 1
        if tries > max_tries:
            raise ConfigError(f"could not place {n_vehicles} vehicles")
        pose = np.array([rng.uniform(margin, MAP_WIDTH - margin), rng.uniform(margin, MAP_HEIGHT - margin),
                         rng.uniform(-math.pi, math.pi)])
        if any(footprints_overlap(pose, q, footprint) for q in poses
               if math.hypot(*(pose[:2] - q[:2])) < math.hypot(*footprint)):
            continue
        leds = world_leds(pose, geom)
        use = [0, 1, 2] + ([3] if rng.random() < id_on_prob else [])
        new = leds[use]
        if noise > 0:
            new = new + np.clip(rng.normal(0.0, noise, new.shape), -3 * noise, 3 * noise)
        if exclusive and pts:
            old = np.array(pts)
            own = frozenset(range(len(old), len(old) + len(new)))
            exempt = [frozenset(c) for size in (3, 4) for c in itertools.combinations(sorted(own), size)]
            if completes_geometry(new, old, geom, exempt):
                continue
        k = len(poses)
        poses.append(pose)
        pts.extend(new)
        labels.extend([k] * len(new))
        roles.extend(use)
    added = 0
    tries = 0
    while added < n_disturbances:
        tries += 1
        if tries > max_tries:
            raise ConfigError(f"could not place {n_disturbances} disturbance points")
        p = np.array([rng.uniform(0.0, MAP_WIDTH), rng.uniform(0.0, MAP_HEIGHT)])
        old = np.array(pts).reshape(-1, 2)
        if len(old) and np.min(np.hypot(*(old - p).T)) < 0.01:
            continue
        if exclusive and completes_geometry(p, old, geom):
            continue
        pts.append(p)
        labels.append(-1)
        roles.append(-1)
        added += 1
    order = rng.permutation(len(pts))
    return Scene(np.array(pts).reshape(-1, 2)[order], np.array(labels, dtype=int)[order],
                 np.array(roles, dtype=int)[order], np.array(poses).reshape(-1, 3))
