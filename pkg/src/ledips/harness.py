"""Simulator-to-engine runs, accuracy scoring and report writing.

Errors are reported in centimeters and degrees. Availability only counts
frames after a vehicle's first identified sample: before that the vehicle is
still in its ID initiation window and its samples carry no ID.
"""

from __future__ import annotations

import csv
import gc
import io
import json
import math
import os
import platform
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InputError
from .geometry import CameraCalibration, VehicleGeometry, angle_diff
from .identification import IdTable, build_id_table
from .pipeline import Engine, EngineConfig, FrameResult, PoseSample, StepLatencies
from .simulator import GroundTruthRecord, RenderParams, Scenario, generate_trajectory, prefetch, simulate
from .suites import LatencyCase
from .blobs import area_band
from .tracking import PlausibilityLimits

REFERENCE_WORST_CASE_HIT = 0.8757
WARMUP_FRAMES = 10


@dataclass(frozen=True)
class RunSettings:
    geometry: VehicleGeometry = field(default_factory=VehicleGeometry)
    calibration: CameraCalibration = field(default_factory=CameraCalibration.for_map)
    render: RenderParams = field(default_factory=RenderParams)
    id_table: IdTable = field(default_factory=lambda: build_id_table(50.0, 20))
    limits: PlausibilityLimits = field(default_factory=PlausibilityLimits)
    deadline_ms: float = 20.0
    staged: bool = False
    prefetch: int = 0

    def engine_config(self) -> EngineConfig:
        lo, hi = area_band(self.render.blob_radius)
        return EngineConfig(self.geometry, self.calibration, self.id_table, self.limits,
                            min_area=lo, max_area=hi, deadline_ms=self.deadline_ms)


def derive_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


@dataclass(eq=False)
class ScenarioRun:
    scenario: Scenario
    results: list[FrameResult]
    truths: list[GroundTruthRecord]

    @property
    def samples(self) -> list[PoseSample]:
        return [s for r in self.results for s in r.samples]

    @property
    def latencies(self) -> list[StepLatencies]:
        return [r.latencies for r in self.results]

    @property
    def invariant_violations(self) -> int:
        return sum(1 for r in self.results for d in r.diagnostics if d.kind == "invariant")


def run_scenario(sc: Scenario, settings: RunSettings, seed: int = 0, frames: int | None = None,
                 on_result: Callable[[FrameResult, GroundTruthRecord], None] | None = None) -> ScenarioRun:
    traj = generate_trajectory(sc, settings.geometry)
    stream = simulate(sc, settings.geometry, settings.calibration, settings.render, settings.id_table,
                      seed, frames, traj)
    if settings.prefetch:
        stream = prefetch(stream, settings.prefetch)
    truths: list[GroundTruthRecord] = []

    def frames_only():
        for frame, truth in stream:
            truths.append(truth)
            yield frame

    engine = Engine(settings.engine_config())
    results = []
    for result in engine.run(frames_only(), staged=settings.staged):
        results.append(result)
        if on_result is not None:
            on_result(result, truths[len(results) - 1])
    return ScenarioRun(sc, results, truths)


# ----------------------------------------------------------------- scoring

@dataclass(frozen=True)
class ErrorStats:
    count: int
    mean: float
    max: float
    std: float

    @classmethod
    def of(cls, values: Sequence[float]) -> "ErrorStats":
        v = np.asarray(values, dtype=float)
        if len(v) == 0:
            return cls(0, 0.0, 0.0, 0.0)
        return cls(len(v), float(v.mean()), float(v.max()), float(v.std()))


@dataclass(frozen=True)
class AccuracyReport:
    name: str
    position_cm: ErrorStats
    orientation_deg: ErrorStats
    expected: int
    matched: int
    pending: int
    unknown: int
    duplicates: int
    unresolved_vehicles: tuple[int, ...]
    # (frame, vehicle_id, position error cm, orientation error deg)
    series: tuple[tuple[int, int, float, float], ...] = ()

    @property
    def availability(self) -> float:
        return self.matched / self.expected if self.expected else 1.0

    def row(self) -> dict:
        return {
            "scenario": self.name,
            "samples": self.matched,
            "expected": self.expected,
            "availability": self.availability,
            "pos_mean_cm": self.position_cm.mean,
            "pos_max_cm": self.position_cm.max,
            "pos_std_cm": self.position_cm.std,
            "yaw_mean_deg": self.orientation_deg.mean,
            "yaw_max_deg": self.orientation_deg.max,
            "yaw_std_deg": self.orientation_deg.std,
            "pending": self.pending,
            "unknown": self.unknown,
            "duplicates": self.duplicates,
            "unresolved": len(self.unresolved_vehicles),
        }


def score(samples: Iterable[PoseSample], truths: Iterable[GroundTruthRecord], name: str = "") -> AccuracyReport:
    """Compare identified samples against ground truth by (frame, vehicle_id)."""
    truth = {rec.sequence: {v.vehicle_id: v for v in rec.vehicles} for rec in truths}
    ordered = sorted(samples, key=lambda s: (s.sequence, s.track_id))
    first_seen: dict[int, int] = {}
    seen: set[tuple[int, int]] = set()
    series = []
    pending = unknown = duplicates = 0
    for s in ordered:
        if s.sequence not in truth:
            raise InputError(f"sample for frame {s.sequence} has no ground truth record")
        if s.vehicle_id is None:
            pending += 1
            continue
        vt = truth[s.sequence].get(s.vehicle_id)
        if vt is None:
            unknown += 1
            continue
        key = (s.sequence, s.vehicle_id)
        if key in seen:
            duplicates += 1
            continue
        seen.add(key)
        first_seen.setdefault(s.vehicle_id, s.sequence)
        pos = math.hypot(s.pose.x - vt.pose.x, s.pose.y - vt.pose.y) * 100.0
        yaw = math.degrees(abs(angle_diff(s.pose.yaw, vt.pose.yaw)))
        series.append((s.sequence, s.vehicle_id, pos, yaw))
    series.sort()
    expected = 0
    vehicles = set()
    for seq, table in truth.items():
        for vid in table:
            vehicles.add(vid)
            if vid in first_seen and seq >= first_seen[vid]:
                expected += 1
    return AccuracyReport(
        name,
        ErrorStats.of([e[2] for e in series]),
        ErrorStats.of([e[3] for e in series]),
        expected, len(series), pending, unknown, duplicates,
        tuple(sorted(vehicles - set(first_seen))),
        tuple(series),
    )


def combine(reports: Sequence[AccuracyReport], name: str = "ALL") -> AccuracyReport:
    series = tuple(e for r in reports for e in r.series)
    return AccuracyReport(
        name,
        ErrorStats.of([e[2] for e in series]),
        ErrorStats.of([e[3] for e in series]),
        sum(r.expected for r in reports), sum(r.matched for r in reports),
        sum(r.pending for r in reports), sum(r.unknown for r in reports),
        sum(r.duplicates for r in reports),
        tuple(v for r in reports for v in r.unresolved_vehicles),
        series,
    )


# ----------------------------------------------------------------- latency

@dataclass(frozen=True)
class LatencyRow:
    case: str
    vehicles: int
    clusters: int
    frames: int
    find_points: float
    find_vehicles: float
    match_vehicles: float
    compute_id_pose: float
    total_mean: float
    total_max: float
    deadline_hit_fraction: float


def summarize_latency(case: str, vehicles: int, clusters: int, lats: Sequence[StepLatencies],
                      deadline_ms: float = 20.0, warmup: int = WARMUP_FRAMES) -> LatencyRow:
    use = list(lats[warmup:]) if len(lats) > warmup else list(lats)
    if not use:
        raise InputError("no frames to summarize")

    def mean(attr):
        return statistics.fmean(getattr(l, attr) for l in use)

    totals = [l.total for l in use]
    hit = sum(1 for t in totals if t <= deadline_ms) / len(totals)
    return LatencyRow(case, vehicles, clusters, len(use), mean("find_points"), mean("find_vehicles"),
                      mean("match_vehicles"), mean("compute_id_pose"), statistics.fmean(totals),
                      max(totals), hit)


def host_info() -> dict:
    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "processor": platform.processor(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "cpu_count": os.cpu_count(),
    }


@dataclass(frozen=True)
class LatencySuiteResult:
    rows: tuple[LatencyRow, ...]
    invariant_violations: int
    host: dict

    def row(self, case: str, vehicles: int) -> LatencyRow:
        for r in self.rows:
            if r.case == case and r.vehicles == vehicles:
                return r
        raise KeyError((case, vehicles))


def run_latency_suite(cases: Sequence[LatencyCase], settings: RunSettings, seed: int = 0,
                      frames: int | None = None, rounds: int = 3) -> LatencySuiteResult:
    """Time every case ``rounds`` times, interleaving the cases so slow drift
    of the host affects all of them alike; means are taken over all rounds."""
    lats: list[list[StepLatencies]] = [[] for _ in cases]
    violations = 0
    for r in range(rounds):
        for i, c in enumerate(cases):
            # collector pauses would land in arbitrary steps; collect between runs instead
            gc.collect()
            gc.disable()
            try:
                run = run_scenario(c.scenario, settings, derive_seed(seed, i), frames)
            finally:
                gc.enable()
            violations += run.invariant_violations
            lats[i].extend(run.latencies[WARMUP_FRAMES:])
    rows = tuple(summarize_latency(c.case, c.vehicles, c.clusters, l, settings.deadline_ms, warmup=0)
                 for c, l in zip(cases, lats))
    return LatencySuiteResult(rows, violations, host_info())


# ---------------------------------------------------------------- accuracy

@dataclass(frozen=True)
class AccuracySuiteResult:
    reports: tuple[AccuracyReport, ...]
    kinds: tuple[str, ...]
    invariant_violations: int
    late_frames: int
    frames: int

    @property
    def overall(self) -> AccuracyReport:
        return combine(self.reports)


def run_accuracy_suite(scenarios: Sequence[Scenario], settings: RunSettings, seed: int = 0,
                       frames: int | None = None, progress: Callable[[int, str], None] | None = None
                       ) -> AccuracySuiteResult:
    reports, kinds = [], []
    violations = late = total = 0
    for i, sc in enumerate(scenarios):
        run = run_scenario(sc, settings, derive_seed(seed, i), frames)
        reports.append(score(run.samples, run.truths, sc.name))
        kinds.append(sc.kind)
        violations += run.invariant_violations
        late += sum(r.late for r in run.results)
        total += len(run.results)
        if progress is not None:
            progress(i, sc.name)
    return AccuracySuiteResult(tuple(reports), tuple(kinds), violations, late, total)


# ----------------------------------------------------------------- writers

_ACC_FIELDS = ["scenario", "kind", "samples", "expected", "availability", "pos_mean_cm", "pos_max_cm",
               "pos_std_cm", "yaw_mean_deg", "yaw_max_deg", "yaw_std_deg", "pending", "unknown",
               "duplicates", "unresolved"]


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return v


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_accuracy_reports(out: str | os.PathLike, result: AccuracySuiteResult, meta: dict) -> list[Path]:
    out = Path(out)
    rows = []
    for rep, kind in zip(result.reports, result.kinds):
        r = rep.row()
        r["kind"] = kind
        rows.append(r)
    overall = result.overall.row()
    overall["kind"] = "all"
    csv_text = _csv_text(_ACC_FIELDS, ([r[k] for k in _ACC_FIELDS] for r in rows + [overall]))
    series = _csv_text(["scenario", "frame", "vehicle_id", "pos_err_cm", "yaw_err_deg"],
                       ([rep.name, f, v, p, y] for rep in result.reports for f, v, p, y in rep.series))
    doc = {
        "meta": meta,
        "summary": {**overall, "scenarios": len(result.reports), "frames": result.frames,
                    "invariant_violations": result.invariant_violations},
        "scenarios": rows,
    }
    paths = [out / "accuracy.csv", out / "errors.csv", out / "accuracy.json"]
    for p, text in zip(paths, (csv_text, series, _json_text(doc))):
        _write(p, text)
    return paths


_LAT_FIELDS = ["case", "vehicles", "clusters", "frames", "find_points", "find_vehicles", "match_vehicles",
               "compute_id_pose", "total_mean", "total_max", "deadline_hit_fraction"]


def write_latency_reports(out: str | os.PathLike, result: LatencySuiteResult, meta: dict) -> list[Path]:
    out = Path(out)
    rows = [asdict(r) for r in result.rows]
    header = "".join(f"# {k}: {v}\n" for k, v in sorted(result.host.items()))
    csv_text = header + _csv_text(_LAT_FIELDS, ([r[k] for k in _LAT_FIELDS] for r in rows))
    worst20 = [r for r in result.rows if r.case == "worst" and r.vehicles == 20]
    doc = {
        "meta": meta,
        "host": result.host,
        "units": "milliseconds",
        "rows": rows,
        "invariant_violations": result.invariant_violations,
        "worst_case_20_deadline_hit_fraction": worst20[0].deadline_hit_fraction if worst20 else None,
        "reference_worst_case_20_deadline_hit_fraction": REFERENCE_WORST_CASE_HIT,
    }
    paths = [out / "latency.csv", out / "latency.json"]
    _write(paths[0], csv_text)
    _write(paths[1], _json_text(doc))
    return paths


def write_sample_stream(path: str | os.PathLike, samples: Iterable[PoseSample]) -> None:
    rows = ([s.sequence, "" if s.vehicle_id is None else s.vehicle_id, s.track_id,
             f"{s.pose.x:.9f}", f"{s.pose.y:.9f}", f"{s.pose.yaw:.9f}"] for s in samples)
    _write(Path(path), _csv_text(["frame", "vehicle_id", "track_id", "x", "y", "yaw"], rows))
