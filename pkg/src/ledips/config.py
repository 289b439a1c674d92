"""TOML run configuration.

Sections (all optional except a scenario for ``run``)::

    seed = 7
    [scenario]            # or [[scenarios]] for several
    name, kind, vehicle_count, speed, duration, frame_rate, vehicle_ids
    [scenario.params]     # per-kind parameters
    [[scenario.occlusions]]  vehicle_id, leds, start, stop
    [geometry]            back_left, back_right, front, id_led, tolerance
    [calibration]         width, height, homography (3x3, optional)
    [render]              blob_radius, quantization, centroid_noise,
                          disturbance_rate, occlusion_rate, safe_disturbances
    [id_table]            f_camera, count
    [limits]              max_speed, max_yaw_rate
    [engine]              deadline_ms, staged, prefetch
    [bus]                 transport = "none" | "fake" | "udp", host, base_port
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .errors import ConfigError, LedipsError
from .geometry import CameraCalibration, VehicleGeometry
from .harness import RunSettings
from .identification import build_id_table
from .simulator import OcclusionWindow, RenderParams, Scenario
from .tracking import PlausibilityLimits

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

_SECTIONS = {"seed", "scenario", "scenarios", "geometry", "calibration", "render", "id_table",
             "limits", "engine", "bus"}
_SCENARIO_KEYS = {"name", "kind", "vehicle_count", "speed", "duration", "frame_rate", "params",
                  "vehicle_ids", "occlusions"}


@dataclass(frozen=True)
class BusConfig:
    transport: str = "none"
    host: str = "127.0.0.1"
    base_port: int = 47000


@dataclass(frozen=True)
class RunConfig:
    settings: RunSettings = field(default_factory=RunSettings)
    scenarios: tuple[Scenario, ...] = ()
    seed: int = 0
    bus: BusConfig = field(default_factory=BusConfig)


def _check_keys(section: str, table: Any, allowed) -> dict:
    if not isinstance(table, dict):
        raise ConfigError(f"[{section}] must be a table")
    extra = sorted(set(table) - set(allowed))
    if extra:
        raise ConfigError(f"[{section}]: unknown field {extra[0]!r}")
    return table


def _build(section: str, cls, table: dict, **extra):
    names = {f.name for f in fields(cls)} - {"validate"}
    _check_keys(section, table, names)
    try:
        return cls(**table, **extra)
    except ConfigError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None
    except (TypeError, ValueError, LedipsError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def _tuple2(section: str, table: dict) -> dict:
    out = dict(table)
    for k in ("back_left", "back_right", "front", "id_led"):
        if k in out:
            v = out[k]
            if not (isinstance(v, list) and len(v) == 2):
                raise ConfigError(f"[{section}].{k}: expected a pair of numbers")
            out[k] = tuple(v)
    return out


def parse_scenario(table: dict, where: str = "scenario") -> Scenario:
    _check_keys(where, table, _SCENARIO_KEYS)
    for k in ("name", "kind", "vehicle_count"):
        if k not in table:
            raise ConfigError(f"[{where}]: missing field {k!r}")
    t = dict(table)
    occ = []
    for i, w in enumerate(t.pop("occlusions", [])):
        ow = _check_keys(f"{where}.occlusions[{i}]", w, {"vehicle_id", "leds", "start", "stop"})
        try:
            occ.append(OcclusionWindow(int(ow["vehicle_id"]), tuple(ow.get("leds", (0, 1, 2, 3))),
                                       int(ow.get("start", 0)),
                                       None if ow.get("stop") is None else int(ow["stop"])))
        except KeyError as exc:
            raise ConfigError(f"[{where}.occlusions[{i}]]: missing field {exc.args[0]!r}") from None
    if "vehicle_ids" in t:
        t["vehicle_ids"] = tuple(t["vehicle_ids"])
    params = t.pop("params", {})
    if not isinstance(params, dict):
        raise ConfigError(f"[{where}.params] must be a table")
    try:
        return Scenario(params=params, occlusions=tuple(occ), **t)
    except ConfigError as exc:
        raise ConfigError(f"[{where}]: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from None


def parse_config(doc: dict) -> RunConfig:
    _check_keys("top level", doc, _SECTIONS)
    geom = _build("geometry", VehicleGeometry, _tuple2("geometry", doc.get("geometry", {})))
    cal_t = _check_keys("calibration", doc.get("calibration", {}), {"width", "height", "homography"})
    try:
        if "homography" in cal_t:
            cal = CameraCalibration(cal_t["homography"], int(cal_t.get("width", 2048)),
                                    int(cal_t.get("height", 1810)))
        else:
            cal = CameraCalibration.for_map(int(cal_t.get("width", 2048)), int(cal_t.get("height", 1810)))
    except (TypeError, ValueError, LedipsError) as exc:
        raise ConfigError(f"[calibration]: {exc}") from None
    render_t = dict(doc.get("render", {}))
    render_t.setdefault("width", cal.width)
    render_t.setdefault("height", cal.height)
    render = _build("render", RenderParams, render_t)
    if (render.width, render.height) != (cal.width, cal.height):
        raise ConfigError("[render]: image size differs from [calibration]")
    idt = _check_keys("id_table", doc.get("id_table", {}), {"f_camera", "count"})
    try:
        table = build_id_table(float(idt.get("f_camera", 50.0)), int(idt.get("count", 20)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[id_table]: {exc}") from None
    limits = _build("limits", PlausibilityLimits, doc.get("limits", {}))
    eng = _check_keys("engine", doc.get("engine", {}), {"deadline_ms", "staged", "prefetch"})
    bus = _build("bus", BusConfig, doc.get("bus", {}))
    if bus.transport not in ("none", "fake", "udp"):
        raise ConfigError(f"[bus].transport: unknown transport {bus.transport!r}")
    settings = RunSettings(geom, cal, render, table, limits, float(eng.get("deadline_ms", 20.0)),
                           bool(eng.get("staged", False)), int(eng.get("prefetch", 0)))
    scenarios = []
    if "scenario" in doc:
        scenarios.append(parse_scenario(doc["scenario"]))
    for i, t in enumerate(doc.get("scenarios", [])):
        scenarios.append(parse_scenario(t, f"scenarios[{i}]"))
    for sc in scenarios:
        if abs(sc.frame_rate - table.f_camera) > 1e-9:
            raise ConfigError(f"scenario {sc.name!r}: frame_rate must equal [id_table].f_camera")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed: expected an integer")
    return RunConfig(settings, tuple(scenarios), seed, bus)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        # the decoder message carries "(at line L, column C)"
        raise ConfigError(f"{path}: {exc}") from None
    try:
        return parse_config(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
