"""Command-line driver.

Exit codes: 0 ok, 1 invariant violation during a run, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import harness, posebus, suites
from .config import RunConfig, load_config
from .errors import ConfigError
from .identification import build_id_table
from .simulator import dump_frame, simulate, write_ground_truth_csv

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("ledips")


def _settings(args) -> tuple[RunConfig, harness.RunSettings]:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    settings = cfg.settings
    if args.deadline_ms is not None:
        if not args.deadline_ms > 0:
            raise ConfigError("--deadline-ms must be positive")
        settings = replace(settings, deadline_ms=args.deadline_ms)
    return cfg, settings


def _seed(args, cfg: RunConfig) -> int:
    return cfg.seed if args.seed is None else args.seed


def _meta(args, seed: int, settings: harness.RunSettings, suite: str) -> dict:
    r = settings.render
    return {"suite": suite, "seed": seed, "frames_limit": args.frames,
            "deadline_ms": settings.deadline_ms,
            "render": {"blob_radius": r.blob_radius, "width": r.width, "height": r.height,
                       "quantization": r.quantization, "centroid_noise": r.centroid_noise,
                       "disturbance_rate": r.disturbance_rate, "occlusion_rate": r.occlusion_rate},
            "id_table_size": len(settings.id_table)}


def _make_transport(cfg: RunConfig):
    if cfg.bus.transport == "fake":
        return posebus.FakeTransport()
    if cfg.bus.transport == "udp":
        return posebus.UdpTransport(cfg.bus.host, cfg.bus.base_port)
    return None


def cmd_run(args) -> int:
    cfg, settings = _settings(args)
    if not cfg.scenarios:
        raise ConfigError("run needs a [scenario] or [[scenarios]] section")
    seed = _seed(args, cfg)
    out = Path(args.out)
    reports, kinds, lat_rows = [], [], []
    violations = late = frames = 0
    bus_summary = {}
    transport = _make_transport(cfg)
    for i, sc in enumerate(cfg.scenarios):
        consumers = {}
        publisher = None
        if transport is not None:
            publisher = posebus.Publisher(transport)
            for vid in sc.ids:
                if isinstance(transport, posebus.UdpTransport):
                    transport.listen(vid)
                consumers[vid] = posebus.VehicleConsumer(vid, transport)
        stops: dict[int, list[int]] = {vid: [] for vid in consumers}

        def on_result(result, truth):
            # a consumer checks its channel once per frame on the simulated clock
            publisher.publish(result.samples)
            now = int(round(result.timestamp * 1e6))
            for vid, c in consumers.items():
                before = c.status
                if c.poll(now) == posebus.STOPPED and before == posebus.ACTIVE:
                    stops[vid].append(result.sequence)

        run = harness.run_scenario(sc, settings, harness.derive_seed(seed, i), args.frames,
                                   on_result if publisher is not None else None)
        rep = harness.score(run.samples, run.truths, sc.name)
        reports.append(rep)
        kinds.append(sc.kind)
        violations += run.invariant_violations
        late += sum(r.late for r in run.results)
        frames += len(run.results)
        lat_rows.append(harness.summarize_latency(sc.name, sc.vehicle_count, 0, run.latencies,
                                                  settings.deadline_ms, warmup=0))
        (out / sc.name).mkdir(parents=True, exist_ok=True)
        write_ground_truth_csv(out / sc.name / "ground_truth.csv", run.truths)
        harness.write_sample_stream(out / sc.name / "poses.csv", run.samples)
        if consumers:
            bus_summary[sc.name] = {str(v): {"received": c.received, "rejected": c.rejected,
                                             "final_status": c.status, "stopped_at_frames": stops[v]}
                                    for v, c in consumers.items()}
        log.info("scenario=%s frames=%d availability=%.4f pos_mean_cm=%.4f yaw_mean_deg=%.4f",
                 sc.name, len(run.results), rep.availability, rep.position_cm.mean, rep.orientation_deg.mean)
    if isinstance(transport, posebus.UdpTransport):
        transport.close()
    acc = harness.AccuracySuiteResult(tuple(reports), tuple(kinds), violations, late, frames)
    meta = _meta(args, seed, settings, "run")
    if bus_summary:
        meta["bus"] = bus_summary
    harness.write_accuracy_reports(out, acc, meta)
    harness.write_latency_reports(out, harness.LatencySuiteResult(tuple(lat_rows), violations,
                                                                  harness.host_info()), meta)
    print(f"{len(reports)} scenario(s), {frames} frames, {late} late, {violations} invariant violation(s); "
          f"reports in {out}")
    return EXIT_INVARIANT if violations else EXIT_OK


def cmd_suite(args) -> int:
    cfg, settings = _settings(args)
    seed = _seed(args, cfg)
    out = Path(args.out)
    if args.name == "table1":
        scenarios = suites.table1_suite()

        def progress(i, name):
            log.info("scenario %d/%d %s", i + 1, len(scenarios), name)

        result = harness.run_accuracy_suite(scenarios, settings, seed, args.frames, progress)
        meta = _meta(args, seed, settings, "table1")
        meta["manifest"] = suites.manifest()
        harness.write_accuracy_reports(out, result, meta)
        o = result.overall
        print(f"table1: {len(result.reports)} scenarios, position mean {o.position_cm.mean:.4f} cm "
              f"max {o.position_cm.max:.4f} std {o.position_cm.std:.4f}; orientation mean "
              f"{o.orientation_deg.mean:.4f} deg max {o.orientation_deg.max:.4f} std {o.orientation_deg.std:.4f}; "
              f"availability {o.availability:.4f}")
        violations = result.invariant_violations
    else:
        cases = suites.latency_suite()
        result = harness.run_latency_suite(cases, settings, seed, args.frames, args.rounds)
        meta = _meta(args, seed, settings, "latency")
        harness.write_latency_reports(out, result, meta)
        for r in result.rows:
            print(f"{r.case:8s} {r.vehicles:2d} vehicles  find_points {r.find_points:.3f}  "
                  f"find_vehicles {r.find_vehicles:.3f}  match {r.match_vehicles:.3f}  "
                  f"id_pose {r.compute_id_pose:.3f}  total {r.total_mean:.3f}/{r.total_max:.3f} ms  "
                  f"within deadline {100 * r.deadline_hit_fraction:.2f}%")
        violations = result.invariant_violations
    return EXIT_INVARIANT if violations else EXIT_OK


def cmd_print_id_table(args) -> int:
    if args.config:
        table = load_config(args.config).settings.id_table
    else:
        if not args.f_camera > 0 or args.count < 0:
            raise ConfigError("--f-camera must be positive and --count non-negative")
        table = build_id_table(args.f_camera, args.count)
    print(f"f_camera = {table.f_camera:g} Hz")
    print(f"{'id':>3} {'n':>4} {'f_led_hz':>10} {'accept_low':>11} {'accept_high':>11}")
    for e in table.entries:
        print(f"{e.vehicle_id:>3} {e.n:>4} {e.f_led:>10.4f} {e.low:>11.4f} {e.high:>11.4f}")
    return EXIT_OK


def cmd_render_debug(args) -> int:
    cfg, settings = _settings(args)
    if not cfg.scenarios:
        raise ConfigError("render-debug needs a [scenario] section")
    sc = cfg.scenarios[0]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    truths = []
    limit = args.frames if args.frames is not None else 10
    for frame, truth in simulate(sc, settings.geometry, settings.calibration, settings.render,
                                 settings.id_table, _seed(args, cfg), limit):
        dump_frame(out / f"frame_{frame.sequence:05d}.pgm", frame, settings.render.blob_radius)
        truths.append(truth)
    write_ground_truth_csv(out / "ground_truth.csv", truths)
    print(f"wrote {len(truths)} frame(s) to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ledips", description="LED-based indoor positioning: simulate, "
                                "run the positioning engine and report accuracy and latency.")
    p.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("--config", required=config_required, help="TOML configuration file")
        sp.add_argument("--out", default="out", help="output directory (default ./out)")
        sp.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        sp.add_argument("--frames", type=int, default=None, help="limit frames per scenario")
        sp.add_argument("--deadline-ms", type=float, default=None, help="soft deadline, default 20")

    sp = sub.add_parser("run", help="run the scenarios of a config file")
    common(sp, config_required=True)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("suite", help="run a bundled suite")
    sp.add_argument("name", choices=["table1", "latency"])
    common(sp)
    sp.add_argument("--rounds", type=int, default=3, help="latency suite repetitions (default 3)")
    sp.set_defaults(func=cmd_suite)

    sp = sub.add_parser("print-id-table", help="print the frequency table of vehicle IDs")
    sp.add_argument("--config", help="take f_camera and count from a config file")
    sp.add_argument("--f-camera", type=float, default=50.0)
    sp.add_argument("--count", type=int, default=20)
    sp.set_defaults(func=cmd_print_id_table)

    sp = sub.add_parser("render-debug", help="dump rendered frames as PGM plus ground truth")
    common(sp, config_required=True)
    sp.set_defaults(func=cmd_render_debug)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s %(message)s")
    if getattr(args, "frames", None) is not None and args.frames < 1:
        print("error: --frames must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
