"""Command-line front end.

Exit status: 0 on success, 2 for bad user input (the message names the key
or line at fault), 3 for file-system or other environment failures.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .config import PROFILE_NAMES, load_yaml, parse_pipeline, parse_scenario, parse_tracker
from .errors import ConfigError, EmptyReportError, GazetrackError, LineFormatError
from .pipeline import (
    LatencyReport,
    gimbal_csv,
    latency_report,
    parse_timing_csv,
    reduction_percent,
    run,
    timing_csv,
)
from .simworld import format_detections, format_groundtruth, parse_detections
from .tracker import Tracker, TrackerConfig

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ENV = 3


@dataclass
class RunManifest:
    scenario_path: Path
    tracker_path: Path | None
    pipeline_path: Path | None
    out_dir: Path
    seed: int | None = None


def _err(msg: str) -> None:
    print(f"gazetrack: {msg}", file=sys.stderr)


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


def _section(data: dict, key: str, path: Path | None) -> dict | None:
    """Pull ``key`` out of a combined file, or out of a dedicated one.

    A dedicated file may hold the section bare or nested under ``key``.
    """
    if path is not None:
        own = load_yaml(path)
        return own[key] if set(own) == {key} else own
    return data.get(key)


# simulate ----------------------------------------------------------------

def _metrics_csv(metrics: dict) -> str:
    lines = ["key,value"]
    for k in sorted(metrics):
        v = metrics[k]
        if isinstance(v, list):
            for i, item in enumerate(v):
                lines.append(f"{k}[{i}].end_s,{item['end_s']}")
                lines.append(f"{k}[{i}].rate,{item['rate']}")
        else:
            lines.append(f"{k},{v}")
    return "\n".join(lines) + "\n"


def _summary(name: str, scenario, pipe, result, report: LatencyReport) -> str:
    m = result.metrics
    lines = [
        f"gazetrack {__version__} simulation summary",
        "",
        f"scenario: {name}",
        f"frames: {scenario.n_frames} at {scenario.fps:g} fps, {scenario.frame_w}x{scenario.frame_h}",
        f"targets: {len(scenario.targets)}, seed {scenario.seed}",
        f"pipeline: {', '.join(f'{s.name} ({s.executor})' for s in pipe.stages)}",
        f"accelerator lanes: {pipe.accelerator_workers}",
        "",
        "modeled latency (ms)",
        report.format(),
        "",
        f"accelerator makespan: {result.lanes.makespan:.3f} ms "
        f"({result.lanes.throughput * 1000.0:.2f} frames/s)",
        "",
        "tracking",
        f"recognition rate: {m.recognition_rate:.4f} ({m.recognized_count}/{m.visible_count})",
    ]
    for end, rate in m.recognition_rate_per_window:
        lines.append(f"  cumulative at {end:g} s: {rate:.4f}")
    lines += [
        f"id switches: {m.id_switches}",
        f"fragmentations: {m.track_fragmentations}",
        f"mostly tracked: {m.mostly_tracked_fraction:.3f}",
    ]
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    manifest = RunManifest(
        Path(args.config),
        Path(args.tracker) if args.tracker else None,
        Path(args.pipeline) if args.pipeline else None,
        Path(args.out),
        args.seed,
    )
    data = load_yaml(manifest.scenario_path)
    if "scenario" in data:
        extra = sorted(set(data) - {"scenario", "tracker", "pipeline"})
        if extra:
            raise ConfigError(extra[0], "unknown top-level section")
        scen_raw = data["scenario"]
    else:
        scen_raw = {k: v for k, v in data.items() if k not in ("tracker", "pipeline")}
    if manifest.seed is not None and isinstance(scen_raw, dict):
        scen_raw = {**scen_raw, "seed": manifest.seed}
    scenario = parse_scenario(scen_raw)
    tcfg = parse_tracker(_section(data, "tracker", manifest.tracker_path), fps=scenario.fps)
    pipe_raw = _section(data, "pipeline", manifest.pipeline_path) or {}
    if manifest.seed is not None and isinstance(pipe_raw, dict):
        pipe_raw = {**pipe_raw, "seed": manifest.seed}
    pipe = parse_pipeline(pipe_raw, profile=args.profile)

    result = run(scenario, tcfg, pipe, threaded=args.threaded)
    report = latency_report(result.timings) if result.timings else None

    out = manifest.out_dir
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "timing.csv", timing_csv(result.timings, pipe.stage_names))
    _write(out / "gimbal.csv", gimbal_csv(result.gimbal))
    metrics = result.metrics.to_dict()
    if report is not None:
        metrics["latency"] = report.to_dict()
    metrics_name = "metrics.json" if args.format == "json" else "metrics.csv"
    if args.format == "json":
        _write(out / metrics_name, json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    else:
        flat = {k: v for k, v in metrics.items() if k != "latency"}
        if report is not None:
            for k, v in report.total.to_dict().items():
                flat[f"latency.total_ms.{k}"] = v
        _write(out / metrics_name, _metrics_csv(flat))
    _write(out / "groundtruth.txt", "".join(line + "\n" for line in format_groundtruth(result.groundtruth)))
    det_lines = []
    for k, dets in enumerate(result.detections):
        det_lines.extend(format_detections(k, dets))
    _write(out / "detections.txt", "".join(line + "\n" for line in det_lines))
    if report is not None:
        _write(out / "summary.txt", _summary(manifest.scenario_path.name, scenario, pipe, result, report))
    else:
        _write(out / "summary.txt", "no frames simulated\n")

    if result.step_wall_ms:
        print(f"tracker.step wall-clock median {statistics.median(result.step_wall_ms):.3f} ms "
              f"(measured, not part of the modeled totals)")
    print(f"wrote timing.csv, gimbal.csv, {metrics_name}, summary.txt, groundtruth.txt, "
          f"detections.txt to {out}")
    return EXIT_OK


# track -------------------------------------------------------------------

def cmd_track(args) -> int:
    lines = Path(args.detections).read_text().splitlines()
    frames = parse_detections(lines)
    if args.tracker:
        data = load_yaml(args.tracker)
        tcfg = parse_tracker(data.get("tracker", data), fps=args.fps)
    else:
        tcfg = TrackerConfig()
    tracker = Tracker(tcfg)
    rows = []
    for k, dets in enumerate(frames):
        out = tracker.step(dets)
        for t in out.active:
            b = t.bbox
            rows.append((k, t.id, b.cx, b.cy, b.w, b.h, t.status.value))
    if args.format == "json":
        text = json.dumps(
            [dict(zip(("frame", "track_id", "cx", "cy", "w", "h", "status"), r)) for r in rows],
            indent=1,
        ) + "\n"
    else:
        text = "frame,track_id,cx,cy,w,h,status\n" + "".join(
            f"{f},{i},{cx:.6f},{cy:.6f},{w:.6f},{h:.6f},{s}\n" for f, i, cx, cy, w, h, s in rows
        )
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# report ------------------------------------------------------------------

def _load_report(path: str) -> LatencyReport:
    timings = parse_timing_csv(Path(path).read_text())
    if not timings:
        raise EmptyReportError(f"{path}: no data rows")
    return latency_report(timings)


def cmd_report(args) -> int:
    rep = _load_report(args.timing)
    base = _load_report(args.baseline) if args.baseline else None
    reduction = reduction_percent(base.total.mean, rep.total.mean) if base else None
    if args.format == "json":
        doc = rep.to_dict()
        if base is not None:
            doc["baseline_total_ms"] = base.total.to_dict()
            doc["reduction_percent"] = reduction
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    elif args.format == "csv":
        cols = ("n", "mean", "std", "min", "max", "p50", "p95", "p99")
        lines = ["stage," + ",".join(cols)]
        for name, st in list(rep.stages.items()) + [("total", rep.total)]:
            lines.append(name + "," + ",".join(f"{getattr(st, c):.6f}" if c != "n" else str(st.n)
                                               for c in cols))
        if reduction is not None:
            lines.append(f"reduction_percent,{reduction:.6f}")
        text = "\n".join(lines) + "\n"
    else:
        text = rep.format() + "\n"
        if base is not None:
            text += (f"baseline mean {base.total.mean:.3f} ms -> {rep.total.mean:.3f} ms: "
                     f"reduction {reduction:.2f}%\n")
    sys.stdout.write(text)
    return EXIT_OK


# decode ------------------------------------------------------------------

def cmd_decode(args) -> int:
    from .detect import DecodeParams, decode_heads, read_feature_map

    maps = [read_feature_map(p) for p in args.maps]
    params = DecodeParams(args.input_size, args.conf, args.iou, maps[0].n_classes if maps else 1)
    dets = decode_heads(maps, params)
    sys.stdout.write("cx,cy,w,h,confidence,class_id\n")
    for d in dets:
        b = d.bbox
        sys.stdout.write(f"{b.cx:.3f},{b.cy:.3f},{b.w:.3f},{b.h:.3f},{d.confidence:.6f},{d.class_id}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gazetrack", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"gazetrack {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a synthetic scenario through the modeled pipeline")
    s.add_argument("config", help="YAML scenario, optionally with tracker/pipeline sections")
    s.add_argument("--tracker", help="separate tracker YAML (overrides the config's section)")
    s.add_argument("--pipeline", help="separate pipeline YAML (overrides the config's section)")
    s.add_argument("--out", default="out", help="output directory (default: out)")
    s.add_argument("--seed", type=int, help="override every seed in the configuration")
    s.add_argument("--profile", choices=PROFILE_NAMES, help="use a shipped stage profile")
    s.add_argument("--format", choices=("csv", "json"), default="json", help="metrics file format")
    s.add_argument("--threaded", action="store_true", help="pipelined execution (same results)")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("track", help="track a detections file")
    t.add_argument("detections", help="lines of frame_idx,target_id,cx,cy,w,h,conf")
    t.add_argument("--tracker", help="tracker YAML")
    t.add_argument("--fps", type=float, default=30.0, help="frame rate for the motion model")
    t.add_argument("--out", help="output path (default: stdout)")
    t.add_argument("--format", choices=("csv", "json"), default="csv")
    t.set_defaults(func=cmd_track)

    r = sub.add_parser("report", help="summarize a timing CSV")
    r.add_argument("timing", help="timing CSV written by simulate")
    r.add_argument("--baseline", help="timing CSV to compare against")
    r.add_argument("--format", choices=("csv", "json"), help="machine-readable output")
    r.set_defaults(func=cmd_report)

    d = sub.add_parser("decode", help="decode raw detection-head dumps")
    d.add_argument("maps", nargs="+", help="feature-map dump files")
    d.add_argument("--input-size", type=float, default=640.0)
    d.add_argument("--conf", type=float, default=0.25)
    d.add_argument("--iou", type=float, default=0.45)
    d.set_defaults(func=cmd_decode)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _err(f"config error at {exc}")
        return EXIT_INPUT
    except LineFormatError as exc:
        _err(str(exc))
        return EXIT_INPUT
    except (GazetrackError, ValueError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    except OSError as exc:
        _err(f"I/O error: {exc}")
        return EXIT_ENV


if __name__ == "__main__":
    sys.exit(main())
