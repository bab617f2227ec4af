"""Closed-loop frame pipeline with modeled per-stage latency and a pan/tilt gimbal.

Stage latencies are drawn from configured distributions rather than timed,
so reports are reproducible on any machine. The tracker itself is real;
its wall-clock cost is reported separately in ``RunResult.step_wall_ms``
and never enters the modeled totals.
"""

from __future__ import annotations

import csv
import io
import math
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyReportError, LineFormatError
from .simworld import (
    GroundTruthFrame,
    MetricsReport,
    ScenarioConfig,
    TrackBox,
    confirmed_boxes,
    evaluate,
    frame_at,
    identity_embeddings,
    synth_detect,
)
from .tracker import Detection, Tracker, TrackerConfig

__all__ = [
    "EXECUTORS",
    "LatencyModel",
    "StageSpec",
    "GimbalConfig",
    "PipelineConfig",
    "FrameTiming",
    "LaneSchedule",
    "lane_schedule",
    "GimbalState",
    "GimbalCommand",
    "GimbalSample",
    "gimbal_control",
    "gimbal_step",
    "RunResult",
    "run",
    "StageStats",
    "LatencyReport",
    "latency_report",
    "reduction_percent",
    "timing_csv",
    "gimbal_csv",
    "parse_timing_csv",
]

EXECUTORS = ("host", "accelerator", "transfer")


@dataclass(frozen=True)
class LatencyModel:
    """Millisecond latency distribution: constant, normal or empirical resampling."""

    kind: str
    value: float = 0.0
    sigma: float = 0.0
    samples: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("constant", "normal", "empirical"):
            raise ValueError(f"unknown latency model {self.kind!r}")
        if self.kind == "empirical":
            if not self.samples:
                raise ValueError("empirical latency model needs samples")
            if any(not math.isfinite(s) or s < 0 for s in self.samples):
                raise ValueError("empirical samples must be finite and >= 0")
        elif not (math.isfinite(self.value) and self.value >= 0):
            raise ValueError("latency must be finite and >= 0")
        if not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")

    @classmethod
    def constant(cls, ms: float) -> LatencyModel:
        return cls("constant", float(ms))

    @classmethod
    def normal(cls, mean: float, sigma: float) -> LatencyModel:
        return cls("normal", float(mean), float(sigma))

    @classmethod
    def empirical(cls, samples: Iterable[float]) -> LatencyModel:
        return cls("empirical", samples=tuple(float(s) for s in samples))

    @property
    def mean(self) -> float:
        if self.kind == "empirical":
            return math.fsum(self.samples) / len(self.samples)
        return self.value

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "constant":
            return self.value
        if self.kind == "normal":
            return max(0.0, float(rng.normal(self.value, self.sigma)))
        return self.samples[int(rng.integers(len(self.samples)))]


@dataclass(frozen=True)
class StageSpec:
    name: str
    executor: str
    latency: LatencyModel

    def __post_init__(self):
        if self.executor not in EXECUTORS:
            raise ValueError(f"stage {self.name!r}: executor must be one of {EXECUTORS}")
        if not self.name or "," in self.name:
            raise ValueError(f"stage name {self.name!r} must be non-empty and comma-free")


@dataclass
class GimbalConfig:
    k_pan: float = 100.0  # deg/s at the frame edge
    k_tilt: float = 100.0
    max_rate: float = 120.0  # deg/s
    pan_limits: tuple[float, float] = (-170.0, 170.0)
    tilt_limits: tuple[float, float] = (-90.0, 30.0)
    hfov_deg: float = 60.0

    def __post_init__(self):
        if not self.max_rate >= 0:
            raise ValueError("max_rate must be >= 0")
        if not self.hfov_deg > 0:
            raise ValueError("hfov_deg must be positive")
        for name in ("pan_limits", "tilt_limits"):
            lo, hi = getattr(self, name)
            if not lo <= 0.0 <= hi:
                raise ValueError(f"{name} must bracket 0")


@dataclass
class PipelineConfig:
    stages: list[StageSpec]
    accelerator_workers: int = 1
    seed: int = 0
    gimbal: GimbalConfig = field(default_factory=GimbalConfig)

    def __post_init__(self):
        if not self.stages:
            raise ValueError("a pipeline needs at least one stage")
        names = [s.name for s in self.stages]
        if len(set(names)) != len(names):
            raise ValueError("stage names must be unique")
        if self.accelerator_workers < 1:
            raise ValueError("accelerator_workers must be >= 1")

    @property
    def stage_names(self) -> list[str]:
        return [s.name for s in self.stages]


@dataclass(frozen=True)
class FrameTiming:
    frame: int
    stages: tuple[tuple[str, float], ...]
    total: float

    @classmethod
    def from_stages(cls, frame: int, stages: Sequence[tuple[str, float]]) -> FrameTiming:
        stages = tuple((n, float(v)) for n, v in stages)
        total = 0.0
        for _, v in stages:
            total += v
        return cls(frame, stages, total)

    def stage(self, name: str) -> float:
        return dict(self.stages)[name]


@dataclass
class LaneSchedule:
    finish: list[float]  # per job, ms
    lane: list[int]
    makespan: float

    @property
    def throughput(self) -> float:
        """Jobs per millisecond."""
        return len(self.finish) / self.makespan if self.makespan > 0 else math.inf


def lane_schedule(service: Sequence[float], workers: int, arrivals: Sequence[float] | None = None) -> LaneSchedule:
    """Round-robin dispatch of job ``i`` to lane ``i % workers``, FIFO per lane.

    A lane's busy period starts when a job finds it idle; finish times within
    a busy period are the start plus an exactly rounded running sum, so
    constant service ``s`` gives ``c * s`` after ``c`` back-to-back jobs.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    n = len(service)
    arrivals = [0.0] * n if arrivals is None else list(arrivals)
    if len(arrivals) != n:
        raise ValueError("arrivals and service lengths differ")
    anchor = [0.0] * workers
    busy: list[list[float]] = [[] for _ in range(workers)]
    free = [0.0] * workers
    finish, lanes = [], []
    for i, (a, s) in enumerate(zip(arrivals, service)):
        k = i % workers
        if a > free[k] or not busy[k]:
            anchor[k] = max(a, free[k])
            busy[k] = []
        busy[k].append(s)
        free[k] = anchor[k] + math.fsum(busy[k])
        finish.append(free[k])
        lanes.append(k)
    return LaneSchedule(finish, lanes, max(finish, default=0.0))


@dataclass
class GimbalState:
    pan: float = 0.0
    tilt: float = 0.0
    pan_limits: tuple[float, float] = (-170.0, 170.0)
    tilt_limits: tuple[float, float] = (-90.0, 30.0)
    max_rate: float = 120.0

    def __post_init__(self):
        if not (self.pan_limits[0] <= self.pan <= self.pan_limits[1]):
            raise ValueError("pan outside its limits")
        if not (self.tilt_limits[0] <= self.tilt <= self.tilt_limits[1]):
            raise ValueError("tilt outside its limits")


@dataclass(frozen=True)
class GimbalCommand:
    pan_rate: float = 0.0  # deg/s
    tilt_rate: float = 0.0


def _clamp(x: float, lo: float, hi: float) -> float:
    return min(max(x, lo), hi)


def gimbal_control(center: tuple[float, float], frame_size: tuple[float, float],
                   gains: tuple[float, float] = (100.0, 100.0), max_rate: float = 120.0) -> GimbalCommand:
    """Proportional rates from the target's offset, normalized to the half-frame."""
    w, h = frame_size
    if not (w > 0 and h > 0):
        raise ValueError("frame size must be positive")
    ex = (center[0] - w / 2.0) / (w / 2.0)
    ey = (center[1] - h / 2.0) / (h / 2.0)
    return GimbalCommand(_clamp(gains[0] * ex, -max_rate, max_rate),
                         _clamp(gains[1] * ey, -max_rate, max_rate))


def gimbal_step(state: GimbalState, cmd: GimbalCommand, dt: float) -> GimbalState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    pr = _clamp(cmd.pan_rate, -state.max_rate, state.max_rate)
    tr = _clamp(cmd.tilt_rate, -state.max_rate, state.max_rate)
    return GimbalState(
        _clamp(state.pan + pr * dt, *state.pan_limits),
        _clamp(state.tilt + tr * dt, *state.tilt_limits),
        state.pan_limits,
        state.tilt_limits,
        state.max_rate,
    )


@dataclass(frozen=True)
class GimbalSample:
    frame: int
    pan: float
    tilt: float
    pan_rate: float
    tilt_rate: float


@dataclass
class RunResult:
    timings: list[FrameTiming]
    metrics: MetricsReport
    gimbal: list[GimbalSample]
    tracks: list[list[TrackBox]]
    lanes: LaneSchedule
    groundtruth: list[GroundTruthFrame] = field(default_factory=list)
    detections: list[list[Detection]] = field(default_factory=list)
    step_wall_ms: list[float] = field(default_factory=list)


def _streams(scenario: ScenarioConfig, pipe: PipelineConfig):
    lat = np.random.default_rng(np.random.SeedSequence([pipe.seed, 1]))
    det = np.random.default_rng(np.random.SeedSequence([scenario.seed, 2]))
    return lat, det


def _draw(pipe: PipelineConfig, rng: np.random.Generator, k: int) -> FrameTiming:
    return FrameTiming.from_stages(k, [(s.name, s.latency.sample(rng)) for s in pipe.stages])


def _gaze_target(tracks: list[TrackBox], conf: dict[int, float]):
    best = None
    for t in tracks:
        key = (conf[t.track_id], -t.track_id)
        if best is None or key > best[0]:
            best = (key, t)
    return None if best is None else best[1]


def run(scenario: ScenarioConfig, tracker_config: TrackerConfig | None, pipe: PipelineConfig,
        *, threaded: bool = False, queue_depth: int = 8) -> RunResult:
    """Simulate the capture, detect, track and gaze loop over every frame.

    Each frame: draw stage latencies, shift ground truth by the current
    gimbal angles, synthesize detections, step the tracker, steer toward
    the highest-confidence confirmed track, integrate the gimbal and move
    the tracks by the resulting view shift. The
    accelerator stages of all frames are then dispatched over
    ``pipe.accelerator_workers`` lanes with every frame available at t=0.

    ``threaded=True`` moves latency draws into a producer thread that hands
    frames over a bounded queue in order. Latency and detector randomness
    use separate streams, so both modes return identical results.
    """
    tcfg = tracker_config or TrackerConfig()
    gcfg = pipe.gimbal
    n = scenario.n_frames
    dt = 1.0 / scenario.fps
    px_per_deg = scenario.frame_w / gcfg.hfov_deg
    frame_size = (float(scenario.frame_w), float(scenario.frame_h))
    lat_rng, det_rng = _streams(scenario, pipe)
    emb = identity_embeddings(scenario)
    tracker = Tracker(tcfg)
    g = GimbalState(0.0, 0.0, gcfg.pan_limits, gcfg.tilt_limits, gcfg.max_rate)

    if threaded:
        q: queue.Queue = queue.Queue(maxsize=max(queue_depth, 1))

        def produce():
            for k in range(n):
                q.put(_draw(pipe, lat_rng, k))
            q.put(None)

        worker = threading.Thread(target=produce, name="gazetrack-capture", daemon=True)
        worker.start()
        next_timing = q.get
    else:
        worker = None

        def next_timing():
            return _draw(pipe, lat_rng, len(timings))

    timings, gimbal, gt, reported, all_dets, wall = [], [], [], [], [], []
    for k in range(n):
        timing = next_timing()
        timings.append(timing)
        shift = (-g.pan * px_per_deg, -g.tilt * px_per_deg)
        frame = frame_at(scenario, k, shift)
        dets = synth_detect(frame, scenario.detector, det_rng, frame_size=frame_size, embeddings=emb)
        t0 = time.perf_counter()
        out = tracker.step(dets)
        wall.append((time.perf_counter() - t0) * 1e3)
        boxes = confirmed_boxes(out)
        gt.append(frame)
        all_dets.append(dets)
        reported.append(boxes)

        target = _gaze_target(boxes, {t.id: t.confidence for t in out.active})
        if target is None:
            cmd = GimbalCommand()
        else:
            cmd = gimbal_control((target.bbox.cx, target.bbox.cy), frame_size,
                                 (gcfg.k_pan, gcfg.k_tilt), gcfg.max_rate)
        prev = g
        g = gimbal_step(g, cmd, dt)
        # the view moved by a commanded amount; carry the tracks along with it
        tracker.translate(-(g.pan - prev.pan) * px_per_deg, -(g.tilt - prev.tilt) * px_per_deg)
        gimbal.append(GimbalSample(k, g.pan, g.tilt, cmd.pan_rate, cmd.tilt_rate))
    if worker is not None:
        q.get()  # end marker
        worker.join()

    accel = [math.fsum(v for name, v in t.stages if name in _accel_names(pipe)) for t in timings]
    return RunResult(
        timings=timings,
        metrics=evaluate(gt, reported, fps=scenario.fps),
        gimbal=gimbal,
        tracks=reported,
        lanes=lane_schedule(accel, pipe.accelerator_workers),
        groundtruth=gt,
        detections=all_dets,
        step_wall_ms=wall,
    )


def _accel_names(pipe: PipelineConfig) -> set[str]:
    return {s.name for s in pipe.stages if s.executor == "accelerator"}


# reports -----------------------------------------------------------------

@dataclass(frozen=True)
class StageStats:
    n: int
    mean: float
    std: float
    min: float
    max: float
    p50: float
    p95: float
    p99: float

    @classmethod
    def of(cls, values: Sequence[float]) -> StageStats:
        x = sorted(float(v) for v in values)
        n = len(x)
        if n == 0:
            raise EmptyReportError("no samples")
        mean = math.fsum(x) / n
        std = math.sqrt(math.fsum((v - mean) ** 2 for v in x) / (n - 1)) if n > 1 else 0.0

        def rank(p):
            return x[max(math.ceil(p / 100.0 * n), 1) - 1]

        return cls(n, mean, std, x[0], x[-1], rank(50), rank(95), rank(99))

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("n", "mean", "std", "min", "max", "p50", "p95", "p99")}


@dataclass(frozen=True)
class LatencyReport:
    total: StageStats
    stages: dict[str, StageStats]

    def to_dict(self) -> dict:
        return {"total_ms": self.total.to_dict(), "stages_ms": {k: v.to_dict() for k, v in self.stages.items()}}

    def format(self) -> str:
        cols = ("mean", "std", "min", "max", "p50", "p95", "p99")
        width = max([len("total")] + [len(k) for k in self.stages])
        head = f"{'':{width}}  " + "  ".join(f"{c:>9}" for c in cols)
        lines = [f"frames: {self.total.n}", head]
        for name, st in list(self.stages.items()) + [("total", self.total)]:
            lines.append(f"{name:{width}}  " + "  ".join(f"{getattr(st, c):9.3f}" for c in cols))
        return "\n".join(lines)


def latency_report(timings: Sequence[FrameTiming]) -> LatencyReport:
    """Sample statistics in ms: std with the n - 1 divisor, nearest-rank percentiles."""
    timings = list(timings)
    if not timings:
        raise EmptyReportError("latency report needs at least one frame")
    names = [n for n, _ in timings[0].stages]
    return LatencyReport(
        StageStats.of([t.total for t in timings]),
        {name: StageStats.of([t.stage(name) for t in timings]) for name in names},
    )


def reduction_percent(before: float, after: float) -> float:
    if not before > 0:
        raise ValueError("reference latency must be positive")
    return (before - after) / before * 100.0


# CSV ---------------------------------------------------------------------

def _f(x: float) -> str:
    return f"{x:.6f}"


def timing_csv(timings: Sequence[FrameTiming], stage_names: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["frame", *stage_names, "total_ms"])
    for t in timings:
        w.writerow([t.frame, *(_f(v) for _, v in t.stages), _f(t.total)])
    return buf.getvalue()


def gimbal_csv(samples: Sequence[GimbalSample]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["frame", "pan_deg", "tilt_deg", "pan_rate", "tilt_rate"])
    for s in samples:
        w.writerow([s.frame, _f(s.pan), _f(s.tilt), _f(s.pan_rate), _f(s.tilt_rate)])
    return buf.getvalue()


def parse_timing_csv(text: str) -> list[FrameTiming]:
    """Read a timing export. The stored ``total_ms`` column is kept as written."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise LineFormatError(1, "missing header")
    header = [c.strip() for c in rows[0]]
    if len(header) < 3 or header[0] != "frame" or header[-1] != "total_ms":
        raise LineFormatError(1, "header must be frame,<stages...>,total_ms")
    names = header[1:-1]
    out = []
    for n, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise LineFormatError(n, f"expected {len(header)} fields, got {len(row)}")
        try:
            frame = int(row[0])
            vals = [float(c) for c in row[1:]]
        except ValueError as exc:
            raise LineFormatError(n, str(exc)) from None
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            raise LineFormatError(n, "latencies must be finite and >= 0")
        out.append(FrameTiming(frame, tuple(zip(names, vals[:-1])), vals[-1]))
    return out
