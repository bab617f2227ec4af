"""Synthetic camera scenarios, a ground-truth-driven detector and tracking metrics.

Frames are indexed from 0 and frame ``k`` is captured at ``k / fps`` seconds.
Linear motion is in pixels per frame; circular routes use an angular speed
in radians per second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .assignment import solve
from .errors import EvaluationInputError, LineFormatError
from .geometry import BBox
from .kernels import iou_matrix
from .tracker import Detection, StepOutput

__all__ = [
    "LinearMotion",
    "CircularMotion",
    "TargetSpec",
    "DetectorModel",
    "ScenarioConfig",
    "GroundTruthObject",
    "GroundTruthFrame",
    "TrackBox",
    "MetricsReport",
    "identity_embeddings",
    "frame_at",
    "generate",
    "synth_detect",
    "confirmed_boxes",
    "evaluate",
    "format_groundtruth",
    "format_detections",
    "parse_groundtruth",
    "parse_detections",
]


@dataclass(frozen=True)
class LinearMotion:
    start: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)  # px per frame

    def position(self, frame: int, fps: float) -> tuple[float, float]:
        return (self.start[0] + self.velocity[0] * frame, self.start[1] + self.velocity[1] * frame)


@dataclass(frozen=True)
class CircularMotion:
    center: tuple[float, float]
    radius: float
    omega: float  # rad per second
    phase: float = 0.0

    def position(self, frame: int, fps: float) -> tuple[float, float]:
        theta = self.phase + self.omega * (frame / fps)
        return (self.center[0] + self.radius * math.cos(theta),
                self.center[1] + self.radius * math.sin(theta))

    @property
    def period(self) -> float:
        """Seconds per lap."""
        return 2.0 * math.pi / abs(self.omega)


@dataclass
class TargetSpec:
    id: int
    size: tuple[float, float]
    motion: LinearMotion | CircularMotion
    occlusions: list[tuple[int, int]] = field(default_factory=list)  # [start, end) frames
    class_id: int = 0

    def __post_init__(self):
        w, h = self.size
        if not (w > 0 and h > 0):
            raise ValueError(f"target {self.id}: size must be positive")
        self.occlusions = sorted((int(a), int(b)) for a, b in self.occlusions)
        for a, b in self.occlusions:
            if not a < b:
                raise ValueError(f"target {self.id}: empty occlusion interval [{a}, {b})")
        for (_, b0), (a1, _) in zip(self.occlusions, self.occlusions[1:]):
            if a1 < b0:
                raise ValueError(f"target {self.id}: overlapping occlusion intervals")

    def occluded(self, frame: int) -> bool:
        return any(a <= frame < b for a, b in self.occlusions)


@dataclass
class DetectorModel:
    sigma_center: float = 2.0
    sigma_size: float = 0.02
    p_miss: float = 0.0
    fp_rate: float = 0.0
    confidence_mean: float = 0.85
    confidence_sigma: float = 0.05
    appearance_dim: int = 32
    appearance_noise: float = 0.05  # radians

    def __post_init__(self):
        for name in ("p_miss", "confidence_mean"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        for name in ("sigma_center", "sigma_size", "fp_rate", "confidence_sigma", "appearance_noise"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")
        if self.appearance_dim < 2:
            raise ValueError("appearance_dim must be >= 2")


@dataclass
class ScenarioConfig:
    duration: float
    fps: float
    targets: list[TargetSpec]
    frame_w: int = 1920
    frame_h: int = 1080
    seed: int = 0
    detector: DetectorModel = field(default_factory=DetectorModel)

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not self.fps > 0:
            raise ValueError("fps must be positive")
        if not (self.frame_w > 0 and self.frame_h > 0):
            raise ValueError("frame size must be positive")
        if not self.targets:
            raise ValueError("a scenario needs at least one target")
        ids = [t.id for t in self.targets]
        if len(set(ids)) != len(ids):
            raise ValueError("target ids must be unique")
        n = self.n_frames
        for t in self.targets:
            for a, b in t.occlusions:
                if a < 0 or b > n:
                    raise ValueError(f"target {t.id}: occlusion [{a}, {b}) outside [0, {n})")

    @property
    def n_frames(self) -> int:
        # tolerance keeps e.g. 150 s * 30 fps from rounding down to 4499
        return int(math.floor(self.duration * self.fps + 1e-9))


@dataclass(frozen=True)
class GroundTruthObject:
    target_id: int
    bbox: BBox
    visible: bool
    class_id: int = 0


@dataclass(frozen=True)
class GroundTruthFrame:
    index: int
    objects: tuple[GroundTruthObject, ...]

    @property
    def visible(self) -> list[GroundTruthObject]:
        return [o for o in self.objects if o.visible]


def identity_embeddings(config: ScenarioConfig) -> dict[int, np.ndarray]:
    """One unit appearance vector per target, independent of the frame stream."""
    out = {}
    for t in config.targets:
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, t.id]))
        v = rng.standard_normal(config.detector.appearance_dim)
        out[t.id] = v / np.linalg.norm(v)
    return out


def frame_at(config: ScenarioConfig, index: int, shift: tuple[float, float] = (0.0, 0.0)) -> GroundTruthFrame:
    """Ground truth for one frame, with every target displaced by ``shift`` pixels."""
    objs = []
    for t in config.targets:
        x, y = t.motion.position(index, config.fps)
        x += shift[0]
        y += shift[1]
        in_frame = 0.0 <= x < config.frame_w and 0.0 <= y < config.frame_h
        objs.append(GroundTruthObject(t.id, BBox(x, y, *t.size), in_frame and not t.occluded(index),
                                      t.class_id))
    return GroundTruthFrame(index, tuple(objs))


def generate(config: ScenarioConfig) -> Iterator[GroundTruthFrame]:
    for k in range(config.n_frames):
        yield frame_at(config, k)


def _rotate(vec: np.ndarray, angle: float, rng: np.random.Generator) -> np.ndarray:
    """Turn ``vec`` by ``angle`` radians toward a random orthogonal direction."""
    d = rng.standard_normal(vec.shape[0])
    d -= (d @ vec) * vec
    d /= np.linalg.norm(d)
    out = math.cos(angle) * vec + math.sin(angle) * d
    return out / np.linalg.norm(out)


def synth_detect(
    frame: GroundTruthFrame,
    model: DetectorModel,
    rng: np.random.Generator,
    *,
    frame_size: tuple[float, float] = (1920.0, 1080.0),
    embeddings: dict[int, np.ndarray] | None = None,
) -> list[Detection]:
    """Noisy detections of the visible targets plus Poisson false positives.

    Without ``embeddings`` the detections carry no appearance vectors.
    Random draws happen in target order, then for false positives, so a
    fixed generator state gives a fixed output.
    """
    dets = []
    for obj in frame.visible:
        if rng.random() < model.p_miss:
            continue
        b = obj.bbox
        dx, dy = rng.normal(0.0, model.sigma_center, 2) if model.sigma_center > 0 else (0.0, 0.0)
        sw, sh = rng.normal(0.0, model.sigma_size, 2) if model.sigma_size > 0 else (0.0, 0.0)
        conf = rng.normal(model.confidence_mean, model.confidence_sigma) if model.confidence_sigma > 0 \
            else model.confidence_mean
        app = None
        if embeddings is not None:
            angle = rng.normal(0.0, model.appearance_noise) if model.appearance_noise > 0 else 0.0
            app = _rotate(embeddings[obj.target_id], angle, rng) if angle else embeddings[obj.target_id]
        box = BBox(b.cx + dx, b.cy + dy, max(b.w * (1.0 + sw), 1.0), max(b.h * (1.0 + sh), 1.0))
        dets.append(Detection(box, float(min(max(conf, 0.0), 1.0)), obj.class_id, app, obj.target_id))

    n_fp = int(rng.poisson(model.fp_rate)) if model.fp_rate > 0 else 0
    sizes = [o.bbox for o in frame.objects]
    for _ in range(n_fp):
        src = sizes[int(rng.integers(len(sizes)))]
        cx = rng.uniform(0.0, frame_size[0])
        cy = rng.uniform(0.0, frame_size[1])
        conf = rng.normal(model.confidence_mean, model.confidence_sigma) if model.confidence_sigma > 0 \
            else model.confidence_mean
        app = None
        if embeddings is not None:
            v = rng.standard_normal(model.appearance_dim)
            app = v / np.linalg.norm(v)
        dets.append(Detection(BBox(cx, cy, src.w, src.h), float(min(max(conf, 0.0), 1.0)), 0, app, -1))
    return dets


@dataclass(frozen=True)
class TrackBox:
    """A confirmed track's reported box in one frame."""

    track_id: int
    bbox: BBox


def confirmed_boxes(out: StepOutput) -> list[TrackBox]:
    """Snapshot the confirmed tracks of one tracker step, coasting ones included."""
    return [TrackBox(t.id, t.bbox) for t in out.active if t.is_confirmed]


@dataclass
class MetricsReport:
    recognition_rate_per_window: list[tuple[float, float]]
    id_switches: int
    track_fragmentations: int
    mostly_tracked_fraction: float
    visible_count: int = 0
    recognized_count: int = 0

    @property
    def recognition_rate(self) -> float:
        return self.recognized_count / self.visible_count if self.visible_count else 0.0

    def to_dict(self) -> dict:
        return {
            "recognition_rate": self.recognition_rate,
            "recognition_rate_per_window": [
                {"end_s": end, "rate": rate} for end, rate in self.recognition_rate_per_window
            ],
            "id_switches": self.id_switches,
            "track_fragmentations": self.track_fragmentations,
            "mostly_tracked_fraction": self.mostly_tracked_fraction,
            "visible_count": self.visible_count,
            "recognized_count": self.recognized_count,
        }


def evaluate(
    gt: Sequence[GroundTruthFrame],
    tracks: Sequence[Iterable[TrackBox]],
    *,
    fps: float = 30.0,
    window_s: float = 30.0,
    iou_threshold: float = 0.5,
    mostly_tracked: float = 0.8,
) -> MetricsReport:
    """Score per-frame confirmed track boxes against ground truth.

    In each frame visible targets and reported tracks are paired one-to-one
    by maximum total IoU, pairs below ``iou_threshold`` excluded. Rates count
    visible target-frames only. Window rates are cumulative from frame 0 up
    to each ``window_s`` boundary, with a final partial window when the
    stream length is not a multiple; a window with nothing visible reports 0.
    """
    gt = list(gt)
    tracks = [list(t) for t in tracks]
    if len(gt) != len(tracks):
        raise EvaluationInputError(f"{len(gt)} ground-truth frames but {len(tracks)} track frames")
    window = max(int(round(window_s * fps)), 1)

    last_id: dict[int, int] = {}
    was_covered: dict[int, bool] = {}
    covered_n: dict[int, int] = {}
    visible_n: dict[int, int] = {}
    switches = frags = 0
    vis_total = rec_total = 0
    windows = []
    for k, (frame, reported) in enumerate(zip(gt, tracks)):
        vis = frame.visible
        if vis and reported:
            ov = iou_matrix(np.array([o.bbox.as_tuple() for o in vis]),
                            np.array([t.bbox.as_tuple() for t in reported]))
            pairs = dict(solve(1.0 - ov, ov < iou_threshold).pairs)
        else:
            pairs = {}
        for i, obj in enumerate(vis):
            tid = obj.target_id
            visible_n[tid] = visible_n.get(tid, 0) + 1
            if i in pairs:
                track_id = reported[pairs[i]].track_id
                if tid in last_id and last_id[tid] != track_id:
                    switches += 1
                if tid in was_covered and not was_covered[tid]:
                    frags += 1
                last_id[tid] = track_id
                was_covered[tid] = True
                covered_n[tid] = covered_n.get(tid, 0) + 1
            elif tid in was_covered:
                was_covered[tid] = False
        vis_total += len(vis)
        rec_total += len(pairs)
        if (k + 1) % window == 0 or k + 1 == len(gt):
            windows.append(((k + 1) / fps, rec_total / vis_total if vis_total else 0.0))

    mt = sum(1 for tid, n in visible_n.items() if covered_n.get(tid, 0) >= mostly_tracked * n)
    return MetricsReport(
        recognition_rate_per_window=windows,
        id_switches=switches,
        track_fragmentations=frags,
        mostly_tracked_fraction=mt / len(visible_n) if visible_n else 0.0,
        visible_count=vis_total,
        recognized_count=rec_total,
    )


# line exports -----------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.6f}"


def format_groundtruth(frames: Iterable[GroundTruthFrame]) -> Iterator[str]:
    """``frame_idx,target_id,cx,cy,w,h,visible`` with visible as 0/1."""
    for f in frames:
        for o in f.objects:
            b = o.bbox
            yield f"{f.index},{o.target_id},{_fmt(b.cx)},{_fmt(b.cy)},{_fmt(b.w)},{_fmt(b.h)},{int(o.visible)}"


def format_detections(frame_index: int, dets: Iterable[Detection]) -> Iterator[str]:
    """``frame_idx,source_id,cx,cy,w,h,confidence``; false positives carry id -1."""
    for d in dets:
        b = d.bbox
        yield (f"{frame_index},{d.source_id},{_fmt(b.cx)},{_fmt(b.cy)},{_fmt(b.w)},{_fmt(b.h)},"
               f"{_fmt(d.confidence)}")


def _parse_rows(lines: Iterable[str]):
    for n, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split(",")
        if len(parts) != 7:
            raise LineFormatError(n, f"expected 7 comma-separated fields, got {len(parts)}")
        try:
            frame, tid = int(parts[0]), int(parts[1])
            cx, cy, w, h, last = (float(p) for p in parts[2:])
        except ValueError as exc:
            raise LineFormatError(n, str(exc)) from None
        if frame < 0:
            raise LineFormatError(n, f"negative frame index {frame}")
        try:
            box = BBox(cx, cy, w, h)
        except ValueError as exc:
            raise LineFormatError(n, str(exc)) from None
        yield n, frame, tid, box, last


def parse_groundtruth(lines: Iterable[str]) -> list[GroundTruthFrame]:
    """Inverse of ``format_groundtruth``. Frames absent from the text come back empty."""
    by_frame: dict[int, list[GroundTruthObject]] = {}
    for n, frame, tid, box, last in _parse_rows(lines):
        if last not in (0.0, 1.0):
            raise LineFormatError(n, f"visible flag must be 0 or 1, got {last}")
        by_frame.setdefault(frame, []).append(GroundTruthObject(tid, box, bool(last)))
    n_frames = max(by_frame) + 1 if by_frame else 0
    return [GroundTruthFrame(k, tuple(by_frame.get(k, ()))) for k in range(n_frames)]


def parse_detections(lines: Iterable[str]) -> list[list[Detection]]:
    """Inverse of ``format_detections``; index ``k`` holds frame ``k``'s detections."""
    by_frame: dict[int, list[Detection]] = {}
    for n, frame, tid, box, last in _parse_rows(lines):
        if not 0.0 <= last <= 1.0:
            raise LineFormatError(n, f"confidence must be in [0, 1], got {last}")
        by_frame.setdefault(frame, []).append(Detection(box, last, 0, None, tid))
    n_frames = max(by_frame) + 1 if by_frame else 0
    return [by_frame.get(k, []) for k in range(n_frames)]


def read_lines(path) -> list[str]:
    return Path(path).read_text().splitlines()
