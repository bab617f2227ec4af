"""DeepSORT-style multi-target tracker.

Per frame: Kalman predict every live track, cascade-match confirmed tracks on
appearance under a Mahalanobis gate (most recently updated first), IoU or
SIoU match the rest, update matched tracks, spawn tentative tracks for the
leftover detections, then confirm and delete.

A ``Tracker`` keeps every live track's mean, covariance and appearance
gallery in contiguous arrays indexed by slot; ``Track.state`` and the track's
gallery are views into them. Slots stay in creation order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .assignment import solve
from .errors import FeatureUnavailableError
from .filtering import CHI2_95_4DOF, KalmanTrackState, MotionModel
from .geometry import BBox, SIoUParams

__all__ = [
    "Detection",
    "TrackStatus",
    "Track",
    "TrackerConfig",
    "StepOutput",
    "Tracker",
    "appearance_cost",
    "cascade_match",
    "iou_match",
]


@dataclass(eq=False)
class Detection:
    """One detector output. ``source_id`` carries the ground-truth id of
    synthesized detections (-1 for false positives and external input)."""

    bbox: BBox
    confidence: float = 1.0
    class_id: int = 0
    appearance: np.ndarray | None = None
    source_id: int = -1

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")
        if self.appearance is not None:
            self.appearance = np.asarray(self.appearance, dtype=np.float64).reshape(-1)
            norm = float(np.sqrt(self.appearance @ self.appearance))
            if abs(norm - 1.0) > 1e-6:
                raise ValueError(f"appearance vector must be unit norm, got {norm}")


class TrackStatus(enum.Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    DELETED = "deleted"


class Track:
    """A tracked identity.

    The gallery is a ring buffer of the last ``gallery_size`` appearance
    vectors. Until it fills, unused rows repeat the first vector, so a
    minimum over all rows equals the minimum over the stored ones.
    """

    __slots__ = (
        "id", "state", "status", "hits", "age", "time_since_update", "class_id",
        "confidence", "gallery_size", "_gallery", "_gallery_count", "_gallery_next",
    )

    def __init__(self, track_id: int, state: KalmanTrackState, class_id: int = 0,
                 confidence: float = 1.0, gallery_size: int = 10):
        self.id = track_id
        self.state = state
        self.status = TrackStatus.TENTATIVE
        self.hits = 1
        self.age = 1
        self.time_since_update = 0
        self.class_id = class_id
        self.confidence = confidence
        self.gallery_size = gallery_size
        self._gallery = None
        self._gallery_count = 0
        self._gallery_next = 0

    def add_feature(self, vec: np.ndarray) -> None:
        if self._gallery is None:
            self._gallery = np.empty((self.gallery_size, vec.shape[0]))
        if self._gallery_count == 0:
            self._gallery[:] = vec
        else:
            self._gallery[self._gallery_next] = vec
        self._gallery_next = (self._gallery_next + 1) % self.gallery_size
        self._gallery_count = min(self._gallery_count + 1, self.gallery_size)

    @property
    def has_features(self) -> bool:
        return self._gallery_count > 0

    @property
    def gallery(self) -> list[np.ndarray]:
        """Stored appearance vectors, oldest first."""
        n, cap = self._gallery_count, self.gallery_size
        start = (self._gallery_next - n) % cap
        return [self._gallery[(start + k) % cap].copy() for k in range(n)]

    @property
    def bbox(self) -> BBox:
        return BBox(*_state_boxes(self.state.mean.reshape(1, 7))[0].tolist())

    @property
    def is_confirmed(self) -> bool:
        return self.status is TrackStatus.CONFIRMED

    @property
    def is_tentative(self) -> bool:
        return self.status is TrackStatus.TENTATIVE

    def __repr__(self):
        return (f"Track(id={self.id}, status={self.status.value}, hits={self.hits}, "
                f"age={self.age}, tsu={self.time_since_update})")


@dataclass
class TrackerConfig:
    max_age: int = 30
    n_init: int = 3
    iou_match_threshold: float = 0.3
    appearance_threshold: float = 0.2
    gate_threshold: float = CHI2_95_4DOF
    gallery_size: int = 10
    cost_mode: str = "iou"
    siou: SIoUParams = field(default_factory=SIoUParams)
    multi_class: bool = False
    motion: MotionModel = field(default_factory=MotionModel)

    def __post_init__(self):
        if self.max_age < 1:
            raise ValueError("max_age must be >= 1")
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")
        if self.gallery_size < 1:
            raise ValueError("gallery_size must be >= 1")
        if self.cost_mode not in ("iou", "siou"):
            raise ValueError("cost_mode must be 'iou' or 'siou'")
        if not -1.0 <= self.iou_match_threshold <= 1.0:
            raise ValueError("iou_match_threshold must be in [-1, 1]")
        if not 0.0 <= self.appearance_threshold <= 2.0:
            raise ValueError("appearance_threshold must be in [0, 2]")
        if not self.gate_threshold > 0:
            raise ValueError("gate_threshold must be positive")


@dataclass
class StepOutput:
    active: list[Track]
    created: list[int]
    confirmed: list[int]
    deleted: list[int]


def _state_boxes(means: np.ndarray) -> np.ndarray:
    # coasting can drive area or aspect toward zero; floor them so boxes stay valid
    s = np.maximum(means[:, 2], 1e-6)
    r = np.maximum(means[:, 3], 1e-6)
    return np.column_stack([means[:, 0], means[:, 1], np.sqrt(s * r), np.sqrt(s / r)])


def _det_boxes(detections) -> np.ndarray:
    if not detections:
        return np.empty((0, 4))
    return np.array([d.bbox.as_tuple() for d in detections], dtype=np.float64)


def _measurements(boxes: np.ndarray) -> np.ndarray:
    """(cx, cy, w, h) rows to (u, v, s, r) rows."""
    return np.column_stack(
        [boxes[:, 0], boxes[:, 1], boxes[:, 2] * boxes[:, 3], boxes[:, 2] / boxes[:, 3]]
    )


def appearance_cost(track: Track, det: Detection) -> float:
    """Smallest cosine distance between the detection and the track's gallery."""
    if det.appearance is None or not track.has_features:
        raise FeatureUnavailableError(f"no appearance features for track {track.id} / detection")
    return float(np.min(1.0 - track._gallery @ det.appearance))


def _cascade(tsu, means, covs, galleries, track_cls, feats, z, det_cls, config):
    """Level-by-level assignment on index arrays. Returns (row, col) pairs."""
    n, g, _ = galleries.shape
    sims = (galleries.reshape(n * g, -1) @ np.ascontiguousarray(feats.T)).reshape(n, g, -1)
    cost = 1.0 - sims.max(axis=1)
    gate = kernels.gating_matrix(means, covs, config.motion.r_diag, z)
    forbidden = (gate > config.gate_threshold) | (cost > config.appearance_threshold)
    if config.multi_class:
        forbidden |= track_cls[:, None] != det_cls[None, :]

    free = np.ones(z.shape[0], dtype=bool)
    pairs = []
    levels = np.unique(tsu)
    for level in levels:
        rows = np.flatnonzero(tsu == level) if levels.size > 1 else np.arange(n)
        cols = np.flatnonzero(free)
        if cols.size == 0:
            break
        sub = np.ix_(rows, cols)
        result = solve(cost[sub], forbidden[sub])
        for i, j in result.pairs:
            pairs.append((int(rows[i]), int(cols[j])))
            free[cols[j]] = False
    return pairs


def cascade_match(tracks, detections, config: TrackerConfig, det_indices=None):
    """Match confirmed tracks by appearance in order of time since update.

    Returns ``(pairs, leftover_tracks, leftover_det_indices)`` where pairs are
    ``(track, detection_index)``. Tracks without a gallery and detections
    without an appearance vector pass straight through as leftovers.
    """
    if det_indices is None:
        det_indices = list(range(len(detections)))
    cand = [t for t in tracks if t.has_features]
    cand_dets = [j for j in det_indices if detections[j].appearance is not None]
    if not cand or not cand_dets:
        return [], list(tracks), list(det_indices)
    dets = [detections[j] for j in cand_dets]
    rc = _cascade(
        np.array([t.time_since_update for t in cand]),
        np.array([t.state.mean for t in cand]),
        np.array([t.state.cov for t in cand]),
        np.array([t._gallery for t in cand]),
        np.array([t.class_id for t in cand]),
        np.array([d.appearance for d in dets]),
        _measurements(_det_boxes(dets)),
        np.array([d.class_id for d in dets]),
        config,
    )
    pairs = [(cand[i], cand_dets[j]) for i, j in rc]
    matched_t = {t.id for t, _ in pairs}
    matched_d = {j for _, j in pairs}
    return (
        pairs,
        [t for t in tracks if t.id not in matched_t],
        [j for j in det_indices if j not in matched_d],
    )


def _overlap_match(track_boxes, det_boxes, track_cls, det_cls, config):
    if config.cost_mode == "siou":
        overlap = kernels.siou_matrix(track_boxes, det_boxes, config.siou.epsilon, config.siou.alpha)
    else:
        overlap = kernels.iou_matrix(track_boxes, det_boxes)
    forbidden = overlap < config.iou_match_threshold
    if config.multi_class:
        forbidden |= track_cls[:, None] != det_cls[None, :]
    return solve(1.0 - overlap, forbidden).pairs


def iou_match(tracks, detections, config: TrackerConfig, det_indices=None):
    """Match predicted boxes to detection boxes on cost 1 - overlap.

    Overlap is IoU, or SIoU when ``cost_mode == "siou"``; pairs below
    ``iou_match_threshold`` are forbidden.
    """
    if det_indices is None:
        det_indices = list(range(len(detections)))
    if not tracks or not det_indices:
        return [], list(tracks), list(det_indices)
    dets = [detections[j] for j in det_indices]
    rc = _overlap_match(
        _state_boxes(np.array([t.state.mean for t in tracks])),
        _det_boxes(dets),
        np.array([t.class_id for t in tracks]),
        np.array([d.class_id for d in dets]),
        config,
    )
    pairs = [(tracks[i], det_indices[j]) for i, j in rc]
    mt = {i for i, _ in rc}
    md = {j for _, j in rc}
    return (
        pairs,
        [t for k, t in enumerate(tracks) if k not in mt],
        [det_indices[j] for j in range(len(dets)) if j not in md],
    )


class Tracker:
    """Single-writer tracker; call ``step`` once per frame, in frame order."""

    def __init__(self, config: TrackerConfig | None = None):
        self.config = config or TrackerConfig()
        self.tracks: list[Track] = []
        self.frame_count = 0
        self._next_id = 1
        self._means = np.zeros((0, 7))
        self._covs = np.zeros((0, 7, 7))
        self._bank = None  # (capacity, gallery_size, dim)

    # storage -----------------------------------------------------------

    def _rebind(self, start: int = 0) -> None:
        for slot in range(start, len(self.tracks)):
            t = self.tracks[slot]
            t.state = KalmanTrackState.wrap(self._means[slot], self._covs[slot])
            if t._gallery is not None:
                t._gallery = self._bank[slot]

    def _reserve(self, n: int, dim: int | None) -> None:
        cap = self._means.shape[0]
        grow = n > cap
        if grow:
            cap = max(n, 2 * cap, 16)
            means = np.zeros((cap, 7))
            covs = np.zeros((cap, 7, 7))
            live = len(self.tracks)
            means[:live] = self._means[:live]
            covs[:live] = self._covs[:live]
            self._means, self._covs = means, covs
            if self._bank is not None:
                bank = np.zeros((cap,) + self._bank.shape[1:])
                bank[:live] = self._bank[:live]
                self._bank = bank
        if dim is not None and self._bank is None:
            self._bank = np.zeros((cap, self.config.gallery_size, dim))
        if grow:
            self._rebind()

    def _spawn(self, detections, det_z) -> list[int]:
        if not detections:
            return []
        cfg = self.config
        first = len(self.tracks)
        dim = next((d.appearance.shape[0] for d in detections if d.appearance is not None), None)
        self._reserve(first + len(detections), dim)
        end = first + len(detections)
        self._means[first:end, :4] = det_z
        self._means[first:end, 4:] = 0.0
        self._covs[first:end] = np.diag(cfg.motion.p0_diag)
        ids = []
        for slot, det in enumerate(detections, start=first):
            t = Track(self._next_id, KalmanTrackState.wrap(self._means[slot], self._covs[slot]),
                      det.class_id, det.confidence, cfg.gallery_size)
            if det.appearance is not None:
                t._gallery = self._bank[slot]
                t.add_feature(det.appearance)
            self._next_id += 1
            self.tracks.append(t)
            ids.append(t.id)
        return ids

    def _compact(self, keep: list[int]) -> None:
        n = len(self.tracks)
        first_moved = next((k for k, slot in enumerate(keep) if k != slot), len(keep))
        idx = np.asarray(keep, dtype=np.int64)
        self._means[: len(keep)] = self._means[idx]
        self._covs[: len(keep)] = self._covs[idx]
        if self._bank is not None:
            self._bank[: len(keep)] = self._bank[idx]
        for slot in sorted(set(range(n)) - set(keep)):
            t = self.tracks[slot]
            t.state = t.state.copy()
            if t._gallery is not None:
                t._gallery = t._gallery.copy()
        self.tracks = [self.tracks[k] for k in keep]
        self._rebind(first_moved)

    def translate(self, dx: float, dy: float) -> None:
        """Move every live track by a known image displacement in pixels.

        For callers that steer the camera themselves: applying the view shift
        they commanded keeps predictions aligned with the next frame.
        """
        n = len(self.tracks)
        self._means[:n, 0] += dx
        self._means[:n, 1] += dy

    # frame step --------------------------------------------------------

    def step(self, detections) -> StepOutput:
        cfg = self.config
        detections = list(detections)
        self.frame_count += 1
        n = len(self.tracks)
        tracks = self.tracks

        # (1) predict
        if n:
            kernels.kf_predict(self._means[:n], self._covs[:n], cfg.motion.dt, cfg.motion.q_diag)
            for t in tracks:
                t.age += 1
                t.time_since_update += 1

        det_boxes = _det_boxes(detections)
        det_z = _measurements(det_boxes)
        det_cls = np.array([d.class_id for d in detections], dtype=np.int64)
        track_cls = np.array([t.class_id for t in tracks], dtype=np.int64)
        free_det = np.ones(len(detections), dtype=bool)
        matched = np.zeros(n, dtype=bool)
        pairs = []

        # (2) cascade on confirmed tracks with features
        confirmed = TrackStatus.CONFIRMED
        slots = np.array(
            [k for k, t in enumerate(tracks) if t.status is confirmed and t._gallery_count],
            dtype=np.int64,
        )
        feat_dets = np.array([j for j, d in enumerate(detections) if d.appearance is not None],
                             dtype=np.int64)
        if slots.size and feat_dets.size:
            rc = _cascade(
                np.array([tracks[k].time_since_update for k in slots.tolist()]),
                self._means[slots],
                self._covs[slots],
                self._bank[slots],
                track_cls[slots],
                np.array([detections[j].appearance for j in feat_dets]),
                det_z[feat_dets],
                det_cls[feat_dets],
                cfg,
            )
            for i, j in rc:
                pairs.append((int(slots[i]), int(feat_dets[j])))
                matched[slots[i]] = True
                free_det[feat_dets[j]] = False

        # (3) overlap match: tentative tracks plus unmatched confirmed ones
        rest = np.flatnonzero(~matched)
        left = np.flatnonzero(free_det)
        if rest.size and left.size:
            rc = _overlap_match(
                _state_boxes(self._means[rest]), det_boxes[left],
                track_cls[rest], det_cls[left], cfg,
            )
            for i, j in rc:
                pairs.append((int(rest[i]), int(left[j])))
                free_det[left[j]] = False

        # (4) update
        if pairs:
            pairs.sort()
            rows = np.array([p[0] for p in pairs], dtype=np.int64)
            cols = np.array([p[1] for p in pairs], dtype=np.int64)
            means = self._means[rows]
            covs = self._covs[rows]
            kernels.kf_update(means, covs, det_z[cols], cfg.motion.r_diag)
            self._means[rows] = means
            self._covs[rows] = covs
            for slot, j in pairs:
                t = tracks[slot]
                det = detections[j]
                t.hits += 1
                t.time_since_update = 0
                t.confidence = det.confidence
                if det.appearance is not None:
                    if t._gallery is None:
                        self._reserve(n, det.appearance.shape[0])
                        t._gallery = self._bank[slot]
                    t.add_feature(det.appearance)

        # (5) spawn
        spawn = np.flatnonzero(free_det)
        created = self._spawn([detections[j] for j in spawn], det_z[spawn])

        # (6) confirm, (7) delete
        newly_confirmed, deleted, keep = [], [], []
        tentative = TrackStatus.TENTATIVE
        for slot, t in enumerate(self.tracks):
            tsu = t.time_since_update
            if t.status is tentative and tsu == 0 and t.hits >= cfg.n_init:
                t.status = confirmed
                newly_confirmed.append(t.id)
            if (t.status is tentative and tsu > 0) or tsu > cfg.max_age:
                t.status = TrackStatus.DELETED
                deleted.append(t.id)
            else:
                keep.append(slot)
        if deleted:
            self._compact(keep)
        return StepOutput(list(self.tracks), created, newly_confirmed, deleted)
