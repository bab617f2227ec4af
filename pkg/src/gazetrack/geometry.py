"""Axis-aligned boxes, overlap measures and the tracker's (u, v, s, r) form."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidStateError

__all__ = [
    "BBox",
    "SIoUParams",
    "SIoUBreakdown",
    "iou",
    "siou",
    "bbox_to_state",
    "state_to_bbox",
    "boxes_to_array",
]


@dataclass(frozen=True, slots=True)
class BBox:
    """Box stored as center and size, in pixels."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box size must be positive, got w={self.w}, h={self.h}")
        if not all(math.isfinite(v) for v in (self.cx, self.cy, self.w, self.h)):
            raise ValueError("box coordinates must be finite")

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> BBox:
        return cls((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)

    @property
    def corners(self) -> tuple[float, float, float, float]:
        hw, hh = self.w / 2.0, self.h / 2.0
        return (self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)

    @property
    def area(self) -> float:
        return self.w * self.h

    def translated(self, dx: float, dy: float) -> BBox:
        return BBox(self.cx + dx, self.cy + dy, self.w, self.h)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h)


@dataclass(frozen=True, slots=True)
class SIoUParams:
    epsilon: float = 0.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")


@dataclass(frozen=True, slots=True)
class SIoUBreakdown:
    iou: float
    c_d: float
    c_s: float
    siou: float


def _intersection(a: BBox, b: BBox) -> float:
    ax1, ay1, ax2, ay2 = a.corners
    bx1, by1, bx2, by2 = b.corners
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    # touching edges give zero area
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: BBox, b: BBox) -> float:
    inter = _intersection(a, b)
    if inter == 0.0:
        return 0.0
    # rounding can push identical boxes a hair above 1
    return min(inter / (a.area + b.area - inter), 1.0)


def _distance_cost(a: BBox, b: BBox) -> float:
    ax1, ay1, ax2, ay2 = a.corners
    bx1, by1, bx2, by2 = b.corners
    ew = max(ax2, bx2) - min(ax1, bx1)
    eh = max(ay2, by2) - min(ay1, by1)
    d2 = (a.cx - b.cx) ** 2 + (a.cy - b.cy) ** 2
    return d2 / (ew * ew + eh * eh)


def _shape_cost(a: BBox, b: BBox) -> float:
    return 0.5 * (abs(a.w - b.w) / max(a.w, b.w) + abs(a.h - b.h) / max(a.h, b.h))


def siou(a: BBox, b: BBox, p: SIoUParams = SIoUParams()) -> SIoUBreakdown:
    """IoU penalised by normalised center distance and shape mismatch.

    ``siou = iou - (0.5 * (c_d + c_s) + epsilon) ** alpha``. Both costs are in
    [0, 1] and vanish for identical boxes, so ``siou(a, a) = 1 - epsilon**alpha``.
    """
    overlap = iou(a, b)
    c_d = _distance_cost(a, b)
    c_s = _shape_cost(a, b)
    score = overlap - (0.5 * (c_d + c_s) + p.epsilon) ** p.alpha
    return SIoUBreakdown(iou=overlap, c_d=c_d, c_s=c_s, siou=score)


def bbox_to_state(b: BBox) -> tuple[float, float, float, float]:
    return (b.cx, b.cy, b.w * b.h, b.w / b.h)


def state_to_bbox(u: float, v: float, s: float, r: float) -> BBox:
    if not (s > 0 and r > 0):
        raise InvalidStateError(f"area and aspect ratio must be positive (s={s}, r={r})")
    return BBox(u, v, math.sqrt(s * r), math.sqrt(s / r))


def boxes_to_array(boxes) -> np.ndarray:
    """Stack boxes into an (n, 4) float64 array of (cx, cy, w, h)."""
    if len(boxes) == 0:
        return np.empty((0, 4), dtype=np.float64)
    return np.array([(b.cx, b.cy, b.w, b.h) for b in boxes], dtype=np.float64)
