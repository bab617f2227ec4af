"""Detection-side numerics: activations, YOLO head decoding, NMS, INT8 quantization.

Head layout
-----------
A ``FeatureMap`` holds the raw (pre-activation) output of one detection head
as a flat float array laid out ``(n_anchors, grid_h, grid_w, 5 + n_classes)``
in C order. The last axis is ``tx, ty, tw, th, objectness, class_0, ...``.
Decoding follows the YOLOv5 convention: every value passes through the
logistic function, centers are ``(cell + sx) * stride`` and sizes are
``anchor * (2 * sw) ** 2``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import InvalidTensorError, MalformedHeadError
from .geometry import BBox
from .tracker import Detection

__all__ = [
    "silu",
    "hard_swish",
    "FeatureMap",
    "DecodeParams",
    "QuantizedTensor",
    "DEFAULT_ANCHORS",
    "decode_heads",
    "nms",
    "quantize",
    "dequantize",
    "read_feature_map",
    "write_feature_map",
]

# YOLOv5s anchor boxes in input pixels, keyed by stride
DEFAULT_ANCHORS = {
    8: [(10.0, 13.0), (16.0, 30.0), (33.0, 23.0)],
    16: [(30.0, 61.0), (62.0, 45.0), (59.0, 119.0)],
    32: [(116.0, 90.0), (156.0, 198.0), (373.0, 326.0)],
}

FEATURE_MAP_MAGIC = b"YHFM"
_HEADER = struct.Struct("<4s5i")

QUANT_MAX = 127
POSITION_RANGE = (-32, 32)


def _sigmoid(x):
    # exp of a non-positive argument never overflows, and the negative branch
    # keeps full relative precision far into the tail
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def silu(x):
    """x * sigmoid(x). Scalars in, float out; arrays in, arrays out."""
    out = np.asarray(x, dtype=np.float64) * _sigmoid(x)
    return float(out) if out.ndim == 0 else out


def hard_swish(x):
    """Piecewise-linear stand-in for silu: x * clip(x / 6 + 1/2, 0, 1)."""
    x = np.asarray(x, dtype=np.float64)
    out = x * np.clip(x / 6.0 + 0.5, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass
class FeatureMap:
    grid_h: int
    grid_w: int
    stride: float
    anchors: list[tuple[float, float]]
    raw: np.ndarray
    n_classes: int = 1

    def __post_init__(self):
        self.raw = np.asarray(self.raw, dtype=np.float64).reshape(-1)
        self.anchors = [(float(w), float(h)) for w, h in self.anchors]

    @property
    def n_anchors(self) -> int:
        return len(self.anchors)

    @property
    def expected_length(self) -> int:
        return self.grid_h * self.grid_w * self.n_anchors * (5 + self.n_classes)

    def tensor(self) -> np.ndarray:
        """Raw values as ``(n_anchors, grid_h, grid_w, 5 + n_classes)``."""
        if self.grid_h < 1 or self.grid_w < 1 or self.n_anchors < 1 or self.n_classes < 1:
            raise MalformedHeadError(
                f"head dimensions must be positive: grid {self.grid_h}x{self.grid_w}, "
                f"{self.n_anchors} anchors, {self.n_classes} classes"
            )
        if self.raw.size != self.expected_length:
            raise MalformedHeadError(
                f"raw length {self.raw.size} != {self.grid_h}*{self.grid_w}*"
                f"{self.n_anchors}*(5+{self.n_classes}) = {self.expected_length}"
            )
        return self.raw.reshape(self.n_anchors, self.grid_h, self.grid_w, 5 + self.n_classes)


@dataclass
class DecodeParams:
    input_size: float = 640.0
    conf_threshold: float = 0.25
    nms_iou_threshold: float = 0.45
    n_classes: int = 1

    def __post_init__(self):
        if not self.input_size > 0:
            raise ValueError("input_size must be positive")
        if not 0.0 <= self.conf_threshold <= 1.0:
            raise ValueError("conf_threshold must be in [0, 1]")
        if not 0.0 <= self.nms_iou_threshold <= 1.0:
            raise ValueError("nms_iou_threshold must be in [0, 1]")
        if self.n_classes < 1:
            raise ValueError("n_classes must be >= 1")


def _decode_one(fm: FeatureMap, p: DecodeParams):
    t = _sigmoid(fm.tensor())
    anchors = np.asarray(fm.anchors)
    gy, gx = np.meshgrid(np.arange(fm.grid_h), np.arange(fm.grid_w), indexing="ij")
    cx = (gx[None] + t[..., 0]) * fm.stride
    cy = (gy[None] + t[..., 1]) * fm.stride
    w = anchors[:, 0, None, None] * (2.0 * t[..., 2]) ** 2
    h = anchors[:, 1, None, None] * (2.0 * t[..., 3]) ** 2
    cls = t[..., 5:]
    best = np.argmax(cls, axis=-1)
    conf = t[..., 4] * np.take_along_axis(cls, best[..., None], axis=-1)[..., 0]

    sel = conf >= p.conf_threshold
    x1 = np.clip(cx[sel] - w[sel] / 2, 0.0, p.input_size)
    x2 = np.clip(cx[sel] + w[sel] / 2, 0.0, p.input_size)
    y1 = np.clip(cy[sel] - h[sel] / 2, 0.0, p.input_size)
    y2 = np.clip(cy[sel] + h[sel] / 2, 0.0, p.input_size)
    ok = (x2 > x1) & (y2 > y1)
    return (
        np.column_stack([x1[ok], y1[ok], x2[ok], y2[ok]]),
        np.minimum(conf[sel][ok], 1.0),
        best[sel][ok],
    )


def decode_heads(maps, p: DecodeParams) -> list[Detection]:
    """Decode raw head tensors into detections, then suppress overlaps.

    Output order is the NMS order: descending confidence, ties in
    (head, anchor, row, column) order.
    """
    maps = list(maps)
    strides = [fm.stride for fm in maps]
    if len(set(strides)) != len(strides):
        raise MalformedHeadError(f"head strides must be distinct, got {strides}")
    for fm in maps:
        if fm.n_classes != p.n_classes:
            raise MalformedHeadError(f"head has {fm.n_classes} classes, expected {p.n_classes}")
    dets = []
    for fm in maps:
        corners, conf, cls = _decode_one(fm, p)
        for (x1, y1, x2, y2), c, k in zip(corners.tolist(), conf.tolist(), cls.tolist()):
            dets.append(Detection(BBox.from_corners(x1, y1, x2, y2), c, int(k)))
    return nms(dets, p.nms_iou_threshold)


def nms(dets, iou_threshold: float) -> list[Detection]:
    """Greedy same-class suppression in descending confidence order."""
    dets = list(dets)
    if not dets:
        return []
    conf = np.array([d.confidence for d in dets])
    order = np.argsort(-conf, kind="stable")
    boxes = np.array([d.bbox.as_tuple() for d in dets], dtype=np.float64)
    classes = np.array([d.class_id for d in dets], dtype=np.int64)
    keep = kernels.nms_keep(boxes, order.astype(np.int64), classes, float(iou_threshold))
    return [dets[i] for i in keep.tolist()]


@dataclass
class QuantizedTensor:
    """Symmetric INT8 tensor; real value = data * scale * 2**position."""

    data: np.ndarray
    position: int
    scale: float
    shape: tuple[int, ...] = field(default=())

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.int8)
        if not self.shape:
            self.shape = self.data.shape
        if not self.scale > 0:
            raise InvalidTensorError("scale must be positive")

    @property
    def step(self) -> float:
        """Real-valued size of one integer step."""
        return self.scale * math.ldexp(1.0, self.position)


def quantize(t) -> QuantizedTensor:
    arr = np.asarray(t, dtype=np.float64)
    if arr.size == 0:
        raise InvalidTensorError("cannot quantize an empty tensor")
    if not np.all(np.isfinite(arr)):
        raise InvalidTensorError("tensor contains non-finite values")
    peak = float(np.max(np.abs(arr)))
    if peak == 0.0:
        return QuantizedTensor(np.zeros(arr.shape, dtype=np.int8), 0, 1.0)
    # exact ceil(log2(peak / 127)) from the binary exponent
    mant, exp = math.frexp(peak / QUANT_MAX)
    position = exp - 1 if mant == 0.5 else exp
    position = min(max(position, POSITION_RANGE[0]), POSITION_RANGE[1])
    scale = peak / (QUANT_MAX * math.ldexp(1.0, position))
    step = scale * math.ldexp(1.0, position)
    data = np.clip(np.rint(arr / step), -QUANT_MAX, QUANT_MAX).astype(np.int8)
    return QuantizedTensor(data, position, scale)


def dequantize(q: QuantizedTensor) -> np.ndarray:
    return q.data.astype(np.float64) * q.step


def write_feature_map(path, fm: FeatureMap) -> None:
    """Little-endian dump: magic, grid_h, grid_w, n_anchors, n_classes, stride, float32 data."""
    fm.tensor()  # validates the length
    header = _HEADER.pack(FEATURE_MAP_MAGIC, fm.grid_h, fm.grid_w, fm.n_anchors, fm.n_classes,
                          int(fm.stride))
    Path(path).write_bytes(header + fm.raw.astype("<f4").tobytes())


def read_feature_map(path, anchors=None) -> FeatureMap:
    """Load a dump written by ``write_feature_map``.

    Anchors are not stored in the file; by default they come from
    ``DEFAULT_ANCHORS`` for the recorded stride.
    """
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise MalformedHeadError(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, gh, gw, na, nc, stride = _HEADER.unpack_from(blob)
    if magic != FEATURE_MAP_MAGIC:
        raise MalformedHeadError(f"{path}: bad magic {magic!r}")
    if anchors is None:
        if stride not in DEFAULT_ANCHORS:
            raise MalformedHeadError(f"{path}: no default anchors for stride {stride}")
        anchors = DEFAULT_ANCHORS[stride]
    if len(anchors) != na:
        raise MalformedHeadError(f"{path}: header says {na} anchors, {len(anchors)} supplied")
    body = blob[_HEADER.size:]
    if len(body) % 4:
        raise MalformedHeadError(f"{path}: payload is not a whole number of float32 values")
    raw = np.frombuffer(body, dtype="<f4").astype(np.float64)
    fm = FeatureMap(gh, gw, float(stride), anchors, raw, nc)
    fm.tensor()
    return fm
