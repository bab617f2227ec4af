"""YAML configuration for scenarios, trackers and pipelines.

Every loader validates the whole tree before returning and reports problems
as ``ConfigError`` with a dotted key path such as ``scenario.targets[0].size``.
See the README for the schema.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .filtering import MotionModel
from .geometry import SIoUParams
from .pipeline import GimbalConfig, LatencyModel, PipelineConfig, StageSpec
from .simworld import CircularMotion, DetectorModel, LinearMotion, ScenarioConfig, TargetSpec
from .tracker import TrackerConfig

__all__ = [
    "PROFILE_NAMES",
    "load_yaml",
    "load_profile",
    "parse_scenario",
    "parse_tracker",
    "parse_pipeline",
]

PROFILE_NAMES = ("baseline", "optimized")

_MISSING = object()


class _Node:
    """A mapping under validation, remembering where it sits in the tree."""

    def __init__(self, data: Any, path: str):
        if not isinstance(data, dict):
            raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
        self.data = data
        self.path = path
        self.seen: set[str] = set()

    def key(self, name: str) -> str:
        return f"{self.path}.{name}" if self.path else name

    def get(self, name: str, kind, default=_MISSING):
        self.seen.add(name)
        if name not in self.data:
            if default is _MISSING:
                raise ConfigError(self.key(name), "required key is missing")
            return default
        return _coerce(self.data[name], kind, self.key(name))

    def child(self, name: str, required: bool = False) -> _Node | None:
        self.seen.add(name)
        if name not in self.data:
            if required:
                raise ConfigError(self.key(name), "required section is missing")
            return None
        return _Node(self.data[name], self.key(name))

    def done(self) -> None:
        extra = sorted(set(self.data) - self.seen)
        if extra:
            raise ConfigError(self.key(str(extra[0])), "unknown key")


def _coerce(value, kind, path):
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true or false, got {value!r}")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if kind == "pair":
        if not (isinstance(value, (list, tuple)) and len(value) == 2):
            raise ConfigError(path, f"expected a two-element list, got {value!r}")
        return tuple(_coerce(v, float, f"{path}[{i}]") for i, v in enumerate(value))
    if kind == "floats":
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list of numbers, got {value!r}")
        return [_coerce(v, float, f"{path}[{i}]") for i, v in enumerate(value)]
    if kind == "list":
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {value!r}")
        return value
    raise TypeError(kind)


def _build(path: str, cls, **kwargs):
    """Construct ``cls`` and re-raise its validation errors under ``path``."""
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def load_yaml(path) -> dict:
    """Parse a YAML file. Syntax errors become ``ConfigError``; I/O errors propagate."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"invalid YAML: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(str(path), "top level must be a mapping")
    return data


# scenario ----------------------------------------------------------------

def _parse_target(raw, path) -> TargetSpec:
    node = _Node(raw, path)
    tid = node.get("id", int)
    size = node.get("size", "pair")
    lin = node.child("linear")
    circ = node.child("circular")
    if (lin is None) == (circ is None):
        raise ConfigError(node.key("linear"), "give exactly one of 'linear' or 'circular'")
    if lin is not None:
        motion = LinearMotion(lin.get("start", "pair"), lin.get("velocity", "pair", (0.0, 0.0)))
        lin.done()
    else:
        radius = circ.get("radius", float)
        if not radius >= 0:
            raise ConfigError(circ.key("radius"), "must be >= 0")
        motion = CircularMotion(circ.get("center", "pair"), radius, circ.get("omega", float),
                                circ.get("phase", float, 0.0))
        circ.done()
    occ = []
    for i, iv in enumerate(node.get("occlusions", "list", [])):
        p = f"{node.key('occlusions')}[{i}]"
        if not (isinstance(iv, (list, tuple)) and len(iv) == 2):
            raise ConfigError(p, "expected [start, end) frame pair")
        occ.append((_coerce(iv[0], int, f"{p}[0]"), _coerce(iv[1], int, f"{p}[1]")))
    class_id = node.get("class_id", int, 0)
    node.done()
    return _build(path, TargetSpec, id=tid, size=size, motion=motion, occlusions=occ, class_id=class_id)


def _parse_detector(node: _Node | None) -> DetectorModel:
    if node is None:
        return DetectorModel()
    kw = {}
    for name in ("sigma_center", "sigma_size", "p_miss", "fp_rate", "confidence_mean",
                 "confidence_sigma", "appearance_noise"):
        if name in node.data:
            kw[name] = node.get(name, float)
    if "appearance_dim" in node.data:
        kw["appearance_dim"] = node.get("appearance_dim", int)
    node.done()
    return _build(node.path, DetectorModel, **kw)


def parse_scenario(data: dict, path: str = "scenario") -> ScenarioConfig:
    node = _Node(data, path)
    duration = node.get("duration", float)
    fps = node.get("fps", float)
    raw_targets = node.get("targets", "list")
    if not raw_targets:
        raise ConfigError(node.key("targets"), "at least one target is required")
    targets = [_parse_target(t, f"{node.key('targets')}[{i}]") for i, t in enumerate(raw_targets)]
    kw = dict(
        duration=duration,
        fps=fps,
        targets=targets,
        frame_w=node.get("frame_w", int, 1920),
        frame_h=node.get("frame_h", int, 1080),
        seed=node.get("seed", int, 0),
        detector=_parse_detector(node.child("detector")),
    )
    node.done()
    return _build(path, ScenarioConfig, **kw)


# tracker -----------------------------------------------------------------

def _parse_motion(node: _Node | None, fps: float) -> MotionModel:
    dt = 1.0 / fps
    if node is None:
        return MotionModel(dt=dt)
    dt = node.get("dt", float, dt)
    if "reference_box" in node.data:
        w, h = node.get("reference_box", "pair")
        if not (w > 0 and h > 0):
            raise ConfigError(node.key("reference_box"), "must be positive")
        base = MotionModel.for_box(w, h, dt)
    else:
        base = _build(node.path, MotionModel, dt=dt)
    kw = {"dt": dt, "q_diag": base.q_diag, "r_diag": base.r_diag, "p0_diag": base.p0_diag}
    for name, size in (("q_diag", 7), ("r_diag", 4), ("p0_diag", 7)):
        if name in node.data:
            vals = node.get(name, "floats")
            if len(vals) != size:
                raise ConfigError(node.key(name), f"expected {size} values, got {len(vals)}")
            kw[name] = vals
    node.done()
    return _build(node.path, MotionModel, **kw)


def parse_tracker(data: dict | None, path: str = "tracker", fps: float = 30.0) -> TrackerConfig:
    node = _Node(data or {}, path)
    kw = {}
    for name in ("max_age", "n_init", "gallery_size"):
        if name in node.data:
            kw[name] = node.get(name, int)
    for name in ("iou_match_threshold", "appearance_threshold", "gate_threshold"):
        if name in node.data:
            kw[name] = node.get(name, float)
    if "cost_mode" in node.data:
        kw["cost_mode"] = node.get("cost_mode", str)
    if "multi_class" in node.data:
        kw["multi_class"] = node.get("multi_class", bool)
    siou = node.child("siou")
    if siou is not None:
        kw["siou"] = _build(siou.path, SIoUParams, epsilon=siou.get("epsilon", float, 0.0),
                            alpha=siou.get("alpha", float, 1.0))
        siou.done()
    kw["motion"] = _parse_motion(node.child("motion"), fps)
    node.done()
    return _build(path, TrackerConfig, **kw)


# pipeline ----------------------------------------------------------------

def _parse_latency(raw, path) -> LatencyModel:
    node = _Node(raw, path)
    if len(node.data) != 1:
        raise ConfigError(path, "give exactly one of 'constant', 'normal' or 'empirical'")
    kind = next(iter(node.data))
    if kind == "constant":
        ms = node.get("constant", float)
        return _build(path, LatencyModel, kind="constant", value=ms)
    if kind == "normal":
        mean, sigma = node.get("normal", "pair")
        return _build(path, LatencyModel, kind="normal", value=mean, sigma=sigma)
    if kind == "empirical":
        vals = node.get("empirical", "floats")
        return _build(path, LatencyModel, kind="empirical", samples=tuple(vals))
    raise ConfigError(node.key(str(kind)), "unknown latency model")


def _parse_gimbal(node: _Node | None) -> GimbalConfig:
    if node is None:
        return GimbalConfig()
    kw = {}
    for name in ("k_pan", "k_tilt", "max_rate", "hfov_deg"):
        if name in node.data:
            kw[name] = node.get(name, float)
    for name in ("pan_limits", "tilt_limits"):
        if name in node.data:
            kw[name] = node.get(name, "pair")
    node.done()
    return _build(node.path, GimbalConfig, **kw)


def parse_pipeline(data: dict | None, path: str = "pipeline", profile: str | None = None) -> PipelineConfig:
    """Stages come from ``stages``, else from ``profile`` (argument, then key), else 'optimized'."""
    node = _Node(data or {}, path)
    name = node.get("profile", str, None)
    name = profile or name
    if "stages" in node.data and profile is None:
        raw = node.get("stages", "list")
        base = None
    else:
        node.seen.add("stages")
        name = name or "optimized"
        if name not in PROFILE_NAMES:
            raise ConfigError(node.key("profile"), f"unknown profile {name!r}; choose from {list(PROFILE_NAMES)}")
        base = _profile_data(name)
        raw = base["stages"]
    stages = []
    for i, s in enumerate(raw):
        p = f"{node.key('stages')}[{i}]" if base is None else f"profile {name}.stages[{i}]"
        sn = _Node(s, p)
        stage_name = sn.get("name", str)
        executor = sn.get("executor", str)
        latency = _parse_latency(sn.child("latency", required=True).data, sn.key("latency"))
        sn.done()
        stages.append(_build(p, StageSpec, name=stage_name, executor=executor, latency=latency))
    workers_default = base.get("accelerator_workers", 1) if base else 1
    kw = dict(
        stages=stages,
        accelerator_workers=node.get("accelerator_workers", int, workers_default),
        seed=node.get("seed", int, 0),
        gimbal=_parse_gimbal(node.child("gimbal")),
    )
    node.done()
    return _build(path, PipelineConfig, **kw)


def _profile_data(name: str) -> dict:
    text = resources.files("gazetrack").joinpath(f"profiles/{name}.yaml").read_text()
    return yaml.safe_load(text)


def load_profile(name: str, *, accelerator_workers: int | None = None, seed: int = 0) -> PipelineConfig:
    """One of the shipped stage profiles ('baseline' or 'optimized')."""
    data: dict = {"profile": name, "seed": seed}
    if accelerator_workers is not None:
        data["accelerator_workers"] = accelerator_workers
    return parse_pipeline(data)
