"""Compare the compiled and pure-Python kernel backends.

Usage::

    python benchmarks/bench_kernels.py [--repeat 7] [--tracks 50]

Each kernel is timed on the same inputs under every importable backend, then
``Tracker.step`` is timed end to end in a child process per backend so that
the backend choice made at import time applies to the whole tracker.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from gazetrack.kernels import available_backends

TRACKER_SNIPPET = r"""
import json, statistics, sys, time
import numpy as np
from gazetrack import kernels
from gazetrack.geometry import BBox
from gazetrack.tracker import Detection, Tracker, TrackerConfig

n, frames = int(sys.argv[1]), int(sys.argv[2])
rng = np.random.default_rng(0)
pos = rng.uniform(100, 1800, (n, 2))
vel = rng.normal(0, 1, (n, 2))
emb = rng.normal(size=(n, 32))
emb /= np.linalg.norm(emb, axis=1, keepdims=True)
tracker = Tracker(TrackerConfig())
times = []
for k in range(frames):
    dets = []
    for i in range(n):
        e = emb[i] + rng.normal(0, 0.05, 32)
        p = pos[i] + vel[i] * k + rng.normal(0, 1, 2)
        dets.append(Detection(BBox(p[0], p[1], 60, 40), 0.9, appearance=e / np.linalg.norm(e)))
    for _ in range(n // 5):
        e = rng.normal(size=32)
        dets.append(Detection(BBox(*rng.uniform(100, 1800, 2), 60, 40), 0.5, appearance=e / np.linalg.norm(e)))
    t0 = time.perf_counter()
    tracker.step(dets)
    times.append(time.perf_counter() - t0)
print(json.dumps({"backend": kernels.BACKEND, "median_ms": statistics.median(times[frames // 10:]) * 1e3}))
"""


def make_inputs(n_tracks: int, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    n_dets = n_tracks + n_tracks // 5
    boxes_a = np.column_stack([rng.uniform(0, 1000, (n_tracks, 2)), rng.uniform(20, 80, (n_tracks, 2))])
    boxes_b = np.column_stack([rng.uniform(0, 1000, (n_dets, 2)), rng.uniform(20, 80, (n_dets, 2))])
    means = np.zeros((n_tracks, 7))
    means[:, :4] = np.column_stack([boxes_a[:, :2], boxes_a[:, 2] * boxes_a[:, 3], boxes_a[:, 2] / boxes_a[:, 3]])
    means[:, 4:] = rng.normal(0, 1, (n_tracks, 3))
    covs = np.broadcast_to(np.diag([10.0, 10.0, 100.0, 1e-2, 5.0, 5.0, 10.0]), (n_tracks, 7, 7)).copy()
    z = means[:, :4] + rng.normal(0, 1, (n_tracks, 4))
    nms_boxes = np.column_stack([rng.uniform(0, 300, (400, 2)), rng.uniform(20, 60, (400, 2))])
    return {
        "cost": rng.uniform(0, 10, (n_tracks, n_dets)),
        "boxes_a": boxes_a,
        "boxes_b": boxes_b,
        "means": means,
        "covs": covs,
        "z": z,
        "zd": np.column_stack([boxes_b[:, :2], boxes_b[:, 2] * boxes_b[:, 3], boxes_b[:, 2] / boxes_b[:, 3]]),
        "q": np.full(7, 0.1),
        "r": np.array([1.0, 1.0, 10.0, 1e-3]),
        "nms_boxes": nms_boxes,
        "nms_order": np.argsort(-rng.random(400), kind="stable"),
        "nms_classes": rng.integers(0, 3, 400),
    }


def kernel_cases(mod, x: dict) -> dict:
    def predict():
        m, c = x["means"].copy(), x["covs"].copy()
        mod.kf_predict(m, c, 1 / 30, x["q"])

    def update():
        m, c = x["means"].copy(), x["covs"].copy()
        mod.kf_update(m, c, x["z"], x["r"])

    return {
        "linear_assignment": lambda: mod.linear_assignment(x["cost"]),
        "iou_matrix": lambda: mod.iou_matrix(x["boxes_a"], x["boxes_b"]),
        "siou_matrix": lambda: mod.siou_matrix(x["boxes_a"], x["boxes_b"], 0.0, 1.0),
        "nms_keep (400 boxes)": lambda: mod.nms_keep(x["nms_boxes"], x["nms_order"], x["nms_classes"], 0.45),
        "kf_predict": predict,
        "kf_update": update,
        "gating_matrix": lambda: mod.gating_matrix(x["means"], x["covs"], x["r"], x["zd"]),
    }


def best_us(fn, repeat: int) -> float:
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number * 1e6


def tracker_step_ms(backend: str, n_tracks: int, frames: int) -> float:
    env = dict(os.environ)
    env.pop("GAZETRACK_PURE_PYTHON", None)
    if backend == "python":
        env["GAZETRACK_PURE_PYTHON"] = "1"
    out = subprocess.run([sys.executable, "-c", TRACKER_SNIPPET, str(n_tracks), str(frames)],
                         env=env, capture_output=True, text=True, check=True)
    result = json.loads(out.stdout)
    if result["backend"] != backend:
        raise RuntimeError(f"child process loaded {result['backend']!r}, wanted {backend!r}")
    return result["median_ms"]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=7)
    parser.add_argument("--tracks", type=int, default=50)
    parser.add_argument("--frames", type=int, default=300)
    args = parser.parse_args(argv)

    backends = available_backends()
    names = list(backends)
    x = make_inputs(args.tracks)
    header = f"{'kernel':<24}" + "".join(f"{n + ' (us)':>16}" for n in names)
    if len(names) > 1:
        header += f"{'speedup':>10}"
    print(f"{args.tracks} tracks, {args.tracks + args.tracks // 5} detections")
    print(header)
    cases = {n: kernel_cases(mod, x) for n, mod in backends.items()}
    for kernel in cases[names[0]]:
        us = [best_us(cases[n][kernel], args.repeat) for n in names]
        row = f"{kernel:<24}" + "".join(f"{t:>16.1f}" for t in us)
        if len(names) > 1:
            row += f"{us[0] / us[-1]:>9.1f}x"
        print(row)

    ms = [tracker_step_ms(n, args.tracks, args.frames) for n in names]
    row = f"{'Tracker.step (ms)':<24}" + "".join(f"{t:>16.3f}" for t in ms)
    if len(names) > 1:
        row += f"{ms[0] / ms[-1]:>9.1f}x"
    print(row)
    return 0


if __name__ == "__main__":
    sys.exit(main())
