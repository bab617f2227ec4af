"""Reference implementations used as test oracles.

Each one is deliberately written differently from the library code it
checks: rasterization instead of interval arithmetic, exhaustive search
instead of the Hungarian method, explicit matrices instead of in-place row
operations, plain loops instead of vectorized numpy.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def raster_iou(a_corners, b_corners, res: int = 64) -> float:
    """IoU by counting cell centers of a ``1/res`` grid inside each box."""
    xs = [a_corners[0], a_corners[2], b_corners[0], b_corners[2]]
    ys = [a_corners[1], a_corners[3], b_corners[1], b_corners[3]]
    gx = (np.arange(math.floor(min(xs)) * res, math.ceil(max(xs)) * res) + 0.5) / res
    gy = (np.arange(math.floor(min(ys)) * res, math.ceil(max(ys)) * res) + 0.5) / res
    X, Y = np.meshgrid(gx, gy)

    def inside(c):
        return (X > c[0]) & (X < c[2]) & (Y > c[1]) & (Y < c[3])

    ia, ib = inside(a_corners), inside(b_corners)
    union = np.count_nonzero(ia | ib)
    return np.count_nonzero(ia & ib) / union if union else 0.0


def scalar_iou(a, b) -> float:
    """IoU of (cx, cy, w, h) tuples in plain floats."""
    ax1, ay1, ax2, ay2 = a[0] - a[2] / 2, a[1] - a[3] / 2, a[0] + a[2] / 2, a[1] + a[3] / 2
    bx1, by1, bx2, by2 = b[0] - b[2] / 2, b[1] - b[3] / 2, b[0] + b[2] / 2, b[1] + b[3] / 2
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    inter = iw * ih if iw > 0 and ih > 0 else 0.0
    return inter / (a[2] * a[3] + b[2] * b[3] - inter)


def scalar_siou(a, b, eps=0.0, alpha=1.0):
    """(iou, c_d, c_s, siou) for (cx, cy, w, h) tuples, straight from the formulas."""
    overlap = scalar_iou(a, b)
    ex = max(a[0] + a[2] / 2, b[0] + b[2] / 2) - min(a[0] - a[2] / 2, b[0] - b[2] / 2)
    ey = max(a[1] + a[3] / 2, b[1] + b[3] / 2) - min(a[1] - a[3] / 2, b[1] - b[3] / 2)
    c_d = ((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2) / (ex ** 2 + ey ** 2)
    c_s = (abs(a[2] - b[2]) / max(a[2], b[2]) + abs(a[3] - b[3]) / max(a[3], b[3])) / 2
    return overlap, c_d, c_s, overlap - (0.5 * (c_d + c_s) + eps) ** alpha


def brute_force_assignment(cost, forbidden):
    """Best (cardinality, -cost) over every injective row-to-column map.

    Any partial matching extends to a full injection from the smaller side,
    so enumerating the injections and dropping forbidden pairs visits every
    matching. Returns ``(cardinality, total_cost, pairs)``.
    """
    cost = np.asarray(cost, dtype=float)
    forbidden = np.asarray(forbidden, dtype=bool)
    n, m = cost.shape
    if n == 0 or m == 0:
        return 0, 0.0, []
    if n > m:
        card, total, pairs = brute_force_assignment(cost.T, forbidden.T)
        return card, total, sorted((j, i) for i, j in pairs)
    perms = np.array(list(itertools.permutations(range(m), n)), dtype=np.int64)
    rows = np.arange(n)
    ok = ~forbidden[rows, perms]
    card = ok.sum(axis=1)
    total = np.where(ok, cost[rows, perms], 0.0).sum(axis=1)
    best_card = card.max()
    cand = np.flatnonzero(card == best_card)
    k = cand[np.argmin(total[cand])]
    pairs = [(int(i), int(perms[k, i])) for i in range(n) if ok[k, i]]
    return int(best_card), math.fsum(cost[i, j] for i, j in pairs), pairs


def transition_matrix(dt: float) -> np.ndarray:
    f = np.eye(7)
    f[0, 4] = f[1, 5] = f[2, 6] = dt
    return f


def observation_matrix() -> np.ndarray:
    return np.eye(4, 7)


def kalman_predict(mean, cov, dt, q_diag):
    f = transition_matrix(dt)
    return f @ mean, f @ cov @ f.T + np.diag(q_diag)


def kalman_update(mean, cov, z, r_diag):
    """Textbook update with the simple (I - KH) P covariance form."""
    h = observation_matrix()
    s = h @ cov @ h.T + np.diag(r_diag)
    k = cov @ h.T @ np.linalg.inv(s)
    return mean + k @ (z - h @ mean), (np.eye(7) - k @ h) @ cov


def mahalanobis_sq(mean, cov, z, r_diag) -> float:
    h = observation_matrix()
    s = h @ cov @ h.T + np.diag(r_diag)
    d = np.asarray(z) - h @ mean
    return float(d @ np.linalg.solve(s, d))


def greedy_nms(boxes, scores, classes, thr):
    """Indices kept by greedy suppression, visiting in stable descending score order."""
    order = sorted(range(len(boxes)), key=lambda i: (-scores[i], i))
    kept = []
    for i in order:
        if all(classes[k] != classes[i] or scalar_iou(boxes[k], boxes[i]) <= thr for k in kept):
            kept.append(i)
    return kept


def _sig(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def reference_decode(heads, input_size, conf_thr, iou_thr):
    """Loop-by-loop decode of ``(raw4d, stride, anchors)`` heads, then greedy NMS.

    Returns a list of ``(x1, y1, x2, y2, conf, cls)`` in output order.
    """
    cands = []
    for raw, stride, anchors in heads:
        na, gh, gw, nv = raw.shape
        for a in range(na):
            for gy in range(gh):
                for gx in range(gw):
                    v = [_sig(float(t)) for t in raw[a, gy, gx]]
                    scores = v[5:]
                    best = max(range(len(scores)), key=lambda c: (scores[c], -c))
                    conf = v[4] * scores[best]
                    if conf < conf_thr:
                        continue
                    cx = (gx + v[0]) * stride
                    cy = (gy + v[1]) * stride
                    w = anchors[a][0] * (2 * v[2]) ** 2
                    h = anchors[a][1] * (2 * v[3]) ** 2
                    x1 = min(max(cx - w / 2, 0.0), input_size)
                    x2 = min(max(cx + w / 2, 0.0), input_size)
                    y1 = min(max(cy - h / 2, 0.0), input_size)
                    y2 = min(max(cy + h / 2, 0.0), input_size)
                    if x2 > x1 and y2 > y1:
                        cands.append((x1, y1, x2, y2, conf, best))
    boxes = [((c[0] + c[2]) / 2, (c[1] + c[3]) / 2, c[2] - c[0], c[3] - c[1]) for c in cands]
    keep = greedy_nms(boxes, [c[4] for c in cands], [c[5] for c in cands], iou_thr)
    return [cands[i] for i in keep]
