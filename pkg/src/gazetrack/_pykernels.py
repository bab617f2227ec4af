"""Pure-Python/numpy kernels. Same signatures and semantics as ``_ckernels``.

Box arrays are (n, 4) float64 rows of (cx, cy, w, h). Kalman arrays are
(n, 7) means and (n, 7, 7) covariances over (u, v, s, r, du, dv, ds).
"""

import numpy as np

from .errors import SingularUpdateError

# relative Cholesky pivot floor below which an innovation covariance is singular
SINGULAR_RTOL = 1e-12


def linear_assignment(cost, duals=False):
    """Shortest-augmenting-path Hungarian method for an n x m matrix, n <= m.

    Returns ``row_to_col`` (int64, length n). With ``duals=True`` returns
    ``(row_to_col, u, v)`` where the row and column potentials satisfy
    ``u[i] + v[j] <= cost[i, j]`` with equality on matched pairs, and
    ``v[j] == 0`` on every unmatched column.
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    n, m = cost.shape
    if n > m:
        raise ValueError("linear_assignment needs n_rows <= n_cols")
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    row_to_col = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j] != 0:
            row_to_col[p[j] - 1] = j - 1
    if duals:
        return row_to_col, u[1:].copy(), v[1:].copy()
    return row_to_col


def _corners(b):
    hw = b[:, 2] / 2.0
    hh = b[:, 3] / 2.0
    return b[:, 0] - hw, b[:, 1] - hh, b[:, 0] + hw, b[:, 1] + hh


def iou_matrix(a, b):
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ax1, ay1, ax2, ay2 = (c[:, None] for c in _corners(a))
    bx1, by1, bx2, by2 = (c[None, :] for c in _corners(b))
    iw = np.minimum(ax2, bx2) - np.maximum(ax1, bx1)
    ih = np.minimum(ay2, by2) - np.maximum(ay1, by1)
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    area_a = (a[:, 2] * a[:, 3])[:, None]
    area_b = (b[:, 2] * b[:, 3])[None, :]
    return np.minimum(inter / (area_a + area_b - inter), 1.0)


def siou_matrix(a, b, epsilon, alpha):
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    overlap = iou_matrix(a, b)
    ax1, ay1, ax2, ay2 = (c[:, None] for c in _corners(a))
    bx1, by1, bx2, by2 = (c[None, :] for c in _corners(b))
    ew = np.maximum(ax2, bx2) - np.minimum(ax1, bx1)
    eh = np.maximum(ay2, by2) - np.minimum(ay1, by1)
    dx = a[:, None, 0] - b[None, :, 0]
    dy = a[:, None, 1] - b[None, :, 1]
    c_d = (dx * dx + dy * dy) / (ew * ew + eh * eh)
    wa, wb = a[:, None, 2], b[None, :, 2]
    ha, hb = a[:, None, 3], b[None, :, 3]
    c_s = 0.5 * (np.abs(wa - wb) / np.maximum(wa, wb) + np.abs(ha - hb) / np.maximum(ha, hb))
    return overlap - (0.5 * (c_d + c_s) + epsilon) ** alpha


def nms_keep(boxes, order, classes, iou_threshold):
    """Greedy suppression visiting ``order``; returns kept indices in visit order."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    kept = []
    for idx in order:
        idx = int(idx)
        if kept:
            same = [k for k in kept if classes[k] == classes[idx]]
            if same:
                ov = iou_matrix(boxes[idx : idx + 1], boxes[same])[0]
                if np.any(ov > iou_threshold):
                    continue
        kept.append(idx)
    return np.array(kept, dtype=np.int64)


def kf_predict(means, covs, dt, q):
    """In place: mean <- F mean, cov <- F cov F^T + diag(q)."""
    means[:, 0:3] += dt * means[:, 4:7]
    covs[:, 0:3, :] += dt * covs[:, 4:7, :]
    covs[:, :, 0:3] += dt * covs[:, :, 4:7]
    idx = np.arange(7)
    covs[:, idx, idx] += q
    covs[...] = 0.5 * (covs + covs.transpose(0, 2, 1))


def _innovation_inverse(covs, r):
    s = covs[:, 0:4, 0:4] + np.diag(r)
    scale = np.max(np.abs(np.diagonal(s, axis1=1, axis2=2)), axis=1)
    for i in range(s.shape[0]):
        if not np.all(np.isfinite(s[i])):
            raise SingularUpdateError(f"non-finite innovation covariance (row {i})")
        try:
            chol = np.linalg.cholesky(s[i])
        except np.linalg.LinAlgError:
            raise SingularUpdateError(f"innovation covariance not positive definite (row {i})") from None
        if np.min(np.diagonal(chol)) ** 2 <= SINGULAR_RTOL * scale[i]:
            raise SingularUpdateError(f"innovation covariance numerically singular (row {i})")
    return np.linalg.inv(s)


def kf_update(means, covs, z, r):
    """In place Kalman measurement update with H selecting (u, v, s, r).

    Covariance uses the Joseph form followed by explicit symmetrisation.
    """
    s_inv = _innovation_inverse(covs, r)
    pht = covs[:, :, 0:4]
    gain = pht @ s_inv
    innov = z - means[:, 0:4]
    means += np.einsum("nij,nj->ni", gain, innov)
    a = np.broadcast_to(np.eye(7), covs.shape).copy()
    a[:, :, 0:4] -= gain
    new = a @ covs @ a.transpose(0, 2, 1) + (gain * r) @ gain.transpose(0, 2, 1)
    covs[...] = 0.5 * (new + new.transpose(0, 2, 1))


def gating_matrix(means, covs, r, z):
    """Squared Mahalanobis distance of each measurement row under each track."""
    n = means.shape[0]
    z = np.asarray(z, dtype=np.float64).reshape(-1, 4)
    if n == 0 or z.shape[0] == 0:
        return np.zeros((n, z.shape[0]))
    s_inv = _innovation_inverse(covs, r)
    d = z[None, :, :] - means[:, None, 0:4]
    return np.einsum("nmi,nij,nmj->nm", d, s_inv, d)
