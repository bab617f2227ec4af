# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Mirrors ``_pykernels`` function for function."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs, pow, isfinite

from .errors import SingularUpdateError

cnp.import_array()

cdef double SINGULAR_RTOL = 1e-12


def linear_assignment(cost, bint duals=False):
    cdef double[:, ::1] a = np.ascontiguousarray(cost, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = a.shape[1]
    if n > m:
        raise ValueError("linear_assignment needs n_rows <= n_cols")
    cdef double[::1] u = np.zeros(n + 1)
    cdef double[::1] v = np.zeros(m + 1)
    cdef double[::1] minv = np.empty(m + 1)
    cdef cnp.int64_t[::1] p = np.zeros(m + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] way = np.zeros(m + 1, dtype=np.int64)
    cdef unsigned char[::1] used = np.zeros(m + 1, dtype=np.uint8)
    cdef Py_ssize_t i, j, j0, j1, i0
    cdef double delta, cur
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(m + 1):
            minv[j] = INFINITY
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            delta = INFINITY
            j1 = 0
            for j in range(1, m + 1):
                if not used[j]:
                    cur = a[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    out = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] row_to_col = out
    for j in range(1, m + 1):
        if p[j] != 0:
            row_to_col[p[j] - 1] = j - 1
    if duals:
        return out, np.asarray(u[1:]).copy(), np.asarray(v[1:]).copy()
    return out


cdef inline double _iou(const double* a, const double* b) noexcept nogil:
    cdef double ax1 = a[0] - a[2] / 2.0, ax2 = a[0] + a[2] / 2.0
    cdef double ay1 = a[1] - a[3] / 2.0, ay2 = a[1] + a[3] / 2.0
    cdef double bx1 = b[0] - b[2] / 2.0, bx2 = b[0] + b[2] / 2.0
    cdef double by1 = b[1] - b[3] / 2.0, by2 = b[1] + b[3] / 2.0
    cdef double iw = (ax2 if ax2 < bx2 else bx2) - (ax1 if ax1 > bx1 else bx1)
    cdef double ih = (ay2 if ay2 < by2 else by2) - (ay1 if ay1 > by1 else by1)
    cdef double inter = 0.0
    if iw > 0 and ih > 0:
        inter = iw * ih
    cdef double r = inter / (a[2] * a[3] + b[2] * b[3] - inter)
    return r if r < 1.0 else 1.0


def iou_matrix(a, b):
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 4)
    cdef double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 4)
    cdef Py_ssize_t n = av.shape[0], m = bv.shape[0], i, j
    out = np.empty((n, m))
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(m):
                o[i, j] = _iou(&av[i, 0], &bv[j, 0])
    return out


def siou_matrix(a, b, double epsilon, double alpha):
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 4)
    cdef double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 4)
    cdef Py_ssize_t n = av.shape[0], m = bv.shape[0], i, j
    cdef double ew, eh, dx, dy, c_d, c_s, wmax, hmax
    cdef const double* pa
    cdef const double* pb
    out = np.empty((n, m))
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            pa = &av[i, 0]
            for j in range(m):
                pb = &bv[j, 0]
                ew = max(pa[0] + pa[2] / 2.0, pb[0] + pb[2] / 2.0) - min(pa[0] - pa[2] / 2.0, pb[0] - pb[2] / 2.0)
                eh = max(pa[1] + pa[3] / 2.0, pb[1] + pb[3] / 2.0) - min(pa[1] - pa[3] / 2.0, pb[1] - pb[3] / 2.0)
                dx = pa[0] - pb[0]
                dy = pa[1] - pb[1]
                c_d = (dx * dx + dy * dy) / (ew * ew + eh * eh)
                wmax = max(pa[2], pb[2])
                hmax = max(pa[3], pb[3])
                c_s = 0.5 * (fabs(pa[2] - pb[2]) / wmax + fabs(pa[3] - pb[3]) / hmax)
                o[i, j] = _iou(pa, pb) - pow(0.5 * (c_d + c_s) + epsilon, alpha)
    return out


def nms_keep(boxes, order, classes, double iou_threshold):
    cdef double[:, ::1] bv = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 4)
    cdef cnp.int64_t[::1] ov = np.ascontiguousarray(order, dtype=np.int64)
    cdef cnp.int64_t[::1] cv = np.ascontiguousarray(classes, dtype=np.int64)
    cdef Py_ssize_t n = ov.shape[0], i, k, n_kept = 0
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] kept = out
    cdef cnp.int64_t idx, other
    cdef bint suppressed
    with nogil:
        for i in range(n):
            idx = ov[i]
            suppressed = False
            for k in range(n_kept):
                other = kept[k]
                if cv[other] == cv[idx] and _iou(&bv[idx, 0], &bv[other, 0]) > iou_threshold:
                    suppressed = True
                    break
            if not suppressed:
                kept[n_kept] = idx
                n_kept += 1
    return out[:n_kept].copy()


def kf_predict(double[:, ::1] means, double[:, :, ::1] covs, double dt, q):
    cdef double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef Py_ssize_t n = means.shape[0], t, i, j
    cdef double s
    with nogil:
        for t in range(n):
            for i in range(3):
                means[t, i] += dt * means[t, i + 4]
            for i in range(3):
                for j in range(7):
                    covs[t, i, j] += dt * covs[t, i + 4, j]
            for i in range(7):
                for j in range(3):
                    covs[t, i, j] += dt * covs[t, i, j + 4]
            for i in range(7):
                covs[t, i, i] += qv[i]
            for i in range(7):
                for j in range(i + 1, 7):
                    s = 0.5 * (covs[t, i, j] + covs[t, j, i])
                    covs[t, i, j] = s
                    covs[t, j, i] = s


cdef int _innovation_inverse(double[:, :, ::1] covs, Py_ssize_t t, double[::1] r, double* sinv) noexcept nogil:
    """Invert S = H P H^T + R through its Cholesky factor. Returns 0, or 1 if singular."""
    cdef double s[16]
    cdef double l[16]
    cdef double y[4]
    cdef double scale = 0.0, acc
    cdef int i, j, k, col
    for i in range(4):
        for j in range(4):
            s[i * 4 + j] = covs[t, i, j]
        s[i * 4 + i] += r[i]
        if not isfinite(s[i * 4 + i]):
            return 1
        if fabs(s[i * 4 + i]) > scale:
            scale = fabs(s[i * 4 + i])
    for i in range(16):
        l[i] = 0.0
    for j in range(4):
        acc = s[j * 4 + j]
        for k in range(j):
            acc -= l[j * 4 + k] * l[j * 4 + k]
        if not (acc > SINGULAR_RTOL * scale):
            return 1
        l[j * 4 + j] = acc ** 0.5
        for i in range(j + 1, 4):
            acc = s[i * 4 + j]
            for k in range(j):
                acc -= l[i * 4 + k] * l[j * 4 + k]
            l[i * 4 + j] = acc / l[j * 4 + j]
    for col in range(4):
        # forward: L y = e_col
        for i in range(4):
            acc = 1.0 if i == col else 0.0
            for k in range(i):
                acc -= l[i * 4 + k] * y[k]
            y[i] = acc / l[i * 4 + i]
        # backward: L^T x = y
        for i in range(3, -1, -1):
            acc = y[i]
            for k in range(i + 1, 4):
                acc -= l[k * 4 + i] * sinv[k * 4 + col]
            sinv[i * 4 + col] = acc / l[i * 4 + i]
    return 0


def kf_update(double[:, ::1] means, double[:, :, ::1] covs, z, r):
    cdef double[:, ::1] zv = np.ascontiguousarray(z, dtype=np.float64).reshape(-1, 4)
    cdef double[::1] rv = np.ascontiguousarray(r, dtype=np.float64)
    cdef Py_ssize_t n = means.shape[0], t
    cdef int i, j, k, bad = -1
    cdef double sinv[16]
    cdef double gain[28]
    cdef double a[49]
    cdef double ap[49]
    cdef double newp[49]
    cdef double innov[4]
    cdef double acc
    with nogil:
        for t in range(n):
            if _innovation_inverse(covs, t, rv, sinv):
                bad = t
                break
            for i in range(7):
                for j in range(4):
                    acc = 0.0
                    for k in range(4):
                        acc += covs[t, i, k] * sinv[k * 4 + j]
                    gain[i * 4 + j] = acc
            for j in range(4):
                innov[j] = zv[t, j] - means[t, j]
            for i in range(7):
                acc = 0.0
                for j in range(4):
                    acc += gain[i * 4 + j] * innov[j]
                means[t, i] += acc
            for i in range(7):
                for j in range(7):
                    a[i * 7 + j] = (1.0 if i == j else 0.0) - (gain[i * 4 + j] if j < 4 else 0.0)
            for i in range(7):
                for j in range(7):
                    acc = 0.0
                    for k in range(7):
                        acc += a[i * 7 + k] * covs[t, k, j]
                    ap[i * 7 + j] = acc
            for i in range(7):
                for j in range(7):
                    acc = 0.0
                    for k in range(7):
                        acc += ap[i * 7 + k] * a[j * 7 + k]
                    for k in range(4):
                        acc += gain[i * 4 + k] * rv[k] * gain[j * 4 + k]
                    newp[i * 7 + j] = acc
            for i in range(7):
                covs[t, i, i] = newp[i * 7 + i]
                for j in range(i + 1, 7):
                    acc = 0.5 * (newp[i * 7 + j] + newp[j * 7 + i])
                    covs[t, i, j] = acc
                    covs[t, j, i] = acc
    if bad >= 0:
        raise SingularUpdateError(f"innovation covariance numerically singular (row {bad})")


def gating_matrix(double[:, ::1] means, double[:, :, ::1] covs, r, z):
    cdef double[::1] rv = np.ascontiguousarray(r, dtype=np.float64)
    cdef double[:, ::1] zv = np.ascontiguousarray(z, dtype=np.float64).reshape(-1, 4)
    cdef Py_ssize_t n = means.shape[0], m = zv.shape[0], t, d
    cdef int i, j, bad = -1
    cdef double sinv[16]
    cdef double diff[4]
    cdef double acc
    out = np.zeros((n, m))
    cdef double[:, ::1] o = out
    with nogil:
        for t in range(n):
            if _innovation_inverse(covs, t, rv, sinv):
                bad = t
                break
            for d in range(m):
                for i in range(4):
                    diff[i] = zv[d, i] - means[t, i]
                acc = 0.0
                for i in range(4):
                    for j in range(4):
                        acc += diff[i] * sinv[i * 4 + j] * diff[j]
                o[t, d] = acc
    if bad >= 0:
        raise SingularUpdateError(f"innovation covariance numerically singular (row {bad})")
    return out
