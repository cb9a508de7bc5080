# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numeric kernels: 6D rotations, geodesic angles, forward kinematics,
beat alignment and pairwise distances. Mirrors ``_kernels_py`` one to one."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, acos, exp, fabs

from .errors import DegenerateRotationError

cnp.import_array()

cdef double NORM_EPS = 1e-8
cdef double PARALLEL_EPS = 1e-8


cdef inline int _gram_schmidt(const double* r, double* out) noexcept nogil:
    # out is row-major 3x3 with columns b1, b2, b3; returns 0 on success
    cdef double n1 = sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2])
    cdef double n2 = sqrt(r[3] * r[3] + r[4] * r[4] + r[5] * r[5])
    if not (n1 >= NORM_EPS and n2 >= NORM_EPS):
        return 1
    cdef double c = (r[0] * r[3] + r[1] * r[4] + r[2] * r[5]) / (n1 * n2)
    if not (fabs(c) <= 1.0 - PARALLEL_EPS):
        return 1
    cdef double x0 = r[0] / n1, x1 = r[1] / n1, x2 = r[2] / n1
    cdef double d = x0 * r[3] + x1 * r[4] + x2 * r[5]
    cdef double y0 = r[3] - d * x0, y1 = r[4] - d * x1, y2 = r[5] - d * x2
    cdef double ny = sqrt(y0 * y0 + y1 * y1 + y2 * y2)
    y0 /= ny
    y1 /= ny
    y2 /= ny
    out[0] = x0; out[1] = y0; out[2] = x1 * y2 - x2 * y1
    out[3] = x1; out[4] = y1; out[5] = x2 * y0 - x0 * y2
    out[6] = x2; out[7] = y2; out[8] = x0 * y1 - x1 * y0
    return 0


cdef inline double _geodesic(const double* a, const double* b) noexcept nogil:
    cdef double tr = 0.0
    cdef int i
    for i in range(9):
        tr += a[i] * b[i]
    cdef double c = (tr - 1.0) * 0.5
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    return acos(c)


def _raise_degenerate(double[:, ::1] r6, Py_ssize_t k):
    raise DegenerateRotationError(
        f"degenerate 6D rotation at row {k}: {np.asarray(r6[k]).tolist()}"
    )


def rot6d_to_matrix(r6):
    cdef double[:, ::1] r = np.ascontiguousarray(r6, dtype=np.float64).reshape(-1, 6)
    cdef Py_ssize_t n = r.shape[0], k
    out = np.empty((n, 3, 3), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    cdef Py_ssize_t bad = -1
    with nogil:
        for k in range(n):
            if _gram_schmidt(&r[k, 0], &o[k, 0, 0]):
                bad = k
                break
    if bad >= 0:
        _raise_degenerate(r, bad)
    return out


def geodesic_angle(ra, rb):
    cdef double[:, :, ::1] a = np.ascontiguousarray(ra, dtype=np.float64).reshape(-1, 3, 3)
    cdef double[:, :, ::1] b = np.ascontiguousarray(rb, dtype=np.float64).reshape(-1, 3, 3)
    cdef Py_ssize_t n = a.shape[0], k
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for k in range(n):
            o[k] = _geodesic(&a[k, 0, 0], &b[k, 0, 0])
    return out


def rot6d_geodesic(a6, b6):
    cdef double[:, ::1] a = np.ascontiguousarray(a6, dtype=np.float64).reshape(-1, 6)
    cdef double[:, ::1] b = np.ascontiguousarray(b6, dtype=np.float64).reshape(-1, 6)
    cdef Py_ssize_t n = a.shape[0], k
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double ma[9]
    cdef double mb[9]
    cdef Py_ssize_t bad = -1
    cdef double[:, ::1] src = a
    with nogil:
        for k in range(n):
            if _gram_schmidt(&a[k, 0], ma):
                bad = k
                break
            if _gram_schmidt(&b[k, 0], mb):
                bad = k
                src = b
                break
            o[k] = _geodesic(ma, mb)
    if bad >= 0:
        _raise_degenerate(src, bad)
    return out


def angular_speed(frames, double fps):
    cdef double[:, ::1] f = np.ascontiguousarray(frames, dtype=np.float64)
    cdef Py_ssize_t n = f.shape[0], j = f.shape[1] // 6, t, q
    mats_arr = rot6d_to_matrix(np.asarray(f).reshape(-1, 6))
    cdef double[:, :, ::1] m = mats_arr
    out = np.zeros(n - 1, dtype=np.float64)
    cdef double[::1] o = out
    cdef double acc
    with nogil:
        for t in range(n - 1):
            acc = 0.0
            for q in range(j):
                acc += _geodesic(&m[t * j + q, 0, 0], &m[(t + 1) * j + q, 0, 0])
            o[t] = acc / j * fps
    return out


def forward_kinematics(rotmats, parents, offsets, order):
    cdef double[:, :, :, ::1] r = np.ascontiguousarray(rotmats, dtype=np.float64)
    cdef long[::1] par = np.ascontiguousarray(parents, dtype=np.int64)
    cdef double[:, ::1] off = np.ascontiguousarray(offsets, dtype=np.float64)
    cdef long[::1] ordr = np.ascontiguousarray(order, dtype=np.int64)
    cdef Py_ssize_t n = r.shape[0], j = r.shape[1], t, idx, k, p, a, b, c
    glob_arr = np.zeros((n, j, 3, 3), dtype=np.float64)
    pos_arr = np.zeros((n, j, 3), dtype=np.float64)
    cdef double[:, :, :, ::1] g = glob_arr
    cdef double[:, :, ::1] pos = pos_arr
    cdef double s
    with nogil:
        for t in range(n):
            for idx in range(j):
                k = ordr[idx]
                p = par[k]
                if p < 0:
                    for a in range(3):
                        for b in range(3):
                            g[t, k, a, b] = r[t, k, a, b]
                    continue
                for a in range(3):
                    s = 0.0
                    for c in range(3):
                        s += g[t, p, a, c] * off[k, c]
                    pos[t, k, a] = pos[t, p, a] + s
                    for b in range(3):
                        s = 0.0
                        for c in range(3):
                            s += g[t, p, a, c] * r[t, k, c, b]
                        g[t, k, a, b] = s
    return pos_arr


def beat_align_score(audio_beats, gesture_beats, double sigma):
    cdef double[::1] a = np.ascontiguousarray(audio_beats, dtype=np.float64).ravel()
    cdef double[::1] g = np.sort(np.asarray(gesture_beats, dtype=np.float64).ravel())
    cdef Py_ssize_t na = a.shape[0], ng = g.shape[0], i, lo, hi, mid
    if na == 0:
        return 1.0
    if ng == 0:
        return 0.0
    cdef double total = 0.0, d, d2, inv = 1.0 / (2.0 * sigma * sigma)
    with nogil:
        for i in range(na):
            # first index with g[idx] >= a[i]
            lo = 0
            hi = ng
            while lo < hi:
                mid = (lo + hi) // 2
                if g[mid] < a[i]:
                    lo = mid + 1
                else:
                    hi = mid
            d = 1e300
            if lo < ng:
                d = fabs(g[lo] - a[i])
            if lo > 0:
                d2 = fabs(a[i] - g[lo - 1])
                if d2 < d:
                    d = d2
            total += exp(-d * d * inv)
    return total / na


def pairwise_l2(samples):
    cdef double[:, :, ::1] s = np.ascontiguousarray(samples, dtype=np.float64)
    cdef Py_ssize_t k = s.shape[0], n = s.shape[1], w = s.shape[2], i, jj, t, c, idx = 0
    out = np.empty(k * (k - 1) // 2, dtype=np.float64)
    cdef double[::1] o = out
    cdef double acc, sq, diff, norm = sqrt(<double>w)
    with nogil:
        for i in range(k):
            for jj in range(i + 1, k):
                acc = 0.0
                for t in range(n):
                    sq = 0.0
                    for c in range(w):
                        diff = s[i, t, c] - s[jj, t, c]
                        sq += diff * diff
                    acc += sqrt(sq)
                o[idx] = acc / n / norm
                idx += 1
    return out
