# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops; see ``_kernels_py`` for the reference semantics."""

import numpy as np

from transync import _kernels_py
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


DEF MAX_D = 16


cdef void _moments(const double* x, const double* y, const unsigned char* m,
                   Py_ssize_t n, Py_ssize_t d,
                   long* count, double* mx, double* my, double* cross,
                   double* ssx, double* ssy) noexcept nogil:
    # two passes (centroid, then centred sums) to keep cancellation small;
    # masked rows are weighted by 0 rather than skipped, which avoids
    # unpredictable branches on random masks
    cdef Py_ssize_t r, a, b
    cdef long c = 0
    cdef double w, sx = 0.0, sy = 0.0, inv
    cdef double cx[MAX_D]
    cdef double cy[MAX_D]
    cdef double dx[MAX_D]
    cdef double dy[MAX_D]
    cdef double sc[MAX_D * MAX_D]
    for a in range(d):
        cx[a] = 0.0
        cy[a] = 0.0
    for b in range(d * d):
        sc[b] = 0.0
    for r in range(n):
        w = <double>m[r]
        c += m[r]
        for a in range(d):
            cx[a] += w * x[r * d + a]
            cy[a] += w * y[r * d + a]
    count[0] = c
    inv = 1.0 / c if c > 0 else 0.0
    for a in range(d):
        cx[a] *= inv
        cy[a] *= inv
        mx[a] = cx[a]
        my[a] = cy[a]
    if c > 0:
        for r in range(n):
            w = <double>m[r]
            for a in range(d):
                dx[a] = w * (x[r * d + a] - cx[a])
                dy[a] = w * (y[r * d + a] - cy[a])
                sx += dx[a] * dx[a]
                sy += dy[a] * dy[a]
            for a in range(d):
                for b in range(d):
                    sc[a * d + b] += dx[a] * dy[b]
    for b in range(d * d):
        cross[b] = sc[b]
    ssx[0] = sx
    ssy[0] = sy


def _outputs(Py_ssize_t p, Py_ssize_t d):
    return (np.empty(p, dtype=np.int_), np.empty((p, d)), np.empty((p, d)),
            np.empty((p, d, d)), np.empty(p), np.empty(p))


def pair_moments(const double[:, :, ::1] X, const double[:, :, ::1] Y, const unsigned char[:, ::1] mask):
    cdef Py_ssize_t p = X.shape[0], n = X.shape[1], d = X.shape[2]
    cdef Py_ssize_t q
    if Y.shape[0] != p or Y.shape[1] != n or Y.shape[2] != d or mask.shape[0] != p or mask.shape[1] != n:
        raise ValueError("pair_moments: inconsistent shapes")
    if d > MAX_D:
        raise ValueError(f"pair_moments: dimension {d} exceeds {MAX_D}")
    count, mx, my, cross, ssx, ssy = out = _outputs(p, d)
    if p == 0 or n == 0:
        return _kernels_py.pair_moments(X, Y, mask)
    cdef long[::1] c_v = count
    cdef double[:, ::1] mx_v = mx, my_v = my
    cdef double[:, :, ::1] cr_v = cross
    cdef double[::1] sx_v = ssx, sy_v = ssy
    with nogil:
        for q in range(p):
            _moments(&X[q, 0, 0], &Y[q, 0, 0], &mask[q, 0], n, d,
                     &c_v[q], &mx_v[q, 0], &my_v[q, 0], &cr_v[q, 0, 0], &sx_v[q], &sy_v[q])
    return out


cdef void _moments_centred(const double* x, const double* y, const unsigned char* m1,
                           const unsigned char* m2, Py_ssize_t n, Py_ssize_t d,
                           long* count, double* mx, double* my, double* cross,
                           double* ssx, double* ssy) noexcept nogil:
    # one pass of raw sums; inputs are already centred per cloud, so
    # removing the common-point centroid afterwards cancels little.
    # Accumulators are locals so the compiler can keep them in registers.
    cdef Py_ssize_t r, a, b
    cdef long c = 0
    cdef double w, wx, sxx = 0.0, syy = 0.0, inv
    cdef double x0, x1, y0, y1
    cdef double s0 = 0.0, s1 = 0.0, t0 = 0.0, t1 = 0.0
    cdef double c00 = 0.0, c01 = 0.0, c10 = 0.0, c11 = 0.0
    cdef double sx[MAX_D]
    cdef double sy[MAX_D]
    cdef double sc[MAX_D * MAX_D]
    if d == 2:
        for r in range(n):
            w = <double>(m1[r] & m2[r])
            c += <long>w
            x0 = w * x[2 * r]
            x1 = w * x[2 * r + 1]
            y0 = w * y[2 * r]
            y1 = w * y[2 * r + 1]
            s0 += x0
            s1 += x1
            t0 += y0
            t1 += y1
            sxx += x0 * x0 + x1 * x1
            syy += y0 * y0 + y1 * y1
            c00 += x0 * y0
            c01 += x0 * y1
            c10 += x1 * y0
            c11 += x1 * y1
        sx[0] = s0
        sx[1] = s1
        sy[0] = t0
        sy[1] = t1
        sc[0] = c00
        sc[1] = c01
        sc[2] = c10
        sc[3] = c11
    else:
        for a in range(d):
            sx[a] = 0.0
            sy[a] = 0.0
        for b in range(d * d):
            sc[b] = 0.0
        for r in range(n):
            w = <double>(m1[r] & m2[r])
            c += <long>w
            for a in range(d):
                wx = w * x[r * d + a]
                sx[a] += wx
                sy[a] += w * y[r * d + a]
                sxx += wx * x[r * d + a]
                syy += w * y[r * d + a] * y[r * d + a]
                for b in range(d):
                    sc[a * d + b] += wx * y[r * d + b]
    count[0] = c
    if c == 0:
        for a in range(d):
            mx[a] = 0.0
            my[a] = 0.0
        for b in range(d * d):
            cross[b] = 0.0
        ssx[0] = 0.0
        ssy[0] = 0.0
        return
    inv = 1.0 / c
    for a in range(d):
        mx[a] = sx[a] * inv
        my[a] = sy[a] * inv
    for a in range(d):
        sxx -= c * mx[a] * mx[a]
        syy -= c * my[a] * my[a]
        for b in range(d):
            cross[a * d + b] = sc[a * d + b] - c * mx[a] * my[b]
    ssx[0] = sxx if sxx > 0.0 else 0.0
    ssy[0] = syy if syy > 0.0 else 0.0


def all_pair_moments(const double[:, :, ::1] P, const unsigned char[:, ::1] present):
    cdef Py_ssize_t k = P.shape[0], n = P.shape[1], d = P.shape[2]
    cdef Py_ssize_t i, j, q, t, a, b
    if present.shape[0] != k or present.shape[1] != n:
        raise ValueError("all_pair_moments: inconsistent shapes")
    if d > MAX_D:
        raise ValueError(f"all_pair_moments: dimension {d} exceeds {MAX_D}")
    if k == 0 or n == 0:
        return _kernels_py.all_pair_moments(P, present)
    w = np.asarray(present, dtype=np.float64)
    shift = np.einsum("kn,knd->kd", w, P) / np.maximum(w.sum(axis=1), 1.0)[:, None]
    Q = np.ascontiguousarray(np.asarray(P) - shift[:, None, :])
    cdef const double[:, :, ::1] Qv = Q
    cdef const double[:, ::1] sv = shift
    count, mx, my, cross, ssx, ssy = _outputs(k * k, d)
    cdef long[::1] c_v = count
    cdef double[:, ::1] mx_v = mx, my_v = my
    cdef double[:, :, ::1] cr_v = cross
    cdef double[::1] sx_v = ssx, sy_v = ssy
    with nogil:
        for i in range(k):
            for j in range(i, k):
                q = i * k + j
                _moments_centred(&Qv[i, 0, 0], &Qv[j, 0, 0], &present[i, 0], &present[j, 0], n, d,
                                 &c_v[q], &mx_v[q, 0], &my_v[q, 0], &cr_v[q, 0, 0], &sx_v[q], &sy_v[q])
                for a in range(d):
                    mx_v[q, a] += sv[i, a]
                    my_v[q, a] += sv[j, a]
                # (j, i) swaps the roles of the two clouds; same sums, bit for bit
                t = j * k + i
                c_v[t] = c_v[q]
                sx_v[t] = sy_v[q]
                sy_v[t] = sx_v[q]
                for a in range(d):
                    mx_v[t, a] = my_v[q, a]
                    my_v[t, a] = mx_v[q, a]
                    for b in range(d):
                        cr_v[t, a, b] = cr_v[q, b, a]
    return (count.reshape(k, k), mx.reshape(k, k, d), my.reshape(k, k, d),
            cross.reshape(k, k, d, d), ssx.reshape(k, k), ssy.reshape(k, k))


def max_triple_residual(const double[:, :, :, ::1] B):
    cdef Py_ssize_t k = B.shape[0], m = B.shape[2]
    cdef Py_ssize_t i, j, l, a, b, c
    cdef double acc, diff, best = 0.0
    if B.shape[1] != k or B.shape[3] != m:
        raise ValueError("max_triple_residual: expected (k, k, m, m) blocks")
    with nogil:
        for i in range(k):
            for j in range(k):
                for l in range(k):
                    acc = 0.0
                    for a in range(m):
                        for c in range(m):
                            diff = -B[i, l, a, c]
                            for b in range(m):
                                diff = diff + B[i, j, a, b] * B[j, l, b, c]
                            acc = acc + diff * diff
                    if acc > best:
                        best = acc
    return sqrt(best)


def pair_distance_sum(const double[:, ::1] F):
    cdef Py_ssize_t k = F.shape[0], N = F.shape[1]
    cdef Py_ssize_t i, j, r
    cdef double acc, diff, total = 0.0
    with nogil:
        for i in range(k):
            for j in range(i + 1, k):
                acc = 0.0
                for r in range(N):
                    diff = F[i, r] - F[j, r]
                    acc = acc + diff * diff
                total = total + sqrt(acc)
    return total
