# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops; see ``_kernels`` for the dispatching wrappers."""

import numpy as np
cimport numpy as cnp
from libc.math cimport atan2, pow, sqrt

cnp.import_array()

DEF PI = 3.141592653589793


def winding_numbers(const double[:, :, ::1] tri, const double[:, ::1] ys):
    """Solid-angle winding number of a closed oriented triangle surface."""
    cdef Py_ssize_t nf = tri.shape[0], npnt = ys.shape[0]
    cdef Py_ssize_t p, f, k
    cdef double a[3]
    cdef double b[3]
    cdef double c[3]
    cdef double la, lb, lc, det, den, total
    out = np.empty(npnt)
    cdef double[::1] res = out
    with nogil:
        for p in range(npnt):
            total = 0.0
            for f in range(nf):
                for k in range(3):
                    a[k] = tri[f, 0, k] - ys[p, k]
                    b[k] = tri[f, 1, k] - ys[p, k]
                    c[k] = tri[f, 2, k] - ys[p, k]
                la = sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])
                lb = sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2])
                lc = sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2])
                det = (a[0] * (b[1] * c[2] - b[2] * c[1])
                       - a[1] * (b[0] * c[2] - b[2] * c[0])
                       + a[2] * (b[0] * c[1] - b[1] * c[0]))
                den = (la * lb * lc
                       + (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) * lc
                       + (a[0] * c[0] + a[1] * c[1] + a[2] * c[2]) * lb
                       + (b[0] * c[0] + b[1] * c[1] + b[2] * c[2]) * la)
                total += 2.0 * atan2(det, den)
            res[p] = total / (4.0 * PI)
    return out


def ball_sums(const double[:, ::1] pts, const double[::1] mass,
              const double[:, ::1] centers, double radius):
    """Total ``mass`` of points strictly inside each ball ``B(center, radius)``."""
    cdef Py_ssize_t q = pts.shape[0], nc = centers.shape[0], d = pts.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double r2 = radius * radius, dist, diff, s
    out = np.zeros(nc)
    cdef double[::1] res = out
    with nogil:
        for j in range(nc):
            s = 0.0
            for i in range(q):
                dist = 0.0
                for k in range(d):
                    diff = pts[i, k] - centers[j, k]
                    dist = dist + diff * diff
                    if dist >= r2:
                        break
                if dist < r2:
                    s = s + mass[i]
            res[j] = s
    return out


DEF MAXN = 16


cdef inline void _tangent_gradient(const double* x, const double* frames, const double* xi, double lam,
                                   Py_ssize_t n, Py_ssize_t k, double* m) noexcept nogil:
    """Write the (n, k) tangential gradient of phi_{xi, lam} at one point into m.

    ``x`` points at the n coordinates and ``frames`` at the row-major (n, k)
    frame of that point.
    """
    cdef double t = 0.0, inv, a, s, beta, c0, c1, cg
    cdef double cvec[MAXN]
    cdef double g[MAXN]
    cdef Py_ssize_t i, j
    for i in range(n):
        t = t + x[i] * xi[i]
    inv = 1.0 / (lam * lam * (1.0 - t) + (1.0 + t))
    a = 2.0 * lam * inv
    s = -(lam * lam) * (1.0 - t) - 2.0 * lam * t + (1.0 + t)
    # c = ((lam - 1)^2 / den) xi - (1 - lam^2) (s xi + 2 lam x) / den^2
    beta = (1.0 - lam * lam) * inv * inv
    c0 = (lam - 1.0) * (lam - 1.0) * inv - beta * s
    c1 = 2.0 * lam * beta
    for i in range(n):
        cvec[i] = c0 * xi[i] - c1 * x[i]
    for j in range(k):
        cg = 0.0
        for i in range(n):
            cg = cg + frames[i * k + j] * xi[i]
        g[j] = cg
    for i in range(n):
        for j in range(k):
            m[i * k + j] = a * frames[i * k + j] + cvec[i] * g[j]


def moebius_fit_cross(const double[:, ::1] x, const double[:, :, ::1] frames,
                      const double[:, :, ::1] wtarget, const double[::1] xi, double lam):
    """Cross matrix ``sum_q wtarget_q M_q^T`` with ``M_q`` the tangential Moebius gradient."""
    cdef Py_ssize_t npt = x.shape[0], n = x.shape[1], k = frames.shape[2]
    cdef Py_ssize_t q, i, j, l
    cdef double m[MAXN * MAXN]
    cdef double s
    if n > MAXN:
        raise ValueError(f"dimension {n} exceeds {MAXN}")
    out = np.zeros((n, n))
    cdef double[:, ::1] C = out
    with nogil:
        for q in range(npt):
            _tangent_gradient(&x[q, 0], &frames[q, 0, 0], &xi[0], lam, n, k, m)
            for i in range(n):
                for j in range(n):
                    s = 0.0
                    for l in range(k):
                        s = s + wtarget[q, i, l] * m[j * k + l]
                    C[i, j] = C[i, j] + s
    return out


def moebius_fit_misfit(const double[:, ::1] x, const double[:, :, ::1] frames,
                       const double[:, :, ::1] target, const double[::1] w,
                       const double[::1] xi, double lam, const double[:, ::1] O, double power):
    """``sum_q w_q |target_q - O M_q|^(2 power)``."""
    cdef Py_ssize_t npt = x.shape[0], n = x.shape[1], k = frames.shape[2]
    cdef Py_ssize_t q, i, j, l
    cdef double m[MAXN * MAXN]
    cdef double s, d, sq, total = 0.0
    if n > MAXN:
        raise ValueError(f"dimension {n} exceeds {MAXN}")
    with nogil:
        for q in range(npt):
            _tangent_gradient(&x[q, 0], &frames[q, 0, 0], &xi[0], lam, n, k, m)
            sq = 0.0
            for i in range(n):
                for l in range(k):
                    s = 0.0
                    for j in range(n):
                        s = s + O[i, j] * m[j * k + l]
                    d = target[q, i, l] - s
                    sq = sq + d * d
            if power == 1.0:
                total = total + w[q] * sq
            elif power == 0.5:
                total = total + w[q] * sqrt(sq)
            else:
                total = total + w[q] * pow(sq, power)
    return total
