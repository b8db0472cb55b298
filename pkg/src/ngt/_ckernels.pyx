# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled row kernels; same contracts as ``ngt._pykernels``.

wraparound is off: never index with negative numbers in this file.
"""

import numpy as np
from libc.math cimport exp, erf, sqrt

cdef double INV_SQRT2 = 0.7071067811865476
cdef double INV_SQRT2PI = 0.3989422804014327


cdef inline tuple _rows(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[x.ndim - 1] if x.ndim else 1
    return x, x.reshape(-1, n)


def softmax_rows(x):
    x, x2 = _rows(x)
    out = np.empty_like(x2)
    cdef double[:, ::1] a = x2
    cdef double[:, ::1] o = out
    cdef Py_ssize_t r, c, nr = a.shape[0], nc = a.shape[1]
    cdef double m, s
    with nogil:
        for r in range(nr):
            m = a[r, 0]
            for c in range(1, nc):
                if a[r, c] > m:
                    m = a[r, c]
            s = 0.0
            for c in range(nc):
                o[r, c] = exp(a[r, c] - m)
                s = s + o[r, c]
            for c in range(nc):
                o[r, c] = o[r, c] / s
    return out.reshape(x.shape)


def softmax_rows_backward(y, gy):
    y, y2 = _rows(y)
    gy, g2 = _rows(gy)
    out = np.empty_like(y2)
    cdef double[:, ::1] yv = y2
    cdef double[:, ::1] gv = g2
    cdef double[:, ::1] o = out
    cdef Py_ssize_t r, c, nr = yv.shape[0], nc = yv.shape[1]
    cdef double dot
    with nogil:
        for r in range(nr):
            dot = 0.0
            for c in range(nc):
                dot = dot + gv[r, c] * yv[r, c]
            for c in range(nc):
                o[r, c] = yv[r, c] * (gv[r, c] - dot)
    return out.reshape(y.shape)


def layer_norm_rows(x, gamma, beta, double eps):
    x, x2 = _rows(x)
    out = np.empty_like(x2)
    xhat = np.empty_like(x2)
    rstd = np.empty(x2.shape[0], dtype=np.float64)
    cdef double[:, ::1] a = x2
    cdef double[:, ::1] o = out
    cdef double[:, ::1] h = xhat
    cdef double[::1] rs = rstd
    cdef double[::1] gm = np.ascontiguousarray(gamma, dtype=np.float64)
    cdef double[::1] bt = np.ascontiguousarray(beta, dtype=np.float64)
    cdef Py_ssize_t r, c, nr = a.shape[0], nc = a.shape[1]
    cdef double mean, var, d, inv
    with nogil:
        for r in range(nr):
            mean = 0.0
            for c in range(nc):
                mean = mean + a[r, c]
            mean = mean / nc
            var = 0.0
            for c in range(nc):
                d = a[r, c] - mean
                var = var + d * d
            var = var / nc
            inv = 1.0 / sqrt(var + eps)
            rs[r] = inv
            for c in range(nc):
                d = (a[r, c] - mean) * inv
                h[r, c] = d
                o[r, c] = d * gm[c] + bt[c]
    lead = x.shape[:x.ndim - 1]
    return out.reshape(x.shape), xhat.reshape(x.shape), rstd.reshape(lead)


def layer_norm_rows_backward(gy, xhat, rstd, gamma):
    gy, g2 = _rows(gy)
    xhat, h2 = _rows(xhat)
    gx = np.empty_like(g2)
    ggamma = np.zeros(g2.shape[1], dtype=np.float64)
    gbeta = np.zeros(g2.shape[1], dtype=np.float64)
    cdef double[:, ::1] g = g2
    cdef double[:, ::1] h = h2
    cdef double[:, ::1] o = gx
    cdef double[::1] rs = np.ascontiguousarray(rstd, dtype=np.float64).reshape(-1)
    cdef double[::1] gm = np.ascontiguousarray(gamma, dtype=np.float64)
    cdef double[::1] gg = ggamma
    cdef double[::1] gb = gbeta
    cdef Py_ssize_t r, c, nr = g.shape[0], nc = g.shape[1]
    cdef double m1, m2, t
    with nogil:
        for r in range(nr):
            m1 = 0.0
            m2 = 0.0
            for c in range(nc):
                t = g[r, c] * gm[c]
                m1 = m1 + t
                m2 = m2 + t * h[r, c]
                gg[c] = gg[c] + g[r, c] * h[r, c]
                gb[c] = gb[c] + g[r, c]
            m1 = m1 / nc
            m2 = m2 / nc
            for c in range(nc):
                o[r, c] = (g[r, c] * gm[c] - m1 - h[r, c] * m2) * rs[r]
    return gx.reshape(gy.shape), ggamma, gbeta


def gelu(x):
    x, x2 = _rows(x)
    out = np.empty_like(x2)
    cdef double[:, ::1] a = x2
    cdef double[:, ::1] o = out
    cdef Py_ssize_t r, c, nr = a.shape[0], nc = a.shape[1]
    cdef double v
    with nogil:
        for r in range(nr):
            for c in range(nc):
                v = a[r, c]
                o[r, c] = 0.5 * v * (1.0 + erf(v * INV_SQRT2))
    return out.reshape(x.shape)


def gelu_backward(x, gy):
    x, x2 = _rows(x)
    gy, g2 = _rows(gy)
    out = np.empty_like(x2)
    cdef double[:, ::1] a = x2
    cdef double[:, ::1] g = g2
    cdef double[:, ::1] o = out
    cdef Py_ssize_t r, c, nr = a.shape[0], nc = a.shape[1]
    cdef double v
    with nogil:
        for r in range(nr):
            for c in range(nc):
                v = a[r, c]
                o[r, c] = g[r, c] * (0.5 * (1.0 + erf(v * INV_SQRT2))
                                     + v * INV_SQRT2PI * exp(-0.5 * v * v))
    return out.reshape(x.shape)
