"""Pure numpy row kernels.

Every function works on the last axis of a C-contiguous array and returns
fresh arrays. ``_ckernels`` mirrors these signatures for float64; the numpy
versions also accept ``longdouble`` input and keep that precision, which the
finite-difference oracle relies on.
"""

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT2PI = 0.3989422804014327


def softmax_rows(x):
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_rows_backward(y, gy):
    dot = (gy * y).sum(axis=-1, keepdims=True)
    return y * (gy - dot)


def layer_norm_rows(x, gamma, beta, eps):
    mean = x.mean(axis=-1, keepdims=True)
    xc = x - mean
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    return xhat * gamma + beta, xhat, rstd[..., 0]


def layer_norm_rows_backward(gy, xhat, rstd, gamma):
    lead = tuple(range(gy.ndim - 1))
    ggamma = (gy * xhat).sum(axis=lead)
    gbeta = gy.sum(axis=lead)
    gxhat = gy * gamma
    m1 = gxhat.mean(axis=-1, keepdims=True)
    m2 = (gxhat * xhat).mean(axis=-1, keepdims=True)
    gx = (gxhat - m1 - xhat * m2) * rstd[..., None]
    return gx, ggamma, gbeta


_PI_LD = np.longdouble("3.14159265358979323846264338327950288")


def erf_extended(x):
    """erf evaluated in ``longdouble``: positive-term series below 2, erfc continued fraction above."""
    x = np.asarray(x, dtype=np.longdouble)
    ax = np.abs(x)
    out = np.empty_like(x)
    small = ax < 2
    root_pi = np.sqrt(_PI_LD)
    if small.any():
        # erf z = 2/sqrt(pi) exp(-z^2) sum (2 z^2)^n z / (2n+1)!!, no cancellation
        z = ax[small]
        z2 = 2 * z * z
        term = z.copy()
        total = z.copy()
        for n in range(1, 120):
            term = term * z2 / (2 * n + 1)
            total = total + term
        out[small] = total * np.exp(-z * z) * 2 / root_pi
    if (~small).any():
        z = ax[~small]
        frac = np.zeros_like(z)
        for n in range(160, 0, -1):
            frac = (n / 2) / (z + frac)
        erfc = np.exp(-z * z) / root_pi / (z + frac)
        out[~small] = 1 - erfc
    return np.sign(x) * out


def _erf(x):
    return erf_extended(x) if x.dtype == np.longdouble else erf(x)


def _gelu_consts(x):
    if x.dtype == np.longdouble:
        return 1 / np.sqrt(np.longdouble(2)), 1 / np.sqrt(2 * _PI_LD)
    return _INV_SQRT2, _INV_SQRT2PI


def gelu(x):
    inv_sqrt2, _ = _gelu_consts(x)
    return 0.5 * x * (1.0 + _erf(x * inv_sqrt2))


def gelu_backward(x, gy):
    inv_sqrt2, inv_sqrt2pi = _gelu_consts(x)
    cdf = 0.5 * (1.0 + _erf(x * inv_sqrt2))
    pdf = inv_sqrt2pi * np.exp(-0.5 * x * x)
    return gy * (cdf + x * pdf)
