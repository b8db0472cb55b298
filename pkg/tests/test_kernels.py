"""The compiled and numpy kernels must agree; the extended erf must match mpmath."""

import importlib

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ngt import _pykernels as py
from ngt import kernels

try:
    c = importlib.import_module("ngt._ckernels")
except ImportError:
    c = None

needs_c = pytest.mark.skipif(c is None, reason="compiled extension not built")
rows = hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=3, max_side=9),
                  elements=st.floats(-30, 30, allow_nan=False))


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


@needs_c
@given(rows)
def test_softmax_backends_agree(x):
    np.testing.assert_allclose(c.softmax_rows(x), py.softmax_rows(x), rtol=1e-13, atol=1e-15)
    gy = np.sin(x)
    y = py.softmax_rows(x)
    np.testing.assert_allclose(c.softmax_rows_backward(y, gy), py.softmax_rows_backward(y, gy),
                               rtol=1e-12, atol=1e-14)


@needs_c
@given(rows)
def test_layer_norm_backends_agree(x):
    # near-constant rows normalise roundoff noise, which no two summation orders share
    h = x.shape[-1]
    x = x + np.linspace(0, 1, h)
    gamma, beta = np.linspace(0.5, 1.5, h), np.linspace(-1, 1, h)
    for a, b in zip(c.layer_norm_rows(x, gamma, beta, 1e-12), py.layer_norm_rows(x, gamma, beta, 1e-12)):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10)
    out, xhat, rstd = py.layer_norm_rows(x, gamma, beta, 1e-12)
    gy = np.cos(x)
    for a, b in zip(c.layer_norm_rows_backward(gy, xhat, rstd, gamma),
                    py.layer_norm_rows_backward(gy, xhat, rstd, gamma)):
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)


@needs_c
@given(rows)
def test_gelu_backends_agree(x):
    np.testing.assert_allclose(c.gelu(x), py.gelu(x), rtol=1e-14, atol=1e-300)
    gy = np.ones_like(x)
    np.testing.assert_allclose(c.gelu_backward(x, gy), py.gelu_backward(x, gy), rtol=1e-13, atol=1e-300)


def test_longdouble_routes_to_numpy():
    x = np.linspace(-2, 2, 7).astype(np.longdouble)
    assert kernels.gelu(x).dtype == np.longdouble
    assert kernels.softmax_rows(x).dtype == np.longdouble


def test_erf_extended_matches_mpmath():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 40
    xs = np.array([-6, -3.2, -2.0, -1.999, -0.7, 0, 1e-8, 0.3, 1.0, 1.999, 2.0, 2.5, 4.0, 7.0],
                  dtype=np.longdouble)
    got = py.erf_extended(xs)
    eps = float(np.finfo(np.longdouble).eps)
    exact = lambda v: mpmath.mpf(v.as_integer_ratio()[0]) / v.as_integer_ratio()[1]
    for x, y in zip(xs, got):
        ref = mpmath.erf(exact(x))
        assert abs(exact(y) - ref) <= 8 * eps * max(abs(ref), 1e-30)
