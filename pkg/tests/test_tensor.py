import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ngt import tensor as T

finite = st.floats(-50, 50, allow_nan=False)


def test_hadamard_examples():
    a = [[1, 2], [3, 4]]
    np.testing.assert_array_equal(T.hadamard(a, np.ones((2, 2))), a)
    np.testing.assert_array_equal(T.hadamard(a, np.zeros((2, 2))), np.zeros((2, 2)))
    np.testing.assert_array_equal(T.hadamard([2, 3], [0.5, 0.5]), [1, 1.5])


def test_hadamard_shape_error_names_both_shapes():
    with pytest.raises(T.ShapeError, match=r"\(2, 2\).*\(2,\)"):
        T.hadamard(np.ones((2, 2)), np.ones(2))


@given(hnp.arrays(np.float64, hnp.array_shapes(max_dims=3, max_side=5), elements=finite))
def test_hadamard_matches_elementwise_product(a):
    b = np.cos(a)
    out = T.hadamard(a, b)
    assert out.shape == a.shape
    for idx in np.ndindex(a.shape):
        assert out[idx] == a[idx] * b[idx]


def test_sigmoid_examples():
    assert T.sigmoid([0.0])[0] == 0.5
    assert abs(T.sigmoid([40.0])[0] - 1.0) <= 1e-15
    assert T.sigmoid([math.log(3)])[0] == pytest.approx(0.75, abs=1e-15)


def test_sigmoid_extreme_inputs_stay_finite():
    out = T.sigmoid([-1000.0, 1000.0])
    assert np.all(np.isfinite(out))
    assert out[0] == 0.0 and out[1] == 1.0


@given(hnp.arrays(np.float64, hnp.array_shapes(max_dims=2, max_side=6), elements=finite))
def test_sigmoid_is_symmetric(x):
    np.testing.assert_allclose(T.sigmoid(x) + T.sigmoid(-x), 1.0, atol=1e-15)


def test_softmax_examples():
    np.testing.assert_allclose(T.softmax([2.5, 2.5, 2.5]), [1 / 3] * 3, atol=1e-15)
    np.testing.assert_array_equal(T.softmax([1000.0, 1000.0]), [0.5, 0.5])
    np.testing.assert_allclose(T.softmax([0.0, math.log(3)]), [0.25, 0.75], atol=1e-15)


def test_softmax_invalid_axis():
    with pytest.raises(T.ShapeError):
        T.softmax(np.ones((2, 3)), axis=2)


@given(hnp.arrays(np.float64, (3, 4), elements=finite), st.sampled_from([0, 1, -1]))
def test_softmax_rows_sum_to_one(x, axis):
    y = T.softmax(x, axis=axis)
    np.testing.assert_allclose(y.sum(axis=axis), 1.0, atol=1e-12)
    assert np.all(y >= 0)


def test_layer_norm_examples():
    np.testing.assert_array_equal(T.layer_norm([4.0, 4.0, 4.0], np.ones(3), np.zeros(3), 1e-12),
                                  [0, 0, 0])
    np.testing.assert_allclose(T.layer_norm([4.0] * 3, np.ones(3), np.full(3, 0.7), 1e-12), [0.7] * 3)
    np.testing.assert_allclose(T.layer_norm([-1.0, 1.0], np.ones(2), np.zeros(2), 1e-12),
                               [-1.0, 1.0], atol=1e-9)


def test_layer_norm_shape_mismatch():
    with pytest.raises(T.ShapeError):
        T.layer_norm(np.ones((2, 3)), np.ones(2), np.zeros(3), 1e-12)


def test_layer_norm_matches_definition():
    x = np.random.default_rng(0).normal(size=(4, 7))
    gamma, beta = np.linspace(0.5, 2, 7), np.linspace(-1, 1, 7)
    ref = (x - x.mean(-1, keepdims=True)) / np.sqrt(x.var(-1, keepdims=True) + 1e-5) * gamma + beta
    np.testing.assert_allclose(T.layer_norm(x, gamma, beta, 1e-5), ref, atol=1e-12)


def test_gelu_exact_erf_form():
    x = np.array([-3.0, -1.0, 0.0, 0.5, 2.0])
    ref = [0.5 * v * (1 + math.erf(v / math.sqrt(2))) for v in x]
    np.testing.assert_allclose(T.gelu(x), ref, rtol=1e-14, atol=1e-16)
    assert T.gelu([0.0])[0] == 0.0


def test_matmul_contract():
    a = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(T.matmul(a, np.eye(3)), a)
    batched = np.ones((4, 2, 3))
    assert T.matmul(batched, np.ones((3, 5))).shape == (4, 2, 5)
    with pytest.raises(T.ShapeError):
        T.matmul(a, np.ones((2, 2)))
    with pytest.raises(T.ShapeError):
        T.matmul(np.ones((2, 2, 3)), np.ones((3, 3, 1)))


def test_add_broadcast_rules():
    x = np.ones((2, 3))
    np.testing.assert_array_equal(T.add(x, np.zeros(3)), x)
    with pytest.raises(T.ShapeError):
        T.add(np.ones((2, 1)), np.ones((1, 3)))


def test_plumbing_identities():
    x = np.arange(24.0).reshape(2, 3, 4)
    np.testing.assert_array_equal(T.scale(x, 1.0), x)
    np.testing.assert_array_equal(T.transpose(T.transpose(x, (2, 0, 1)), (1, 2, 0)), x)
    np.testing.assert_array_equal(T.reshape(x, (2, 3, 4)), x)
    np.testing.assert_array_equal(T.slice_axis(x, 1, 0, 3), x)
    np.testing.assert_array_equal(T.concat([x[:, :1], x[:, 1:]], axis=1), x)
    assert T.sum_(x) == x.sum() and T.mean(x) == x.mean()
    with pytest.raises(T.ShapeError):
        T.reshape(x, (5, 5))
    with pytest.raises(T.ShapeError):
        T.slice_axis(x, 0, 1, 3)
    with pytest.raises(T.ShapeError):
        T.concat([x, np.ones((2, 3, 5))], axis=1)


def test_argmax_ties_go_low():
    assert T.argmax([0.3, 0.7, 0.7]) == 1
    assert T.argmax([1.0, 1.0]) == 0


def test_dropout_eval_identity_and_train_scaling():
    x = np.ones((200, 50))
    np.testing.assert_array_equal(T.dropout(x, 0.1, train=False), x)
    out = T.dropout(x, 0.25, train=True, rng=np.random.default_rng(0))
    assert set(np.unique(out)) <= {0.0, 1 / 0.75}
    assert abs(out.mean() - 1.0) < 0.02
    with pytest.raises(ValueError):
        T.dropout(x, 0.1, train=True)
    with pytest.raises(ValueError):
        T.dropout_mask((2,), 1.0, np.random.default_rng(0))
