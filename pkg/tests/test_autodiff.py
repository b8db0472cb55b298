import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ngt import autodiff as ad
from ngt.gating import GatingVariant
from ngt.harness import gradcheck_instance
from ngt.model import ModelConfig


def test_square_gradient():
    g = ad.Graph()
    w = g.param("w", [3.0])
    loss = ad.sum_(g, ad.hadamard(g, w, w))
    assert ad.backward(g, loss)["w"][0] == 6.0


def test_sigmoid_gradient_at_zero():
    g = ad.Graph()
    w = g.param("w", 0.0)
    assert ad.backward(g, ad.sigmoid(g, w))["w"] == 0.25


def test_non_scalar_loss_rejected():
    g = ad.Graph()
    w = g.param("w", np.ones(3))
    with pytest.raises(ValueError, match="scalar"):
        ad.backward(g, ad.scale(g, w, 2.0))


def test_unreachable_params_have_no_entry():
    g = ad.Graph()
    a, b = g.param("a", 1.0), g.param("b", 2.0)
    grads = ad.backward(g, ad.scale(g, a, 3.0))
    assert set(grads) == {"a"} and grads["a"] == 3.0
    del b


def test_shared_param_accumulates():
    g = ad.Graph()
    w = g.param("w", 2.0)
    w_again = g.param("w", 99.0)
    assert w_again is w
    loss = ad.add(g, ad.scale(g, w, 3.0), ad.hadamard(g, w, w))
    assert ad.backward(g, loss)["w"] == 3.0 + 4.0


@given(hnp.arrays(np.float64, (2, 3), elements=st.floats(-5, 5)),
       hnp.arrays(np.float64, (2, 3), elements=st.floats(-5, 5)),
       st.floats(-3, 3), st.floats(-3, 3))
def test_backward_is_linear_in_the_loss(x, c, alpha, beta):
    def grads(scale_a, scale_b):
        g = ad.Graph()
        w = g.param("w", x)
        wc = ad.hadamard(g, w, g.const(c))
        l1 = ad.sum_(g, ad.scale(g, wc, scale_a))
        l2 = ad.sum_(g, ad.scale(g, ad.tanh(g, w), scale_b))
        return ad.backward(g, ad.add(g, l1, l2))["w"]

    expected = alpha * c + beta * (1 - np.tanh(x) ** 2)
    np.testing.assert_allclose(grads(alpha, beta), expected, atol=1e-12)


def test_finite_diff_examples():
    np.testing.assert_allclose(ad.finite_diff_grad(np.sum, np.arange(6.0).reshape(2, 3)),
                               np.ones((2, 3)), atol=1e-9)
    assert abs(ad.finite_diff_grad(lambda x: float(x[0] ** 2), [3.0], 1e-5)[0] - 6.0) <= 1e-9
    with pytest.raises(ValueError):
        ad.finite_diff_grad(np.sum, [1.0], eps=0)


def test_linear_graph_checks_to_roundoff():
    rng = np.random.default_rng(0)
    g = ad.Graph()
    x = g.const(rng.normal(size=(4, 3)))
    w = g.param("w", rng.normal(size=(3, 2)))
    b = g.param("b", rng.normal(size=2))
    loss = ad.sum_(g, ad.linear(g, x, w, b))
    assert ad.grad_check(g, loss).max_error <= 1e-10


OPS_UNDER_TEST = {
    "softmax": lambda g, x: ad.softmax(g, x, axis=-1),
    "softmax_axis0": lambda g, x: ad.softmax(g, x, axis=0),
    "gelu": ad.gelu,
    "sigmoid": ad.sigmoid,
    "tanh": ad.tanh,
    "layer_norm": lambda g, x: ad.layer_norm(g, x, g.param("gamma", np.linspace(0.5, 2, 4)),
                                             g.param("beta", np.linspace(-1, 1, 4)), 1e-5),
    "transpose": lambda g, x: ad.transpose(g, x, (1, 0)),
    "reshape": lambda g, x: ad.reshape(g, x, (2, 6)),
    "slice": lambda g, x: ad.slice_axis(g, x, 1, 1, 3),
    "concat": lambda g, x: ad.concat(g, [x, ad.scale(g, x, 2.0)], axis=0),
    "matmul": lambda g, x: ad.matmul(g, x, g.param("m", np.arange(8.0).reshape(4, 2) / 7)),
    "mean": ad.mean,
}


@pytest.mark.parametrize("name", sorted(OPS_UNDER_TEST))
def test_op_gradients_match_central_differences(name):
    rng = np.random.default_rng(1)
    g = ad.Graph()
    x = g.param("x", rng.normal(size=(3, 4)))
    y = OPS_UNDER_TEST[name](g, x)
    weights = g.const(rng.normal(size=y.shape))
    loss = ad.sum_(g, ad.hadamard(g, y, weights))
    report = ad.grad_check(g, loss, tolerance=1e-6)
    assert report.passed, report.worst()


@pytest.mark.parametrize("labels,units", [([1, 0, 1], 1), ([2, 0, 1], 3)])
def test_loss_gradients(labels, units):
    rng = np.random.default_rng(2)
    g = ad.Graph()
    z = g.param("z", rng.normal(size=(3, units)))
    loss = (ad.bce_with_logits(g, z, labels) if units == 1 else ad.cross_entropy(g, z, labels))
    assert ad.grad_check(g, loss, tolerance=1e-7).passed


def test_bce_with_extreme_logits_is_finite():
    g = ad.Graph()
    z = g.param("z", [[800.0], [-800.0]])
    loss = ad.bce_with_logits(g, z, [0, 1])
    assert np.isfinite(loss.value) and loss.value == pytest.approx(800.0)
    assert np.all(np.isfinite(ad.backward(g, loss)["z"]))


def test_embed_gradient_scatters_repeats():
    g = ad.Graph()
    table = g.param("t", np.zeros((5, 2)))
    loss = ad.sum_(g, ad.embed(g, table, [[1, 1, 3]]))
    np.testing.assert_array_equal(ad.backward(g, loss)["t"][:, 0], [0, 2, 0, 1, 0])


def test_unfrozen_dropout_refuses_grad_check():
    g = ad.Graph()
    x = g.param("x", np.ones((3, 3)))
    y = ad.dropout(g, x, 0.5, train=True, rng=np.random.default_rng(0), frozen=False)
    assert g.stochastic
    with pytest.raises(ad.GradCheckError):
        ad.grad_check(g, ad.sum_(g, y))


def test_frozen_dropout_is_checkable():
    g = ad.Graph()
    x = g.param("x", np.random.default_rng(0).normal(size=(4, 4)))
    y = ad.dropout(g, ad.tanh(g, x), 0.5, train=True, rng=np.random.default_rng(0))
    assert not g.stochastic
    assert ad.grad_check(g, ad.sum_(g, y), tolerance=1e-7).passed


def test_replay_reproduces_forward():
    g, loss = gradcheck_instance(GatingVariant.NEUROMODULATED)
    assert g.replay(upto=loss)[-1] == loss.value


@pytest.mark.slow
@pytest.mark.parametrize("variant", list(GatingVariant))
def test_toy_encoder_grad_check_cce_head(variant):
    cfg = ModelConfig(vocab_size=11, hidden=8, num_layers=2, heads=2, intermediate=16,
                      max_positions=8, output_units=3)
    g, loss = gradcheck_instance(variant, seed=4, cfg=cfg)
    report = ad.grad_check(g, loss, max_coords=16, seed=4)
    assert report.passed, report.worst()


def test_gating_parameters_receive_nonzero_gradients():
    g, loss = gradcheck_instance(GatingVariant.NEUROMODULATED)
    grads = ad.backward(g, loss)
    gb = [k for k in grads if k.startswith("gating.") and k.endswith("weight")]
    assert gb and all(np.abs(grads[k]).max() > 0 for k in gb)


def test_extended_oracle_resolves_zero_key_bias_gradient():
    # the key bias gradient is zero by softmax shift invariance
    g, loss = gradcheck_instance(GatingVariant.NONE)
    grads = ad.backward(g, loss)
    assert np.abs(grads["encoder.layer.0.attn.key.bias"]).max() < 1e-15
    extended = ad.grad_check(g, loss, max_coords=8)
    assert extended.errors["encoder.layer.0.attn.key.bias"] <= 1e-4

