"""BERT-style post-LN encoder layer built on the autodiff tape."""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad

MASK_FILL = -1e9


def layer_shapes(hidden: int, intermediate: int) -> dict[str, tuple[int, ...]]:
    """Parameter shapes of one encoder layer, keyed by suffix."""
    h, i = hidden, intermediate
    shapes = {}
    for proj in ("query", "key", "value", "output"):
        shapes[f"attn.{proj}.weight"] = (h, h)
        shapes[f"attn.{proj}.bias"] = (h,)
    shapes["attn_ln.gamma"] = (h,)
    shapes["attn_ln.beta"] = (h,)
    shapes["ffn.in.weight"] = (h, i)
    shapes["ffn.in.bias"] = (i,)
    shapes["ffn.out.weight"] = (i, h)
    shapes["ffn.out.bias"] = (h,)
    shapes["ffn_ln.gamma"] = (h,)
    shapes["ffn_ln.beta"] = (h,)
    return shapes


def layer_param_count(hidden: int, intermediate: int) -> int:
    h, i = hidden, intermediate
    return 4 * (h * h + h) + (h * i + i) + (i * h + h) + 4 * h


def init_tensor(name: str, shape, std: float, rng: np.random.Generator) -> np.ndarray:
    """Normal(0, std) for weights and embeddings, ones for LN gammas, zeros otherwise."""
    if name.endswith(".gamma"):
        return np.ones(shape)
    if name.endswith(".beta") or name.endswith(".bias"):
        return np.zeros(shape)
    return rng.normal(0.0, std, size=shape)


def attention_mask_bias(mask) -> np.ndarray:
    """(batch, seq) 1/0 padding mask -> additive (batch, 1, 1, seq) logits bias."""
    mask = np.asarray(mask, dtype=np.float64)
    return ((1.0 - mask) * MASK_FILL)[:, None, None, :]


class LayerParams:
    """Registers the parameters of one layer on a graph under a name prefix."""

    def __init__(self, g: ad.Graph, params: dict, prefix: str):
        self.g, self.params, self.prefix = g, params, prefix

    def __getitem__(self, suffix: str) -> ad.Node:
        name = self.prefix + suffix
        return self.g.param(name, self.params[name])


def self_attention(g, p: LayerParams, x, mask_bias, heads: int, dropout: float, train, rng):
    batch, seq, hidden = x.shape
    d = hidden // heads

    def split_heads(t, axes):
        t = ad.reshape(g, t, (batch, seq, heads, d))
        return ad.transpose(g, t, axes)

    q = split_heads(ad.linear(g, x, p["attn.query.weight"], p["attn.query.bias"]), (0, 2, 1, 3))
    k = split_heads(ad.linear(g, x, p["attn.key.weight"], p["attn.key.bias"]), (0, 2, 3, 1))
    v = split_heads(ad.linear(g, x, p["attn.value.weight"], p["attn.value.bias"]), (0, 2, 1, 3))
    scores = ad.scale(g, ad.matmul(g, q, k), 1.0 / math.sqrt(d))
    scores = ad.add(g, scores, mask_bias)
    probs = ad.softmax(g, scores, axis=-1)
    probs = ad.dropout(g, probs, dropout, train, rng)
    ctx = ad.transpose(g, ad.matmul(g, probs, v), (0, 2, 1, 3))
    ctx = ad.reshape(g, ctx, (batch, seq, hidden))
    return ad.linear(g, ctx, p["attn.output.weight"], p["attn.output.bias"]), probs


def encoder_layer(g, params, prefix, x, mask_bias, cfg, train=False, rng=None, probe=None):
    """One post-LN transformer layer; ``cfg`` supplies heads, dropout and ln_eps.

    ``probe``, if a list, receives the attention-probability node.
    """
    if x.shape[-1] != cfg.hidden:
        raise ValueError(f"layer {prefix!r} expects hidden size {cfg.hidden}, got {x.shape}")
    p = LayerParams(g, params, prefix)
    attn, probs = self_attention(g, p, x, mask_bias, cfg.heads, cfg.dropout, train, rng)
    if probe is not None:
        probe.append(probs)
    attn = ad.dropout(g, attn, cfg.dropout, train, rng)
    h = ad.layer_norm(g, ad.add(g, x, attn), p["attn_ln.gamma"], p["attn_ln.beta"], cfg.ln_eps)
    ff = ad.gelu(g, ad.linear(g, h, p["ffn.in.weight"], p["ffn.in.bias"]))
    ff = ad.linear(g, ff, p["ffn.out.weight"], p["ffn.out.bias"])
    ff = ad.dropout(g, ff, cfg.dropout, train, rng)
    return ad.layer_norm(g, ad.add(g, h, ff), p["ffn_ln.gamma"], p["ffn_ln.beta"], cfg.ln_eps)
