"""BERT-shaped encoder classifier with optional gating blocks."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .gating import GatingConfig, forward_with_gating, gating_param_count, gating_param_shapes
from .layers import attention_mask_bias, init_tensor, layer_param_count, layer_shapes

PARAMS_HEADER = "# ngt-params 1"


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    hidden: int = 32
    num_layers: int = 4
    heads: int = 4
    intermediate: int = 64
    max_positions: int = 512
    type_vocab: int = 2
    ln_eps: float = 1e-12
    dropout: float = 0.1
    init_std: float = 0.02
    output_units: int = 1
    has_pooler: bool = True

    def __post_init__(self):
        for name in ("vocab_size", "hidden", "num_layers", "heads", "intermediate",
                     "max_positions", "type_vocab", "output_units"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.hidden % self.heads:
            raise ValueError(f"hidden {self.hidden} not divisible by heads {self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.ln_eps <= 0:
            raise ValueError("ln_eps must be positive")

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


def bert_large_cased(output_units: int = 1) -> ModelConfig:
    return ModelConfig(vocab_size=28996, hidden=1024, num_layers=24, heads=16,
                       intermediate=4096, max_positions=512, type_vocab=2,
                       output_units=output_units, has_pooler=True)


def param_shapes(cfg: ModelConfig, gating: GatingConfig | None = None) -> dict[str, tuple]:
    """Every trainable tensor of the model, in a fixed order."""
    h = cfg.hidden
    shapes = {
        "embeddings.word": (cfg.vocab_size, h),
        "embeddings.position": (cfg.max_positions, h),
        "embeddings.segment": (cfg.type_vocab, h),
        "embeddings.ln.gamma": (h,),
        "embeddings.ln.beta": (h,),
    }
    for i in range(cfg.num_layers):
        for suffix, shape in layer_shapes(h, cfg.intermediate).items():
            shapes[f"encoder.layer.{i}.{suffix}"] = shape
    if cfg.has_pooler:
        shapes["pooler.weight"] = (h, h)
        shapes["pooler.bias"] = (h,)
    shapes["head.weight"] = (h, cfg.output_units)
    shapes["head.bias"] = (cfg.output_units,)
    if gating is not None:
        shapes.update(gating_param_shapes(cfg, gating))
    return shapes


def param_count(cfg: ModelConfig, gating: GatingConfig | None = None) -> int:
    h, n = cfg.hidden, cfg.output_units
    count = (cfg.vocab_size + cfg.max_positions + cfg.type_vocab) * h + 2 * h
    count += cfg.num_layers * layer_param_count(h, cfg.intermediate)
    if cfg.has_pooler:
        count += h * h + h
    count += h * n + n
    if gating is not None:
        count += gating_param_count(cfg, gating)
    return count


def init_params(cfg: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Host-model parameters; gating blocks are initialized separately."""
    rng = np.random.default_rng(seed)
    return {name: init_tensor(name, shape, cfg.init_std, rng)
            for name, shape in param_shapes(cfg).items()}


def check_inputs(cfg: ModelConfig, tokens, mask=None, segments=None):
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim == 1:
        tokens = tokens[None, :]
    if tokens.ndim != 2 or tokens.shape[1] == 0:
        raise ValueError(f"tokens must be (batch, seq), got shape {tokens.shape}")
    if tokens.min() < 0 or tokens.max() >= cfg.vocab_size:
        raise ValueError(f"token id outside [0, {cfg.vocab_size})")
    if tokens.shape[1] > cfg.max_positions:
        raise ValueError(f"sequence length {tokens.shape[1]} exceeds {cfg.max_positions} positions")
    mask = np.ones(tokens.shape) if mask is None else np.asarray(mask, dtype=np.float64).reshape(tokens.shape)
    segments = (np.zeros(tokens.shape, dtype=np.int64) if segments is None
                else np.asarray(segments, dtype=np.int64).reshape(tokens.shape))
    if segments.min() < 0 or segments.max() >= cfg.type_vocab:
        raise ValueError(f"segment id outside [0, {cfg.type_vocab})")
    return tokens, mask, segments


def build_logits(g: ad.Graph, params, cfg: ModelConfig, tokens, mask=None, segments=None,
                 train=False, gating: GatingConfig | None = None, rng=None, **gating_kw) -> ad.Node:
    """Record the full forward pass on ``g`` and return the (batch, output_units) logits node."""
    tokens, mask, segments = check_inputs(cfg, tokens, mask, segments)
    gating = gating or GatingConfig.none()
    batch, seq = tokens.shape

    def p(name):
        return g.param(name, params[name])

    x = ad.embed(g, p("embeddings.word"), tokens)
    x = ad.add(g, x, ad.embed(g, p("embeddings.position"), np.arange(seq)))
    x = ad.add(g, x, ad.embed(g, p("embeddings.segment"), segments))
    x = ad.layer_norm(g, x, p("embeddings.ln.gamma"), p("embeddings.ln.beta"), cfg.ln_eps)
    x = ad.dropout(g, x, cfg.dropout, train, rng)
    mask_bias = g.const(attention_mask_bias(mask))
    x = forward_with_gating(g, params, cfg, gating, x, mask_bias, train, rng, **gating_kw)
    cls = ad.reshape(g, ad.slice_axis(g, x, 1, 0, 1), (batch, cfg.hidden))
    if cfg.has_pooler:
        cls = ad.tanh(g, ad.linear(g, cls, p("pooler.weight"), p("pooler.bias")))
    cls = ad.dropout(g, cls, cfg.dropout, train, rng)
    return ad.linear(g, cls, p("head.weight"), p("head.bias"))


def model_forward(params, cfg: ModelConfig, tokens, mask=None, segments=None, train=False,
                  gating: GatingConfig | None = None, rng=None, **gating_kw) -> np.ndarray:
    """Logits as a plain array (no gradients kept)."""
    g = ad.Graph()
    return build_logits(g, params, cfg, tokens, mask, segments, train, gating, rng,
                        **gating_kw).value


def probabilities(logits: np.ndarray) -> np.ndarray:
    """Sigmoid for a single output unit, softmax across units otherwise."""
    from .tensor import sigmoid, softmax

    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape[-1] == 1:
        return sigmoid(logits)[..., 0]
    return softmax(logits, axis=-1)


def save_params(params: dict[str, np.ndarray], path) -> None:
    """Text format: a version header, then one tensor per line.

    Each tensor line is ``name<TAB>d1,d2,...<TAB>v1 v2 ...`` with values in
    row-major order, written with ``repr`` so they round-trip exactly.
    """
    lines = [PARAMS_HEADER]
    for name, value in params.items():
        value = np.asarray(value, dtype=np.float64)
        dims = ",".join(str(d) for d in value.shape)
        lines.append(f"{name}\t{dims}\t{' '.join(map(repr, value.ravel().tolist()))}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_params(path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != PARAMS_HEADER:
            raise ValueError(f"{path}: unsupported parameter file header {header!r}")
        params = {}
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                name, dims, values = line.rstrip("\n").split("\t")
                shape = tuple(int(d) for d in dims.split(",")) if dims else ()
                data = np.array([float(v) for v in values.split()], dtype=np.float64)
                params[name] = data.reshape(shape)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return params
