"""Gating blocks and the three insertion variants.

A gating block is a short stack of encoder layers shaped like the host's.
With neuromodulated gating its output goes through a sigmoid and multiplies
the activations it was computed from; the product replaces the output of
layer ``k`` as input to layer ``k + 1``. With non-neuromodulated gating the
block output is passed on directly, so the block behaves like extra layers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import tensor as T
from .layers import encoder_layer, init_tensor, layer_param_count, layer_shapes


class GatingVariant(str, enum.Enum):
    NONE = "no-gating-block"
    NEUROMODULATED = "neuromodulated-gating"
    NON_NEUROMODULATED = "non-neuromodulated-gating"

    @classmethod
    def parse(cls, text: str) -> "GatingVariant":
        key = text.strip().lower().replace("_", "-")
        aliases = {"none": cls.NONE, "no-gating": cls.NONE, "neuromodulated": cls.NEUROMODULATED,
                   "non-neuromodulated": cls.NON_NEUROMODULATED}
        if key in aliases:
            return aliases[key]
        return cls(key)


@dataclass(frozen=True)
class GatingConfig:
    """Where gating blocks go and what they do.

    ``positions`` are 1-based layer indices; a block at ``k`` reads the output
    of layer ``k``. ``nonneuro_sigmoid`` restores the literal reading of the
    non-neuromodulated baseline in which the block keeps its final sigmoid.
    """

    variant: GatingVariant = GatingVariant.NONE
    positions: tuple[int, ...] = field(default=())
    gb_depth: int = 3
    nonneuro_sigmoid: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variant", GatingVariant(self.variant))
        object.__setattr__(self, "positions", tuple(int(p) for p in self.positions))
        if self.gb_depth < 1:
            raise ValueError("gb_depth must be >= 1")
        if (self.variant is GatingVariant.NONE) != (not self.positions):
            raise ValueError("positions must be empty exactly when the variant is no-gating-block")
        if any(b <= a for a, b in zip(self.positions, self.positions[1:])):
            raise ValueError(f"positions must be strictly increasing, got {self.positions}")

    @classmethod
    def none(cls) -> "GatingConfig":
        return cls()

    def validate(self, num_layers: int) -> None:
        for k in self.positions:
            if not 1 <= k <= num_layers:
                raise ValueError(f"gating position {k} outside layers 1..{num_layers}")

    @property
    def block_count(self) -> int:
        return len(self.positions)


def block_prefix(position: int, depth_index: int) -> str:
    return f"gating.{position}.layer.{depth_index}."


def gating_param_shapes(cfg, gating: GatingConfig) -> dict[str, tuple[int, ...]]:
    shapes = {}
    for k in gating.positions:
        for j in range(gating.gb_depth):
            for suffix, shape in layer_shapes(cfg.hidden, cfg.intermediate).items():
                shapes[block_prefix(k, j) + suffix] = shape
    return shapes


def gating_param_count(cfg, gating: GatingConfig) -> int:
    return gating.block_count * gating.gb_depth * layer_param_count(cfg.hidden, cfg.intermediate)


def init_gating_params(cfg, gating: GatingConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Fresh gating-block parameters, drawn like host layers (N(0, init_std))."""
    return {name: init_tensor(name, shape, cfg.init_std, rng)
            for name, shape in gating_param_shapes(cfg, gating).items()}


def _block_stack(g, params, cfg, position, depth, x, mask_bias, train, rng):
    h = x
    for j in range(depth):
        h = encoder_layer(g, params, block_prefix(position, j), h, mask_bias, cfg, train, rng)
    return h


def gating_block_forward(g, params, cfg, position, depth, x, mask_bias, train=False, rng=None):
    """Gate values in (0, 1) with exactly the shape of ``x``."""
    if x.shape[-1] != cfg.hidden:
        raise T.ShapeError(f"gating block expects hidden size {cfg.hidden}, got {x.shape}")
    h = _block_stack(g, params, cfg, position, depth, x, mask_bias, train, rng)
    return ad.sigmoid(g, h)


def apply_gate(g, x, gate):
    """Multiply activations by their gate values elementwise."""
    return ad.hadamard(g, gate, x)


def forward_with_gating(g, params, cfg, gating: GatingConfig, x0, mask_bias, train=False,
                        rng=None, gate_override=None, gate_sink=None, probe=None):
    """Run the host stack with gating blocks inserted after ``gating.positions``.

    ``gate_override`` (scalar or array) replaces the computed gate values;
    ``gate_sink``, if a list, receives ``(position, gate_value)`` pairs.
    """
    gating.validate(cfg.num_layers)
    blocks = set(gating.positions)
    x = x0
    for i in range(cfg.num_layers):
        x = encoder_layer(g, params, f"encoder.layer.{i}.", x, mask_bias, cfg, train, rng, probe)
        k = i + 1
        if k not in blocks:
            continue
        if gating.variant is GatingVariant.NEUROMODULATED:
            if gate_override is None:
                gate = gating_block_forward(g, params, cfg, k, gating.gb_depth, x, mask_bias,
                                            train, rng)
            else:
                gate = g.const(np.broadcast_to(np.asarray(gate_override, dtype=float), x.shape))
            if gate_sink is not None:
                gate_sink.append((k, gate.value))
            x = apply_gate(g, x, gate)
        else:
            x = _block_stack(g, params, cfg, k, gating.gb_depth, x, mask_bias, train, rng)
            if gating.nonneuro_sigmoid:
                x = ad.sigmoid(g, x)
    return x


def sweep_positions(num_layers: int) -> tuple[int, int]:
    """Start/end insertion points scaled from layers 3 and 21 of a 24-layer stack."""
    def scaled(k):
        pos = int(np.floor(k * num_layers / 24 + 0.5))
        return min(max(pos, 1), max(num_layers - 1, 1))
    return scaled(3), scaled(21)
