"""AdamW with decoupled weight decay and a cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class OptimConfig:
    lr0: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    eps: float = 1e-8
    total_steps: int = 1

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")


@dataclass
class OptimState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def cosine_lr(step: int, cfg: OptimConfig) -> float:
    """lr0 decayed along a half cosine to exactly zero at ``total_steps``."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if step >= cfg.total_steps:
        return 0.0
    return cfg.lr0 * 0.5 * (1.0 + math.cos(math.pi * step / cfg.total_steps))


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
               state: OptimState, cfg: OptimConfig, lr: float | None = None):
    """One bias-corrected Adam update with decay applied to every parameter.

    ``w <- w - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * w)``.
    The learning rate defaults to the cosine schedule at the pre-update step.
    Returns new ``(params, state)``; the inputs are left untouched.
    """
    if set(grads) != set(params):
        missing = sorted(set(params) - set(grads))
        extra = sorted(set(grads) - set(params))
        raise ValueError(f"gradients do not cover the parameters (missing {missing}, extra {extra})")
    if lr is None:
        lr = cosine_lr(state.t, cfg)
    t = state.t + 1
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for name, w in params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {w.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1 - cfg.beta1) * g if m is None else cfg.beta1 * m + (1 - cfg.beta1) * g
        v = (1 - cfg.beta2) * g * g if v is None else cfg.beta2 * v + (1 - cfg.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + cfg.eps) + cfg.weight_decay * w
        new_params[name] = w - lr * update
        new_m[name], new_v[name] = m, v
    return new_params, OptimState(new_m, new_v, t)
