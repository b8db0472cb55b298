"""Experiment configuration: flat ``key = value`` files layered over a profile.

Lines starting with ``#`` are comments. Unknown keys are an error. Keys and
their defaults (toy profile) are listed in :data:`SCHEMA`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .gating import GatingConfig, GatingVariant, sweep_positions
from .model import ModelConfig
from .optim import OptimConfig
from .tasks import TaskSpec, steps_per_epoch, synthetic_vocab, task_spec


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.replace(" ", "").split(",") if p)


def _opt_path(text: str):
    return text.strip() or None


# key -> parser; every key is also an attribute of Settings
SCHEMA = {
    "profile": str,
    "task": str,
    "train_file": _opt_path,
    "val_file": _opt_path,
    "n_train": int,
    "n_val": int,
    "seq_len": int,
    "n_symbols": int,
    "max_len": int,
    "data_seed": int,
    "vocab_size": int,
    "output_units": int,
    "hidden": int,
    "layers": int,
    "heads": int,
    "intermediate": int,
    "max_positions": int,
    "type_vocab": int,
    "dropout": float,
    "init_std": float,
    "ln_eps": float,
    "pooler": _bool,
    "variant": GatingVariant.parse,
    "positions": _ints,
    "gb_depth": int,
    "nonneuro_sigmoid": _bool,
    "epochs": int,
    "batch_size": int,
    "eval_batch_size": int,
    "lr0": float,
    "beta1": float,
    "beta2": float,
    "weight_decay": float,
    "adam_eps": float,
    "total_steps": int,
    "seeds": _ints,
    "init_from": _opt_path,
}


@dataclass(frozen=True)
class Settings:
    """Raw, validated key/value settings (toy-profile defaults)."""

    profile: str = "toy"
    task: str = "majority"
    train_file: str | None = None
    val_file: str | None = None
    n_train: int = 2000
    n_val: int = 500
    seq_len: int = 15
    n_symbols: int = 4
    max_len: int = 32
    data_seed: int = 1234
    vocab_size: int = 0  # 0: size of the task vocabulary
    output_units: int = 0  # 0: taken from the task
    hidden: int = 32
    layers: int = 4
    heads: int = 4
    intermediate: int = 64
    max_positions: int = 32
    type_vocab: int = 2
    dropout: float = 0.1
    init_std: float = 0.02
    ln_eps: float = 1e-12
    pooler: bool = True
    variant: GatingVariant = GatingVariant.NEUROMODULATED
    positions: tuple[int, ...] = ()  # empty: the end position for this depth
    gb_depth: int = 1
    nonneuro_sigmoid: bool = False
    epochs: int = 20
    batch_size: int = 8
    eval_batch_size: int = 64
    lr0: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    adam_eps: float = 1e-8
    total_steps: int = 0  # 0: ceil(n_train / batch_size) * epochs
    seeds: tuple[int, ...] = (0, 1, 2)
    init_from: str | None = None


PROFILES = {
    "toy": {},
    "bert-large-cased": dict(
        vocab_size=28996, hidden=1024, layers=24, heads=16, intermediate=4096,
        max_positions=512, max_len=512, gb_depth=3, epochs=10, lr0=1e-5,
    ),
}


def parse_config_text(text: str, origin: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{origin}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ValueError(f"{origin}:{lineno}: unknown key {key!r}")
        try:
            values[key] = SCHEMA[key](value)
        except ValueError as exc:
            raise ValueError(f"{origin}:{lineno}: bad value for {key}: {exc}") from None
    return values


def make_settings(values: dict | None = None) -> Settings:
    values = dict(values or {})
    profile = values.get("profile", "toy")
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    unknown = set(values) - set(SCHEMA)
    if unknown:
        raise ValueError(f"unknown keys {sorted(unknown)}")
    return replace(Settings(), **{**PROFILES[profile], **values})


def load_settings(path) -> Settings:
    path = Path(path)
    return make_settings(parse_config_text(path.read_text(), str(path)))


def dump_settings(settings: Settings) -> str:
    lines = []
    for key in SCHEMA:
        value = getattr(settings, key)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, GatingVariant):
            value = value.value
        elif value is None:
            value = ""
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ExperimentConfig:
    settings: Settings
    task: TaskSpec
    model: ModelConfig
    gating: GatingConfig
    optim: OptimConfig
    run_seeds: tuple[int, ...] = field(default=(0, 1, 2))


def default_positions(settings: Settings) -> tuple[int, ...]:
    return (sweep_positions(settings.layers)[1],)


def build_experiment(settings: Settings, vocab_size: int | None = None,
                     n_train: int | None = None) -> ExperimentConfig:
    """Resolve settings into component configs and check them for consistency."""
    task = task_spec(settings.task, settings.n_symbols)
    units = settings.output_units or task.output_units
    if units != task.output_units:
        if task.loss == "cce" and units == 1:
            raise ValueError(f"task {task.name} uses categorical cross-entropy; output_units 1 is invalid")
        if task.loss == "bce" and units != 1:
            raise ValueError(f"task {task.name} uses binary cross-entropy; it needs output_units 1")
    if vocab_size is None:
        if settings.vocab_size:
            vocab_size = settings.vocab_size
        elif settings.task in ("majority", "gated_copy"):
            vocab_size = len(synthetic_vocab(settings.task, settings.seq_len, settings.n_symbols))
        else:
            raise ValueError("vocab_size must be set for file-backed tasks before data is loaded")
    model = ModelConfig(
        vocab_size=vocab_size, hidden=settings.hidden, num_layers=settings.layers,
        heads=settings.heads, intermediate=settings.intermediate,
        max_positions=settings.max_positions, type_vocab=settings.type_vocab,
        ln_eps=settings.ln_eps, dropout=settings.dropout, init_std=settings.init_std,
        output_units=units, has_pooler=settings.pooler,
    )
    if settings.variant is GatingVariant.NONE:
        positions: tuple[int, ...] = ()
    else:
        positions = settings.positions or default_positions(settings)
    gating = GatingConfig(settings.variant, positions, settings.gb_depth, settings.nonneuro_sigmoid)
    gating.validate(model.num_layers)
    if settings.batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if settings.task in ("majority", "gated_copy") and settings.seq_len + 2 > model.max_positions:
        raise ValueError(f"seq_len {settings.seq_len} + 2 special tokens exceeds max_positions")
    if settings.max_len > model.max_positions:
        raise ValueError(f"max_len {settings.max_len} exceeds max_positions {model.max_positions}")
    n = settings.n_train if n_train is None else n_train
    total = settings.total_steps or max(steps_per_epoch(n, settings.batch_size) * settings.epochs, 1)
    optim = OptimConfig(lr0=settings.lr0, beta1=settings.beta1, beta2=settings.beta2,
                        weight_decay=settings.weight_decay, eps=settings.adam_eps,
                        total_steps=total)
    if not settings.seeds:
        raise ValueError("at least one run seed is required")
    return ExperimentConfig(settings, task, model, gating, optim, settings.seeds)
