"""Tokenization, datasets and batching.

Text is split on whitespace and mapped through a small :class:`Vocab`;
sequences are ``[CLS] a [SEP]`` or ``[CLS] a [SEP] b [SEP]``. When an input
is too long, content tokens are dropped from the start until it fits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

PAD, CLS, SEP, UNK = "[PAD]", "[CLS]", "[SEP]", "[UNK]"
RESERVED = (PAD, CLS, SEP, UNK)

CB_LABELS = {"entailment": 0, "contradiction": 1, "neutral": 2}
RTE_LABELS = {"entailment": 1, "not_entailment": 0}


@dataclass(frozen=True)
class Example:
    tokens: tuple[int, ...]
    segment_ids: tuple[int, ...]
    label: int
    group_id: int | None = None
    choice_id: int | None = None

    def __post_init__(self):
        if len(self.tokens) != len(self.segment_ids):
            raise ValueError("tokens and segment_ids differ in length")

    @property
    def mask(self) -> tuple[int, ...]:
        """1 for real tokens, 0 for ``[PAD]`` (id 0)."""
        return tuple(int(t != 0) for t in self.tokens)


@dataclass(frozen=True)
class TaskSpec:
    name: str
    num_classes: int
    output_units: int
    metrics: tuple[str, ...] = ("Acc",)
    multiple_choice: bool = False

    def __post_init__(self):
        if self.output_units not in (1, self.num_classes):
            raise ValueError(f"{self.name}: output_units must be 1 or {self.num_classes}")
        if self.output_units == 1 and self.num_classes != 2 and not self.multiple_choice:
            raise ValueError(f"{self.name}: one output unit needs a binary or multiple-choice task")

    @property
    def loss(self) -> str:
        return "bce" if self.output_units == 1 else "cce"


TASKS = {
    "majority": TaskSpec("majority", 2, 1, ("Acc",)),
    "boolq": TaskSpec("boolq", 2, 1, ("Acc",)),
    "cb": TaskSpec("cb", 3, 3, ("F1_macro", "Acc")),
    "rte": TaskSpec("rte", 2, 1, ("Acc",)),
}


def task_spec(name: str, n_symbols: int = 4) -> TaskSpec:
    if name == "gated_copy":
        # one class per symbol, so the head width follows n_symbols
        return TaskSpec("gated_copy", n_symbols, n_symbols, ("Acc",))
    try:
        return TASKS[name]
    except KeyError:
        known = sorted(TASKS) + ["gated_copy"]
        raise ValueError(f"unknown task {name!r}; choose from {known}") from None


@dataclass
class Vocab:
    """Token/id map. ``[PAD]`` is id 0; unknown words map to ``[UNK]``."""

    itos: list[str] = field(default_factory=lambda: list(RESERVED))

    def __post_init__(self):
        if tuple(self.itos[: len(RESERVED)]) != RESERVED:
            raise ValueError(f"vocab must start with {RESERVED}")
        self.stoi = {tok: i for i, tok in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocab")

    @classmethod
    def build(cls, texts: Sequence[str] = (), words: Sequence[str] = ()) -> "Vocab":
        itos = list(RESERVED)
        seen = set(itos)
        for word in list(words) + [w for text in texts for w in text.split()]:
            if word not in seen:
                seen.add(word)
                itos.append(word)
        return cls(itos)

    def __len__(self) -> int:
        return len(self.itos)

    def id(self, token: str) -> int:
        return self.stoi.get(token, self.stoi[UNK])

    @property
    def pad_id(self) -> int:
        return self.stoi[PAD]

    @property
    def cls_id(self) -> int:
        return self.stoi[CLS]

    @property
    def sep_id(self) -> int:
        return self.stoi[SEP]


def encode(text_a: str, vocab: Vocab, max_len: int, text_b: str | None = None,
           label: int = 0, group_id: int | None = None,
           choice_id: int | None = None) -> Example:
    """Tokenize, truncate from the start, and right-pad to exactly ``max_len``.

    Special tokens always survive truncation; content is dropped from the
    front of the sequence (segment ``a`` first) until everything fits.
    """
    if max_len < 3:
        raise ValueError("max_len must be >= 3")
    a = [vocab.id(t) for t in text_a.split()]
    b = None if text_b is None else [vocab.id(t) for t in text_b.split()]
    specials = 2 if b is None else 3
    budget = max_len - specials
    if b is None:
        a = a[max(len(a) - budget, 0):]
    else:
        content = a + b
        drop = max(len(content) - budget, 0)
        drop_a = min(drop, len(a))
        a = a[drop_a:]
        b = b[drop - drop_a:]
    tokens = [vocab.cls_id] + a + [vocab.sep_id]
    segments = [0] * len(tokens)
    if b is not None:
        tokens += b + [vocab.sep_id]
        segments += [1] * (len(b) + 1)
    pad = max_len - len(tokens)
    tokens += [vocab.pad_id] * pad
    segments += [0] * pad
    return Example(tuple(tokens), tuple(segments), int(label), group_id, choice_id)


def stack_batch(examples: Sequence[Example]):
    """(tokens, mask, segments, labels) arrays; shorter examples are right-padded."""
    width = max(len(ex.tokens) for ex in examples)
    n = len(examples)
    tokens = np.zeros((n, width), dtype=np.int64)
    segments = np.zeros((n, width), dtype=np.int64)
    for i, ex in enumerate(examples):
        tokens[i, :len(ex.tokens)] = ex.tokens
        segments[i, :len(ex.tokens)] = ex.segment_ids
    mask = (tokens != 0).astype(np.float64)
    labels = np.array([ex.label for ex in examples], dtype=np.int64)
    return tokens, mask, segments, labels


# ------------------------------------------------------------------ SuperGLUE

_SCHEMAS = {
    "boolq": ("passage", "question"),
    "cb": ("premise", "hypothesis"),
    "rte": ("premise", "hypothesis"),
}


def _map_label(schema: str, raw, lineno: int) -> int:
    if isinstance(raw, bool):
        return int(raw)
    if schema == "cb" and raw in CB_LABELS:
        return CB_LABELS[raw]
    if schema == "rte" and raw in RTE_LABELS:
        return RTE_LABELS[raw]
    if isinstance(raw, int) and not isinstance(raw, bool) and raw in range(task_spec(schema).num_classes):
        return raw
    raise ValueError(f"line {lineno}: unknown {schema} label {raw!r}")


def read_superglue_jsonl(path, schema: str) -> list[tuple[str, str, int]]:
    """(first segment, second segment, label) triples from an official JSONL file."""
    if schema not in _SCHEMAS:
        raise ValueError(f"unsupported schema {schema!r}; supported: {sorted(_SCHEMAS)}")
    first, second = _SCHEMAS[schema]
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                a, b, raw = obj[first], obj[second], obj["label"]
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno}: malformed JSON ({exc.msg})") from None
            except (KeyError, TypeError) as exc:
                raise ValueError(f"{path}: line {lineno}: missing field {exc}") from None
            rows.append((a, b, _map_label(schema, raw, lineno)))
    return rows


def load_superglue_jsonl(path, schema: str, vocab: Vocab, max_len: int) -> list[Example]:
    return [encode(a, vocab, max_len, text_b=b, label=y)
            for a, b, y in read_superglue_jsonl(path, schema)]


# ------------------------------------------------------------------ synthetic

MAJORITY_WORDS = ("A", "B")


def majority_label(symbols: Sequence[str]) -> int:
    return int(sum(s == "A" for s in symbols) > sum(s == "B" for s in symbols))


def gen_majority(seed: int, n_examples: int, seq_len: int) -> list[tuple[list[str], int]]:
    """Balanced A/B sequences labelled 1 when ``A`` is the majority symbol."""
    if seq_len % 2 == 0 or seq_len < 1:
        raise ValueError("seq_len must be odd so there are no ties")
    rng = np.random.default_rng(seed)
    data = []
    for i in range(n_examples):
        label = i % 2
        n_a = int(rng.integers(seq_len // 2 + 1, seq_len + 1))
        if not label:
            n_a = seq_len - n_a
        symbols = np.array(["A"] * n_a + ["B"] * (seq_len - n_a))
        rng.shuffle(symbols)
        data.append((symbols.tolist(), label))
    order = rng.permutation(n_examples)
    return [data[i] for i in order]


def gen_gated_copy(seed: int, n_examples: int, seq_len: int,
                   n_symbols: int) -> list[tuple[list[str], int]]:
    """A pointer token ``P<p>`` then ``seq_len - 1`` symbols; the label is symbol ``p``."""
    if seq_len < 3:
        raise ValueError("seq_len must be >= 3")
    if n_symbols < 2:
        raise ValueError("n_symbols must be >= 2")
    rng = np.random.default_rng(seed)
    data = []
    for _ in range(n_examples):
        p = int(rng.integers(1, seq_len))
        symbols = rng.integers(0, n_symbols, size=seq_len - 1)
        data.append(([f"P{p}"] + [f"S{s}" for s in symbols], int(symbols[p - 1])))
    return data


def synthetic_vocab(task: str, seq_len: int, n_symbols: int = 4) -> Vocab:
    if task == "majority":
        return Vocab.build(words=MAJORITY_WORDS)
    if task == "gated_copy":
        words = [f"P{p}" for p in range(1, seq_len)] + [f"S{s}" for s in range(n_symbols)]
        return Vocab.build(words=words)
    raise ValueError(f"{task!r} is not a synthetic task")


def encode_synthetic(rows, vocab: Vocab) -> list[Example]:
    return [encode(" ".join(tokens), vocab, len(tokens) + 2, label=y) for tokens, y in rows]


def write_jsonl(examples: Sequence[Example], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps({"tokens": list(ex.tokens), "segments": list(ex.segment_ids),
                                 "label": ex.label, "group": ex.group_id,
                                 "choice": ex.choice_id}) + "\n")


def read_jsonl(path) -> list[Example]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                tokens = tuple(obj["tokens"])
                segments = tuple(obj.get("segments") or [0] * len(tokens))
                out.append(Example(tokens, segments, int(obj["label"]),
                                   obj.get("group"), obj.get("choice")))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    return out


# ------------------------------------------------------------------ batching


def scoring_units(dataset: Sequence[Example]) -> list[list[int]]:
    """Indices grouped so all options of one multiple-choice question stay together."""
    units: list[list[int]] = []
    where: dict[int, int] = {}
    for i, ex in enumerate(dataset):
        if ex.group_id is None:
            units.append([i])
        elif ex.group_id in where:
            units[where[ex.group_id]].append(i)
        else:
            where[ex.group_id] = len(units)
            units.append([i])
    return units


def epoch_rng(run_seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng([run_seed, epoch, 0x5EED])


def batch_iter(dataset: Sequence[Example], batch_size: int = 8, run_seed: int = 0,
               epoch: int = 0, shuffle: bool = True) -> Iterator[list[Example]]:
    """Yield batches of a uniformly shuffled epoch; the last batch may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    units = scoring_units(dataset)
    if shuffle:
        units = [units[i] for i in epoch_rng(run_seed, epoch).permutation(len(units))]
    order = [i for unit in units for i in unit]
    for start in range(0, len(order), batch_size):
        yield [dataset[i] for i in order[start:start + batch_size]]


def steps_per_epoch(n_examples: int, batch_size: int) -> int:
    return math.ceil(n_examples / batch_size)
