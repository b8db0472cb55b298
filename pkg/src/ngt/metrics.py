"""Evaluation metrics and result aggregation.

Metric functions return fractions in [0, 1]. Reported numbers are
percentages rounded half away from zero to two decimals; the mean row is
computed from the already-rounded cells.
"""

from __future__ import annotations

import math
import statistics
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Mapping, Sequence

import numpy as np

METRIC_NAMES = ("Acc", "F1", "F1_macro", "F1_token", "F1_a", "EM", "EM_q")


def round2(x: float) -> float:
    """Round half away from zero to two decimals, using the shortest decimal repr of ``x``."""
    return float(Decimal(repr(float(x))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def _pair(preds, labels):
    preds, labels = np.asarray(preds), np.asarray(labels)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise ValueError(f"preds {preds.shape} and labels {labels.shape} must be equal-length 1-D")
    if preds.size == 0:
        raise ValueError("empty predictions")
    return preds, labels


def accuracy(preds, labels) -> float:
    preds, labels = _pair(preds, labels)
    return float(np.mean(preds == labels))


def _f1_from_counts(tp: int, fp: int, fn: int) -> float:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def f1_binary(preds, labels, positive: int = 1) -> float:
    preds, labels = _pair(preds, labels)
    tp = int(np.sum((preds == positive) & (labels == positive)))
    fp = int(np.sum((preds == positive) & (labels != positive)))
    fn = int(np.sum((preds != positive) & (labels == positive)))
    return _f1_from_counts(tp, fp, fn)


def f1_macro(preds, labels, num_classes: int, absent: str = "exclude") -> float:
    """Unweighted mean of one-vs-rest F1 per class.

    Classes missing from ``labels`` are left out of the average by default;
    ``absent="zero"`` keeps them, each scoring 0.
    """
    preds, labels = _pair(preds, labels)
    if absent not in ("exclude", "zero"):
        raise ValueError(f"absent must be 'exclude' or 'zero', got {absent!r}")
    classes = range(num_classes)
    if absent == "exclude":
        classes = [c for c in classes if np.any(labels == c)]
    return float(np.mean([f1_binary(preds, labels, positive=c) for c in classes]))


def f1_token(pred_tokens: Sequence[str], gold_tokens: Sequence[str]) -> float:
    """Bag-of-tokens overlap F1."""
    common = Counter(pred_tokens) & Counter(gold_tokens)
    overlap = sum(common.values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def max_choice_select(probs: Sequence[float]) -> int:
    """Index of the most probable option; the lowest index wins ties."""
    if len(probs) == 0:
        raise ValueError("no options to choose from")
    return int(np.argmax(np.asarray(probs, dtype=float)))


def em_grouped(preds, labels, group_ids) -> float:
    """Fraction of groups whose every prediction is correct."""
    preds, labels = _pair(preds, labels)
    groups: dict = {}
    for p, y, gid in zip(preds, labels, group_ids):
        groups[gid] = groups.get(gid, True) and bool(p == y)
    return sum(groups.values()) / len(groups)


def best_epoch(epochs: Sequence[Mapping[str, float]]) -> int:
    """Epoch whose metrics, averaged, score highest; the earliest wins ties."""
    if not epochs:
        raise ValueError("no epochs recorded")
    scores = [statistics.fmean(m.values()) for m in epochs]
    return int(np.argmax(scores))


def dataset_mean(values: Sequence[float]) -> float:
    """Average several metrics of one dataset into one number."""
    if not values:
        raise ValueError("no metric values")
    return statistics.fmean(values)


def suite_mean_std(means: Sequence[float], stds: Sequence[float]) -> tuple[float, float]:
    """Arithmetic mean of dataset means and root-mean-square of dataset stds."""
    if not means or len(means) != len(stds):
        raise ValueError("need one std per dataset mean, and at least one dataset")
    mean = statistics.fmean(means)
    std = math.sqrt(statistics.fmean(s * s for s in stds))
    return mean, std


def run_std(values: Sequence[float]) -> float:
    """Sample standard deviation across runs; 0 for a single run."""
    return statistics.stdev(values) if len(values) > 1 else 0.0


# ------------------------------------------------------------------ reports


@dataclass
class RunRecord:
    run_seed: int
    epochs: list[dict[str, float]] = field(default_factory=list)

    @property
    def best_epoch(self) -> int:
        return best_epoch(self.epochs)

    @property
    def best(self) -> dict[str, float]:
        return self.epochs[self.best_epoch]


@dataclass(frozen=True)
class Cell:
    """Mean and std of one metric across runs, in rounded percentage points."""

    mean: float
    std: float


@dataclass
class SuiteReport:
    """Per-variant, per-dataset metric cells plus the suite mean row."""

    cells: dict[str, dict[str, dict[str, Cell]]] = field(default_factory=dict)

    def add(self, variant: str, dataset: str, metric: str, cell: Cell) -> None:
        self.cells.setdefault(variant, {}).setdefault(dataset, {})[metric] = cell

    @property
    def variants(self) -> list[str]:
        return list(self.cells)

    @property
    def datasets(self) -> list[str]:
        seen: dict[str, None] = {}
        for per_dataset in self.cells.values():
            seen.update(dict.fromkeys(per_dataset))
        return list(seen)

    def dataset_summary(self, variant: str, dataset: str) -> Cell:
        """Metric-averaged mean and std of one dataset, not rounded."""
        metrics = self.cells[variant][dataset].values()
        return Cell(dataset_mean([c.mean for c in metrics]),
                    dataset_mean([c.std for c in metrics]))

    def mean_row(self, variant: str) -> Cell:
        # inputs are the rounded cells; only the final row is rounded again
        summaries = [self.dataset_summary(variant, d) for d in self.cells[variant]]
        mean, std = suite_mean_std([s.mean for s in summaries], [s.std for s in summaries])
        return Cell(round2(mean), round2(std))


def summarize_runs(records: Sequence[RunRecord], dataset: str, variant: str,
                   report: SuiteReport | None = None) -> SuiteReport:
    """Fold per-run best epochs into rounded percentage cells."""
    report = report or SuiteReport()
    bests = [r.best for r in records]
    for metric in bests[0]:
        values = [100.0 * b[metric] for b in bests]
        report.add(variant, dataset, metric,
                   Cell(round2(statistics.fmean(values)), round2(run_std(values))))
    return report


def fmt_cell(cell: Cell) -> str:
    return f"{cell.mean:.2f}±{cell.std:.2f}"
