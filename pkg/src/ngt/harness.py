"""Experiment runner: training loop, repetitions, sweeps and report files.

Output layout under ``out``::

    <variant>/seed<k>/records.jsonl   one JSON object per epoch
    <variant>/seed<k>/params.txt      final parameters (see model.save_params)
    <variant>/seed<k>/run.json        config snapshot, best epoch, wall clock
    <variant>/seed<k>/gates.npz       gate tensors, only with dump_gates
    summary.csv                       dataset,variant,metric,mean,std
    report.txt                        aligned table with the mean row
"""

from __future__ import annotations

import csv
import io
import json
import logging
import statistics
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .config import ExperimentConfig, Settings, build_experiment, dump_settings
from .gating import GatingConfig, GatingVariant, init_gating_params, sweep_positions
from .metrics import (
    Cell, RunRecord, SuiteReport, accuracy, em_grouped, f1_binary, f1_macro, fmt_cell,
    max_choice_select, round2, run_std, summarize_runs,
)
from .model import (
    ModelConfig, build_logits, init_params, load_params, model_forward, param_count,
    param_shapes, probabilities, save_params,
)
from .optim import OptimState, adamw_step, cosine_lr
from .tasks import (
    Example, Vocab, batch_iter, encode_synthetic, gen_gated_copy, gen_majority,
    load_superglue_jsonl, read_superglue_jsonl, stack_batch, synthetic_vocab,
)

log = logging.getLogger(__name__)

GATE_STREAM = 0x6A7E
DROPOUT_STREAM = 0xD409
SUMMARY_HEADER = ["dataset", "variant", "metric", "mean", "std"]
MEAN_ROW = "Mean"


@dataclass
class Data:
    train: list[Example]
    val: list[Example]
    vocab: Vocab


@dataclass
class RunArtifact:
    seed: int
    config_text: str
    record: RunRecord
    lines: list[dict] = field(default_factory=list)
    params: dict[str, np.ndarray] = field(default_factory=dict)
    wall_clock: float = 0.0
    gates: dict[str, np.ndarray] = field(default_factory=dict)

    def records_jsonl(self) -> str:
        return "".join(json.dumps(line) + "\n" for line in self.lines)


# ------------------------------------------------------------------ data


def load_data(settings: Settings) -> Data:
    if settings.task in ("majority", "gated_copy"):
        vocab = synthetic_vocab(settings.task, settings.seq_len, settings.n_symbols)

        def gen(seed, n):
            if settings.task == "majority":
                return gen_majority(seed, n, settings.seq_len)
            return gen_gated_copy(seed, n, settings.seq_len, settings.n_symbols)

        train = encode_synthetic(gen(settings.data_seed, settings.n_train), vocab)
        val = encode_synthetic(gen(settings.data_seed + 1, settings.n_val), vocab)
        return Data(train, val, vocab)
    if not settings.train_file or not settings.val_file:
        raise ValueError(f"task {settings.task!r} needs train_file and val_file")
    rows = read_superglue_jsonl(settings.train_file, settings.task)
    vocab = Vocab.build(texts=[t for a, b, _ in rows for t in (a, b) if t])
    train = load_superglue_jsonl(settings.train_file, settings.task, vocab, settings.max_len)
    val = load_superglue_jsonl(settings.val_file, settings.task, vocab, settings.max_len)
    return Data(train, val, vocab)


def prepare(settings: Settings) -> tuple[ExperimentConfig, Data]:
    """Validate the configuration, then load data and size the model to it."""
    build_experiment(settings, vocab_size=settings.vocab_size or 1 << 20)
    data = load_data(settings)
    vocab_size = settings.vocab_size or len(data.vocab)
    if vocab_size < len(data.vocab):
        raise ValueError(f"vocab_size {vocab_size} smaller than task vocabulary {len(data.vocab)}")
    return build_experiment(settings, vocab_size, len(data.train)), data


# ------------------------------------------------------------------ training


def initial_params(exp: ExperimentConfig, seed: int) -> dict[str, np.ndarray]:
    """Host layers from ``init_from`` or a fresh seeded draw; gating blocks always fresh."""
    cfg = exp.model
    if exp.settings.init_from:
        loaded = load_params(exp.settings.init_from)
        params = {}
        for name, shape in param_shapes(cfg).items():
            if name not in loaded or loaded[name].shape != shape:
                raise ValueError(f"{exp.settings.init_from}: missing or misshapen {name!r}")
            params[name] = loaded[name]
    else:
        params = init_params(cfg, seed)
    if exp.gating.variant is not GatingVariant.NONE:
        params.update(init_gating_params(cfg, exp.gating,
                                         np.random.default_rng([seed, GATE_STREAM])))
    return params


def loss_node(g: ad.Graph, logits: ad.Node, labels, output_units: int) -> ad.Node:
    if output_units == 1:
        return ad.bce_with_logits(g, logits, labels)
    return ad.cross_entropy(g, logits, labels)


def train_step(params, state, exp: ExperimentConfig, batch: Sequence[Example], rng):
    tokens, mask, segments, labels = stack_batch(batch)
    g = ad.Graph()
    logits = build_logits(g, params, exp.model, tokens, mask, segments, train=True,
                          gating=exp.gating, rng=rng)
    loss = loss_node(g, logits, labels, exp.model.output_units)
    grads = ad.backward(g, loss)
    for name, value in params.items():
        if name not in grads:
            grads[name] = np.zeros_like(value)
    params, state = adamw_step(params, grads, state, exp.optim)
    return params, state, float(loss.value)


def predict(params, exp: ExperimentConfig, examples: Sequence[Example], gate_sink=None):
    probs = []
    size = exp.settings.eval_batch_size
    for start in range(0, len(examples), size):
        tokens, mask, segments, _ = stack_batch(examples[start:start + size])
        kw = {} if gate_sink is None else {"gate_sink": gate_sink}
        logits = model_forward(params, exp.model, tokens, mask, segments, train=False,
                               gating=exp.gating, **kw)
        probs.append(probabilities(logits))
    return np.concatenate(probs, axis=0)


def compute_metrics(task, probs: np.ndarray, examples: Sequence[Example]) -> dict[str, float]:
    labels = np.array([ex.label for ex in examples])
    preds = (probs > 0.5).astype(int) if probs.ndim == 1 else probs.argmax(axis=1)
    out = {}
    for metric in task.metrics:
        if metric == "Acc" and task.multiple_choice:
            groups: dict = {}
            for i, ex in enumerate(examples):
                groups.setdefault(ex.group_id, []).append(i)
            hits = [labels[idx[max_choice_select(probs[idx])]] == 1 for idx in groups.values()]
            out[metric] = float(np.mean(hits))
        elif metric == "Acc":
            out[metric] = accuracy(preds, labels)
        elif metric == "F1_macro":
            out[metric] = f1_macro(preds, labels, task.num_classes)
        elif metric in ("F1", "F1_a"):
            out[metric] = f1_binary(preds, labels)
        elif metric == "EM_q":
            out[metric] = em_grouped(preds, labels, [ex.group_id for ex in examples])
        else:
            raise ValueError(f"metric {metric!r} has no evaluation rule for task {task.name}")
    return out


def train_run(exp: ExperimentConfig, data: Data, seed: int, dump_gates: bool = False,
              stop_when=None) -> RunArtifact:
    """Train one seed for ``epochs`` epochs, evaluating after each epoch.

    ``stop_when(metrics)`` returning true ends training early; the learning-rate
    schedule still spans the configured epochs.
    """
    started = time.perf_counter()
    params = initial_params(exp, seed)
    state = OptimState()
    dropout_rng = np.random.default_rng([seed, DROPOUT_STREAM])
    record = RunRecord(seed)
    artifact = RunArtifact(seed, dump_settings(replace(exp.settings, seeds=(seed,))), record)
    epochs = exp.settings.epochs
    for epoch in range(epochs):
        losses = []
        for batch in batch_iter(data.train, exp.settings.batch_size, seed, epoch):
            params, state, loss = train_step(params, state, exp, batch, dropout_rng)
            losses.append(loss)
        sink = [] if dump_gates and epoch == epochs - 1 else None
        metrics = compute_metrics(exp.task, predict(params, exp, data.val, sink), data.val)
        record.epochs.append(metrics)
        line = {"seed": seed, "epoch": epoch + 1, **metrics,
                "lr": cosine_lr(state.t, exp.optim), "loss": statistics.fmean(losses)}
        artifact.lines.append(line)
        log.info("seed %d epoch %d loss %.4f %s", seed, epoch + 1, line["loss"],
                 " ".join(f"{k}={v:.4f}" for k, v in metrics.items()))
        if sink is not None:
            per_batch = max(len(exp.gating.positions), 1)
            for i, (position, gate) in enumerate(sink):
                artifact.gates[f"pos{position}_batch{i // per_batch}"] = gate
        if stop_when is not None and stop_when(metrics):
            break
    artifact.params = params
    artifact.wall_clock = time.perf_counter() - started
    return artifact


def write_artifact(artifact: RunArtifact, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "records.jsonl").write_text(artifact.records_jsonl())
    save_params(artifact.params, directory / "params.txt")
    summary = {
        "seed": artifact.seed,
        "best_epoch": artifact.record.best_epoch + 1 if artifact.record.epochs else None,
        "wall_clock_s": artifact.wall_clock,
        "config": artifact.config_text,
    }
    (directory / "run.json").write_text(json.dumps(summary, indent=2) + "\n")
    if artifact.gates:
        np.savez(directory / "gates.npz", **artifact.gates)
    return directory


def _run_variant(settings: Settings, out, label: str, dump_gates=False):
    exp, data = prepare(settings)
    artifacts = []
    for seed in exp.run_seeds:
        artifact = train_run(exp, data, seed, dump_gates)
        if out is not None:
            write_artifact(artifact, Path(out) / label / f"seed{seed}")
        artifacts.append(artifact)
    return exp, artifacts


def cmd_train(settings: Settings, out=None, dump_gates: bool = False) -> list[RunArtifact]:
    exp, artifacts = _run_variant(settings, out, settings.variant.value, dump_gates)
    if out is not None and all(a.record.epochs for a in artifacts):
        report = summarize_runs([a.record for a in artifacts], exp.task.name, settings.variant.value)
        write_report(report, out)
    return artifacts


def cmd_ablation(settings: Settings, out=None) -> SuiteReport:
    """All three variants on the same task and seeds."""
    report = SuiteReport()
    for variant in GatingVariant:
        exp, artifacts = _run_variant(replace(settings, variant=variant), out, variant.value)
        summarize_runs([a.record for a in artifacts], exp.task.name, variant.value, report)
    if out is not None:
        write_report(report, out)
    return report


def cmd_sweep_positions(settings: Settings, out=None) -> SuiteReport:
    """Neuromodulated gating at the scaled start and end insertion points."""
    start, end = sweep_positions(settings.layers)
    report = SuiteReport()
    for label, position in (("gating-start", start), ("gating-end", end)):
        varied = replace(settings, variant=GatingVariant.NEUROMODULATED, positions=(position,))
        exp, artifacts = _run_variant(varied, out, label)
        summarize_runs([a.record for a in artifacts], exp.task.name, label, report)
    if out is not None:
        write_report(report, out)
    return report


def cmd_paramcount(settings: Settings) -> dict[str, int]:
    """Trainable-parameter totals per variant plus the gating-block delta."""
    counts = {}
    for variant in GatingVariant:
        exp = build_experiment(replace(settings, variant=variant))
        gating = None if variant is GatingVariant.NONE else exp.gating
        counts[variant.value] = param_count(exp.model, gating)
    counts["gating-block"] = (counts[GatingVariant.NEUROMODULATED.value]
                              - counts[GatingVariant.NONE.value])
    return counts


GRADCHECK_MODEL = ModelConfig(vocab_size=11, hidden=8, num_layers=2, heads=2, intermediate=16,
                              max_positions=8, output_units=1)


def gradcheck_instance(variant: GatingVariant, seed: int = 0, cfg: ModelConfig = GRADCHECK_MODEL,
                       gb_depth: int = 1):
    """A seeded 2-layer graph with frozen dropout masks, ready for :func:`ad.grad_check`."""
    gating = (GatingConfig() if variant is GatingVariant.NONE
              else GatingConfig(variant, (1,), gb_depth))
    params = init_params(cfg, seed)
    params.update(init_gating_params(cfg, gating, np.random.default_rng([seed, GATE_STREAM])))
    rng = np.random.default_rng([seed, DROPOUT_STREAM])
    tokens = rng.integers(4, cfg.vocab_size, size=(3, 5))
    tokens[:, 0] = 1
    mask = np.ones(tokens.shape)
    mask[1, 3:] = 0
    labels = np.array([1, 0, 1])
    if cfg.output_units > 1:
        labels = rng.integers(0, cfg.output_units, size=3)
    g = ad.Graph()
    logits = build_logits(g, params, cfg, tokens, mask, train=True, gating=gating, rng=rng)
    return g, loss_node(g, logits, labels, cfg.output_units)


def cmd_gradcheck(tolerance: float = 1e-4, eps: float = 1e-5, seed: int = 0):
    reports = {}
    for variant in GatingVariant:
        g, loss = gradcheck_instance(variant, seed)
        reports[variant.value] = ad.grad_check(g, loss, tolerance, eps, seed=seed)
    return reports


# ------------------------------------------------------------------ reports


def write_summary_csv(report: SuiteReport, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER)
    for variant, per_dataset in report.cells.items():
        for dataset, metrics in per_dataset.items():
            for metric, cell in metrics.items():
                writer.writerow([dataset, variant, metric, f"{cell.mean:.2f}", f"{cell.std:.2f}"])
    for variant in report.variants:
        row = report.mean_row(variant)
        writer.writerow([MEAN_ROW, variant, "mean", f"{row.mean:.2f}", f"{row.std:.2f}"])


def render_table(report: SuiteReport) -> str:
    variants, datasets = report.variants, report.datasets
    rows = [["Dataset", "Metrics", *variants]]
    for dataset in datasets:
        metrics = next(report.cells[v][dataset] for v in variants if dataset in report.cells[v])
        row = [dataset, "/".join(metrics)]
        for v in variants:
            cells = report.cells[v].get(dataset, {})
            row.append("/".join(fmt_cell(cells[m]) for m in metrics) if cells else "-")
        rows.append(row)
    rows.append([MEAN_ROW, "", *(fmt_cell(report.mean_row(v)) for v in variants)])
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def write_report(report: SuiteReport, out) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w", newline="") as fh:
        write_summary_csv(report, fh)
    (out / "report.txt").write_text(render_table(report))


def read_report_csv(path) -> SuiteReport:
    """Load either a summary CSV or a long per-run CSV into a :class:`SuiteReport`.

    Summary form: ``dataset,variant,metric,mean,std`` with percentages
    (``Mean`` rows are ignored and recomputed). Per-run form:
    ``dataset,metric,run,value`` plus an optional ``variant`` column, with
    values as fractions in [0, 1].
    """
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
        fields = set(rows[0]) if rows else set()
    report = SuiteReport()
    if {"dataset", "variant", "metric", "mean", "std"} <= fields:
        for row in rows:
            if row["dataset"] == MEAN_ROW:
                continue
            report.add(row["variant"], row["dataset"], row["metric"],
                       Cell(float(row["mean"]), float(row["std"])))
        return report
    if {"dataset", "metric", "run", "value"} <= fields:
        grouped: dict = {}
        for lineno, row in enumerate(rows, start=2):
            value = float(row["value"])
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{path}:{lineno}: per-run values must be fractions in [0, 1]")
            key = (row.get("variant") or "all", row["dataset"], row["metric"])
            grouped.setdefault(key, []).append(100.0 * value)
        for (variant, dataset, metric), values in grouped.items():
            report.add(variant, dataset, metric,
                       Cell(round2(statistics.fmean(values)), round2(run_std(values))))
        return report
    raise ValueError(f"{path}: unrecognised header {sorted(fields)}")


def cmd_aggregate(path, out=None) -> SuiteReport:
    report = read_report_csv(path)
    if not report.cells:
        raise ValueError(f"{path}: no rows to aggregate")
    if out is not None:
        write_report(report, out)
    return report


def summary_csv_text(report: SuiteReport) -> str:
    buf = io.StringIO()
    write_summary_csv(report, buf)
    return buf.getvalue()
