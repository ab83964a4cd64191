"""Training loop, depth-stratified evaluation, shuffled-context OOD protocol.

The protocol: mini-batch Adam on binary cross entropy; the example order is
reshuffled every epoch and every example's context sentences are reshuffled
for every mini-batch, both from seeds derived off the run seed, so a run is
a pure function of (config, dataset, embedding table).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from . import model as mdl
from .datagen import DatasetSplit
from .embeddings import EmbeddingTable
from .logic import shuffle_sentences
from .nn import AdamState, NonFiniteLoss, adam_step
from .prng import Stream, derive_seed


@dataclass(frozen=True, slots=True)
class TrainConfig:
    learning_rate: float = 1e-2
    batch_size: int = 32
    epochs: int = 30
    max_iterations: int = 4  # reasoning steps per question
    hidden_size: int = 64
    seed: int = 0
    variant: str = "gate"
    shuffle_rules_each_batch: bool = True
    embed_dim: int = 100
    attention_tanh: bool = True
    ga_combine: str = "scan"

    def model_config(self) -> mdl.ModelConfig:
        return mdl.ModelConfig(
            variant=self.variant,
            hidden_size=self.hidden_size,
            embed_dim=self.embed_dim,
            attention_size=self.hidden_size,
            max_iterations=self.max_iterations,
            attention_tanh=self.attention_tanh,
            ga_combine=self.ga_combine,
            seed=self.seed,
        )


@dataclass(frozen=True, slots=True)
class EpochStats:
    epoch: int
    train_loss: float
    dev_accuracy: float | None


@dataclass(frozen=True, slots=True)
class Cell:
    n_correct: int
    n_total: int

    @property
    def accuracy(self) -> float:
        return self.n_correct / self.n_total if self.n_total else 0.0


@dataclass(frozen=True, slots=True)
class Metrics:
    overall: Cell
    per_depth: dict[int, Cell]


@dataclass(frozen=True, slots=True)
class OodReport:
    original: Metrics
    shuffled: Metrics
    delta_overall: float
    delta_per_depth: dict[int, float]


def _predictor(model, table: EmbeddingTable):
    """Accept ModelParams or any callable example -> probability."""
    if isinstance(model, mdl.ModelParams):
        return lambda ex: mdl.forward(model, table, ex)
    if callable(model):
        return model
    raise TypeError(f"cannot evaluate object of type {type(model).__name__}")


def train(
    config: TrainConfig,
    train_split: DatasetSplit,
    dev_split: DatasetSplit | None,
    table: EmbeddingTable,
) -> tuple[mdl.ModelParams, list[EpochStats]]:
    """Train a fresh model; returns the final-epoch params and full history."""
    params = mdl.ModelParams(config.model_config())
    adam = AdamState.for_params(params.values(), learning_rate=config.learning_rate)
    examples = list(train_split.examples)
    history: list[EpochStats] = []

    for epoch in range(config.epochs):
        order = list(range(len(examples)))
        Stream(derive_seed(config.seed, "epoch-order", epoch)).shuffle(order)
        loss_sum = 0.0
        seen = 0
        for batch_idx in range(0, len(order), config.batch_size):
            batch = [examples[i] for i in order[batch_idx : batch_idx + config.batch_size]]
            batch_id = batch_idx // config.batch_size
            params.zero_grads()
            for ex in batch:
                if config.shuffle_rules_each_batch:
                    ex = shuffle_sentences(
                        ex, derive_seed(config.seed, "batch-shuffle", epoch, batch_id, ex.id)
                    )
                value, loss, tape = mdl.loss_on_example(params, table, ex)
                if not np.isfinite(value):
                    raise NonFiniteLoss(
                        f"non-finite loss in epoch {epoch} batch {batch_id} "
                        f"(example {ex.id})"
                    )
                ag.backward(loss, tape)
                loss_sum += value
            seen += len(batch)
            grads = [g / len(batch) for g in params.grads()]
            adam_step(adam, params.values(), grads)
        dev_acc = None
        if dev_split is not None and dev_split.examples:
            dev_acc = evaluate(params, table, dev_split).overall.accuracy
        history.append(EpochStats(epoch, loss_sum / max(seen, 1), dev_acc))
    return params, history


def evaluate(model, table: EmbeddingTable, split: DatasetSplit, threshold: float = 0.5) -> Metrics:
    """Accuracy overall and per depth; prediction = probability >= threshold."""
    predict = _predictor(model, table)
    correct: dict[int, int] = {}
    total: dict[int, int] = {}
    for ex in split.examples:
        hit = (predict(ex) >= threshold) == ex.label
        total[ex.depth] = total.get(ex.depth, 0) + 1
        correct[ex.depth] = correct.get(ex.depth, 0) + int(hit)
    per_depth = {d: Cell(correct[d], total[d]) for d in sorted(total)}
    overall = Cell(sum(correct.values()), sum(total.values()))
    return Metrics(overall, per_depth)


def ood_eval(model, table: EmbeddingTable, split: DatasetSplit, seed: int) -> OodReport:
    """Evaluate a split as-is and with per-example shuffled contexts."""
    original = evaluate(model, table, split)
    shuffled_split = DatasetSplit(
        split.name + "-shuffled",
        [
            shuffle_sentences(ex, derive_seed(seed, "ood-shuffle", ex.id))
            for ex in split.examples
        ],
    )
    shuffled = evaluate(model, table, shuffled_split)
    delta_depth = {
        d: shuffled.per_depth[d].accuracy - original.per_depth[d].accuracy
        for d in original.per_depth
    }
    return OodReport(
        original=original,
        shuffled=shuffled,
        delta_overall=shuffled.overall.accuracy - original.overall.accuracy,
        delta_per_depth=delta_depth,
    )


# ------------------------------------------------------------------ reports


def _metrics_dict(metrics: Metrics) -> dict:
    return {
        "overall": {
            "n_correct": metrics.overall.n_correct,
            "n_total": metrics.overall.n_total,
            "accuracy": metrics.overall.accuracy,
        },
        "per_depth": {
            str(d): {
                "n_correct": c.n_correct,
                "n_total": c.n_total,
                "accuracy": c.accuracy,
            }
            for d, c in sorted(metrics.per_depth.items())
        },
    }


def emit_report(
    metrics_by_condition: dict[str, Metrics],
    history: list[EpochStats],
    out_dir,
) -> list[str]:
    """Write report.json and cells.tsv under out_dir; returns written paths.

    cells.tsv is the flat table: one row per (condition, depth) plus an
    "all" row per condition, columns
    condition / depth / n_total / n_correct / accuracy.
    """
    os.makedirs(out_dir, exist_ok=True)
    report = {
        "conditions": {
            cond: _metrics_dict(m) for cond, m in metrics_by_condition.items()
        },
        "history": [
            {
                "epoch": h.epoch,
                "train_loss": h.train_loss,
                "dev_accuracy": h.dev_accuracy,
            }
            for h in history
        ],
    }
    json_path = os.path.join(out_dir, "report.json")
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")

    table_path = os.path.join(out_dir, "cells.tsv")
    with open(table_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("condition\tdepth\tn_total\tn_correct\taccuracy\n")
        for cond, m in metrics_by_condition.items():
            rows = [("all", m.overall)] + [
                (str(d), c) for d, c in sorted(m.per_depth.items())
            ]
            for depth, cell in rows:
                fh.write(
                    f"{cond}\t{depth}\t{cell.n_total}\t{cell.n_correct}\t"
                    f"{cell.accuracy!r}\n"
                )
    return [json_path, table_path]


def read_report(out_dir) -> dict:
    with open(os.path.join(out_dir, "report.json"), "r", encoding="utf-8") as fh:
        return json.load(fh)
