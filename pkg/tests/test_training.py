"""Training-loop, evaluation, OOD, and report tests (desk scale kept tiny)."""

import numpy as np
import pytest

from rulechain.datagen import PEOPLE, DatasetSplit, Example, GenerationSpec, generate_dataset
from rulechain.embeddings import load_fixture
from rulechain.logic import shuffle_sentences
from rulechain.training import (
    Cell,
    EpochStats,
    Metrics,
    OodReport,
    TrainConfig,
    emit_report,
    evaluate,
    ood_eval,
    read_report,
    train,
)


@pytest.fixture(scope="module")
def table():
    return load_fixture()


@pytest.fixture(scope="module")
def tiny_splits():
    spec = GenerationSpec(
        category=PEOPLE,
        depths=(2, 3),
        counts={"train": {2: 24, 3: 24}, "dev": {2: 8, 3: 8}},
        seed=0,
    )
    return generate_dataset(spec)


def test_default_config_fields():
    config = TrainConfig()
    assert config.learning_rate == 1e-2
    assert config.batch_size == 32
    assert config.epochs == 30
    assert config.max_iterations == 4
    assert config.hidden_size == 64
    assert config.seed == 0
    assert config.shuffle_rules_each_batch is True


def test_zero_epochs_returns_initialized_params(table, tiny_splits):
    config = TrainConfig(epochs=0, hidden_size=8)
    params, history = train(config, tiny_splits["train"], tiny_splits["dev"], table)
    assert history == []
    fresh = __import__("rulechain.model", fromlist=["ModelParams"]).ModelParams(
        config.model_config()
    )
    for (_, a), (_, b) in zip(params.named_vars(), fresh.named_vars()):
        assert np.array_equal(a.value, b.value)


def test_two_epoch_history_and_determinism(table, tiny_splits):
    config = TrainConfig(epochs=2, hidden_size=8, batch_size=16)
    p1, h1 = train(config, tiny_splits["train"], tiny_splits["dev"], table)
    p2, h2 = train(config, tiny_splits["train"], tiny_splits["dev"], table)
    assert h1 == h2  # bit-identical losses and dev accuracies
    for (_, a), (_, b) in zip(p1.named_vars(), p2.named_vars()):
        assert np.array_equal(a.value, b.value)
    assert len(h1) == 2
    assert all(isinstance(h, EpochStats) for h in h1)
    assert all(h.dev_accuracy is not None for h in h1)


def test_training_moves_parameters(table, tiny_splits):
    config = TrainConfig(epochs=1, hidden_size=8)
    params, history = train(config, tiny_splits["train"], None, table)
    fresh = __import__("rulechain.model", fromlist=["ModelParams"]).ModelParams(
        config.model_config()
    )
    moved = any(
        not np.array_equal(a.value, b.value)
        for (_, a), (_, b) in zip(params.named_vars(), fresh.named_vars())
    )
    assert moved
    assert history[0].dev_accuracy is None


# ---------------------------------------------------------------- evaluate


def _fixed_split():
    examples = [
        Example("a", ("Anne is rough.",), "Anne is rough.", True, 2),
        Example("b", ("Anne is rough.",), "Anne is not rough.", False, 2),
        Example("c", ("Bob is young.",), "Bob is young.", True, 3),
        Example("d", ("Bob is young.",), "Bob is old.", False, 3),
    ]
    return DatasetSplit("fixed", examples)


def test_evaluate_perfect_predictor(table):
    split = _fixed_split()
    metrics = evaluate(lambda ex: 1.0 if ex.label else 0.0, table, split)
    assert metrics.overall.accuracy == 1.0
    assert metrics.per_depth[2].accuracy == 1.0
    assert metrics.per_depth[3].accuracy == 1.0


def test_evaluate_constant_true_on_balanced_split(table):
    metrics = evaluate(lambda ex: 0.99, table, _fixed_split())
    assert metrics.overall.accuracy == 0.5


def test_evaluate_three_of_four(table):
    # a, b, c predicted correctly; d (label False) predicted true
    metrics = evaluate(
        lambda ex: {"a": 0.9, "b": 0.1, "c": 0.8, "d": 0.6}[ex.id], table, _fixed_split()
    )
    assert metrics.overall == Cell(3, 4)
    assert metrics.overall.accuracy == 0.75


def test_evaluate_threshold_boundary(table):
    metrics = evaluate(lambda ex: 0.5, table, _fixed_split(), threshold=0.5)
    # p == threshold counts as predicting true
    assert metrics.overall == Cell(2, 4)


def test_evaluate_cell_totals_sum(table, tiny_splits):
    metrics = evaluate(lambda ex: 0.2, table, tiny_splits["train"])
    assert metrics.overall.n_total == sum(c.n_total for c in metrics.per_depth.values())
    assert metrics.overall.n_correct == sum(
        c.n_correct for c in metrics.per_depth.values()
    )


def test_evaluate_is_pure(table, tiny_splits):
    config = TrainConfig(epochs=1, hidden_size=8)
    params, _ = train(config, tiny_splits["train"], None, table)
    m1 = evaluate(params, table, tiny_splits["dev"])
    m2 = evaluate(params, table, tiny_splits["dev"])
    assert m1 == m2


# ---------------------------------------------------------------- ood_eval


def test_ood_labels_invariant_under_shuffle(tiny_splits):
    for ex in tiny_splits["dev"].examples:
        shuffled = shuffle_sentences(ex, 123)
        assert shuffled.label == ex.label and shuffled.depth == ex.depth


def test_ood_perfect_oracle_predictor_has_zero_delta(table, tiny_splits):
    from rulechain import logic

    def oracle_predictor(ex):
        return 1.0 if logic.answer_sentences(ex.context, ex.question).label else 0.0

    report = ood_eval(oracle_predictor, table, tiny_splits["dev"], seed=5)
    assert report.original.overall.accuracy == 1.0
    assert report.shuffled.overall.accuracy == 1.0
    assert report.delta_overall == 0.0
    assert all(v == 0.0 for v in report.delta_per_depth.values())


def test_ood_position_probe_model_reports_drop(table):
    """A model keying on sentence position degrades under shuffling and the
    harness reports the delta without judgment."""
    examples = []
    for i in range(40):
        context = tuple(f"Anne is a{j}." for j in range(6))
        label = i % 2 == 0
        # question ties truth to the FIRST context sentence's attribute
        question = f"Anne is a0." if label else "Anne is a9."
        examples.append(Example(f"p{i}", context, question, label, 2))
    split = DatasetSplit("probe", examples)

    def position_probe(ex):
        # believes the first sentence verbatim, nothing else
        return 1.0 if ex.question == ex.context[0] else 0.0

    report = ood_eval(position_probe, table, split, seed=11)
    assert report.original.overall.accuracy == 1.0
    assert report.shuffled.overall.accuracy < 1.0
    assert report.delta_overall < 0.0


# ------------------------------------------------------------------ report


def _metrics_fixture():
    return {
        "original": Metrics(Cell(9, 12), {2: Cell(5, 6), 3: Cell(4, 6)}),
        "shuffled": Metrics(Cell(8, 12), {2: Cell(5, 6), 3: Cell(3, 6)}),
    }


def test_emit_report_row_count(tmp_path):
    paths = emit_report(
        _metrics_fixture(),
        [EpochStats(0, 0.7, 0.5), EpochStats(1, 0.6, 0.6)],
        tmp_path,
    )
    table_lines = (tmp_path / "cells.tsv").read_text().strip().split("\n")
    # header + (2 depths + overall) x 2 conditions
    assert len(table_lines) == 1 + (2 + 1) * 2
    assert table_lines[0] == "condition\tdepth\tn_total\tn_correct\taccuracy"
    assert len(paths) == 2


def test_emit_report_round_trip_values(tmp_path):
    emit_report(_metrics_fixture(), [EpochStats(0, 0.71, None)], tmp_path)
    back = read_report(tmp_path)
    assert back["conditions"]["original"]["overall"]["n_correct"] == 9
    assert back["conditions"]["shuffled"]["per_depth"]["3"]["accuracy"] == 0.5
    assert back["history"][0]["train_loss"] == 0.71
    assert back["history"][0]["dev_accuracy"] is None


def test_emit_report_empty_metrics(tmp_path):
    paths = emit_report({}, [], tmp_path)
    lines = (tmp_path / "cells.tsv").read_text().strip().split("\n")
    assert lines == ["condition\tdepth\tn_total\tn_correct\taccuracy"]
    assert read_report(tmp_path) == {"conditions": {}, "history": []}


def test_emit_report_byte_identical_for_identical_inputs(tmp_path):
    d1, d2 = tmp_path / "one", tmp_path / "two"
    emit_report(_metrics_fixture(), [EpochStats(0, 1 / 3, 2 / 3)], d1)
    emit_report(_metrics_fixture(), [EpochStats(0, 1 / 3, 2 / 3)], d2)
    assert (d1 / "report.json").read_bytes() == (d2 / "report.json").read_bytes()
    assert (d1 / "cells.tsv").read_bytes() == (d2 / "cells.tsv").read_bytes()


def test_per_batch_context_shuffling_varies_across_epochs(table, tiny_splits):
    """Contexts are exposed in multiple orders across epochs (permutation
    hashes differ), per the training protocol."""
    from rulechain.prng import derive_seed

    ex = tiny_splits["train"].examples[0]
    seen = {
        tuple(
            shuffle_sentences(ex, derive_seed(0, "batch-shuffle", epoch, 0, ex.id)).context
        )
        for epoch in range(6)
    }
    assert len(seen) > 1
