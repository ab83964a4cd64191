"""Command-line interface.

Verbs: generate, verify, train, eval, ood-eval, report, grad-check.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

Flags can come from a `key = value` config file (--config); explicit flags
win over the file. RULECHAIN_EMBEDDINGS overrides the default embedding
table path; RULECHAIN_DATA_DIR is prepended to relative dataset paths.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import datagen, model, nn, training
from .datagen import (
    ANIMAL,
    PEOPLE,
    DatasetSplit,
    GenerationSpec,
    MalformedRecord,
    VocabExhausted,
    iter_split_examples,
    read_records,
    write_records,
)
from .embeddings import DimensionMismatch, load_embeddings, load_fixture
from .logic import UnknownEntity, UnparseableSentence
from .nn import NonFiniteLoss
from .prng import Stream, derive_seed

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_DATA_ERRORS = (
    UnparseableSentence,
    UnknownEntity,
    MalformedRecord,
    VocabExhausted,
    DimensionMismatch,
    OSError,
    json.JSONDecodeError,
    ValueError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so exit codes stay ours."""

    def error(self, message):
        raise UsageError(message)


def _data_path(path: str) -> str:
    base = os.environ.get("RULECHAIN_DATA_DIR")
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


def _load_table(path: str | None):
    path = path or os.environ.get("RULECHAIN_EMBEDDINGS")
    if path:
        return load_embeddings(_data_path(path))
    return load_fixture()


def _parse_depth_counts(depths: list[int], counts: str) -> dict[int, int]:
    """--counts is pairs per depth: one integer, or one per --depths entry."""
    parts = [int(p) for p in counts.split(",")]
    if len(parts) == 1:
        parts = parts * len(depths)
    if len(parts) != len(depths):
        raise UsageError(
            f"--counts needs 1 or {len(depths)} integers, got {len(parts)}"
        )
    return {d: 2 * c for d, c in zip(depths, parts)}


def _apply_config_file(args: argparse.Namespace, parser: argparse.ArgumentParser):
    """Fill unset flags from a `key = value` file; explicit flags win."""
    if not getattr(args, "config", None):
        return
    defaults = {a.dest: a.default for a in parser._actions}
    option_dests = {
        opt.lstrip("-"): a.dest for a in parser._actions for opt in a.option_strings
    }
    with open(args.config, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{args.config}:{line_no}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            dest = option_dests.get(key, key.replace("-", "_"))
            if dest not in defaults:
                raise UsageError(f"{args.config}:{line_no}: unknown key {key!r}")
            if getattr(args, dest) != defaults[dest]:
                continue  # explicit flag wins
            current_default = defaults[dest]
            if isinstance(current_default, bool):
                setattr(args, dest, value.lower() in ("1", "true", "yes", "on"))
            elif isinstance(current_default, int):
                setattr(args, dest, int(value))
            elif isinstance(current_default, float):
                setattr(args, dest, float(value))
            else:
                setattr(args, dest, value)


_SUBPARSERS: dict[str, argparse.ArgumentParser] = {}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rulechain", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    gen = sub.add_parser("generate", help="generate a dataset split")
    gen.add_argument("--category", choices=(ANIMAL, PEOPLE), default=PEOPLE)
    gen.add_argument("--depths", default="2,3,4,5", help="comma-separated depths")
    gen.add_argument(
        "--counts",
        default="1000",
        help="example pairs per depth (one int, or one per depth)",
    )
    gen.add_argument("--negation", action="store_true", help="negated-rule variant")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--split", default="train", choices=datagen.SPLITS)
    gen.add_argument("--out", required=True)

    ver = sub.add_parser("verify", help="oracle-check a dataset file")
    ver.add_argument("--in", dest="infile", required=True)
    ver.add_argument("--limit", type=int, default=0, help="check only the first N")

    tr = sub.add_parser("train", help="train a model")
    tr.add_argument("--config", default=None, help="key = value config file")
    tr.add_argument("--train", dest="train_file", default=None)
    tr.add_argument("--dev", dest="dev_file", default=None)
    tr.add_argument("--variant", choices=model.VARIANTS, default="gate")
    tr.add_argument("--learning-rate", type=float, default=1e-2)
    tr.add_argument("--batch-size", type=int, default=32)
    tr.add_argument("--epochs", type=int, default=30)
    tr.add_argument("--iterations", type=int, default=4)
    tr.add_argument("--hidden-size", type=int, default=64)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--no-shuffle-rules", action="store_true")
    tr.add_argument("--embeddings", default=None)
    tr.add_argument("--out", default=None, help="run directory")

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--in", dest="infile", required=True)
    ev.add_argument("--embeddings", default=None)
    ev.add_argument("--out", default=None)

    ood = sub.add_parser("ood-eval", help="evaluate original vs shuffled contexts")
    ood.add_argument("--checkpoint", required=True)
    ood.add_argument("--in", dest="infile", required=True)
    ood.add_argument("--embeddings", default=None)
    ood.add_argument("--seed", type=int, default=0)
    ood.add_argument("--out", default=None)

    rep = sub.add_parser("report", help="re-emit report files from a run directory")
    rep.add_argument("--run", required=True, help="directory holding report.json")
    rep.add_argument("--out", required=True)

    gc = sub.add_parser("grad-check", help="finite-difference gradient audit")
    gc.add_argument("--variant", choices=model.VARIANTS + ("all",), default="all")
    gc.add_argument("--probes", type=int, default=200)
    gc.add_argument("--seed", type=int, default=0)

    _SUBPARSERS.clear()
    _SUBPARSERS.update(
        {
            "generate": gen, "verify": ver, "train": tr, "eval": ev,
            "ood-eval": ood, "report": rep, "grad-check": gc,
        }
    )
    return parser


# ------------------------------------------------------------------ actions


def _cmd_generate(args) -> int:
    depths = tuple(int(d) for d in args.depths.split(","))
    counts = _parse_depth_counts(list(depths), args.counts)
    spec = GenerationSpec(
        category=args.category,
        negation_rules=args.negation,
        depths=depths,
        counts={args.split: counts},
        seed=args.seed,
    )
    n = write_records(iter_split_examples(spec, args.split), _data_path(args.out))
    print(f"generate: wrote {n} examples to {args.out}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    split = read_records(_data_path(args.infile))
    examples = split.examples[: args.limit] if args.limit else split.examples
    mismatches = datagen.verify_records(examples)
    for line in mismatches[:20]:
        print(f"verify: {line}", file=sys.stderr)
    print(f"verify: {len(mismatches)} mismatches in {len(examples)} examples")
    return EXIT_OK if not mismatches else EXIT_DATA


def _history_dicts(history):
    return [
        {"epoch": h.epoch, "train_loss": h.train_loss, "dev_accuracy": h.dev_accuracy}
        for h in history
    ]


def _cmd_train(args) -> int:
    if not args.train_file:
        raise UsageError("train: --train is required (flag or config file)")
    table = _load_table(args.embeddings)
    config = training.TrainConfig(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        epochs=args.epochs,
        max_iterations=args.iterations,
        hidden_size=args.hidden_size,
        seed=args.seed,
        variant=args.variant,
        shuffle_rules_each_batch=not args.no_shuffle_rules,
        embed_dim=table.dimension,
    )
    train_split = read_records(_data_path(args.train_file), "train")
    dev_split = read_records(_data_path(args.dev_file), "dev") if args.dev_file else None
    print(
        f"train: variant={config.variant} lr={config.learning_rate} "
        f"batch={config.batch_size} epochs={config.epochs} "
        f"T={config.max_iterations} d={config.hidden_size} seed={config.seed}"
    )
    params, history = training.train(config, train_split, dev_split, table)
    final = history[-1].train_loss if history else float("nan")
    print(f"train: final loss {final:.6f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        ckpt = os.path.join(args.out, "model.ckpt")
        params.save(ckpt)
        conditions = {}
        if dev_split is not None:
            conditions["dev"] = training.evaluate(params, table, dev_split)
        paths = training.emit_report(conditions, history, args.out)
        print(f"train: wrote {ckpt} " + " ".join(paths))
    return EXIT_OK


def _cmd_eval(args) -> int:
    table = _load_table(args.embeddings)
    params = model.ModelParams.load(_data_path(args.checkpoint))
    split = read_records(_data_path(args.infile), "test")
    metrics = training.evaluate(params, table, split)
    print(
        f"eval: accuracy {metrics.overall.accuracy:.4f} "
        f"({metrics.overall.n_correct}/{metrics.overall.n_total})"
    )
    for d, cell in sorted(metrics.per_depth.items()):
        print(f"eval: depth {d}: {cell.accuracy:.4f} ({cell.n_correct}/{cell.n_total})")
    if args.out:
        paths = training.emit_report({"test": metrics}, [], args.out)
        print("eval: wrote " + " ".join(paths))
    return EXIT_OK


def _cmd_ood_eval(args) -> int:
    table = _load_table(args.embeddings)
    params = model.ModelParams.load(_data_path(args.checkpoint))
    split = read_records(_data_path(args.infile), "test")
    report = training.ood_eval(params, table, split, args.seed)
    print(
        f"ood-eval: original {report.original.overall.accuracy:.4f} "
        f"shuffled {report.shuffled.overall.accuracy:.4f} "
        f"delta {report.delta_overall:+.4f}"
    )
    if args.out:
        paths = training.emit_report(
            {"original": report.original, "shuffled": report.shuffled}, [], args.out
        )
        print("ood-eval: wrote " + " ".join(paths))
    return EXIT_OK


def _cmd_report(args) -> int:
    data = training.read_report(args.run)
    conditions = {
        cond: training.Metrics(
            overall=training.Cell(
                body["overall"]["n_correct"], body["overall"]["n_total"]
            ),
            per_depth={
                int(d): training.Cell(c["n_correct"], c["n_total"])
                for d, c in body["per_depth"].items()
            },
        )
        for cond, body in data["conditions"].items()
    }
    history = [
        training.EpochStats(h["epoch"], h["train_loss"], h.get("dev_accuracy"))
        for h in data.get("history", [])
    ]
    paths = training.emit_report(conditions, history, args.out)
    print("report: wrote " + " ".join(paths))
    return EXIT_OK


def _grad_check_variant(variant: str, probes: int, seed: int) -> float:
    """Full-model gradient audit at tiny dims (d=8, R=3, L=5)."""
    from .embeddings import EmbeddingTable

    config = model.ModelConfig(
        variant=variant,
        hidden_size=8,
        embed_dim=12,
        attention_size=8,
        max_iterations=4,
        seed=seed,
    )
    params = model.ModelParams(config)
    # Empty table: every token resolves through the deterministic OOV policy
    # at the tiny embedding width.
    table = EmbeddingTable(config.embed_dim, {}, oov_seed=seed)
    rng = Stream(derive_seed(seed, "grad-check-example"))
    example = datagen.Example(
        id=f"grad-{variant}",
        context=(
            "Anne is rough.",
            "Rough people are young.",
            "All young people are kind.",
        ),
        question="Anne is kind.",
        label=bool(rng.randint(2)),
        depth=2,
    )

    def loss_fn(values):
        params.set_values(values)
        loss, grads = model.example_loss_and_grads(params, table, example)
        return loss, grads

    return nn.grad_check(loss_fn, params.values(), probe_count=probes, seed=seed)


def _cmd_grad_check(args) -> int:
    variants = model.VARIANTS if args.variant == "all" else (args.variant,)
    worst = 0.0
    for variant in variants:
        err = _grad_check_variant(variant, args.probes, args.seed)
        print(f"grad-check: {variant}: max relative error {err:.3e}")
        worst = max(worst, err)
    if worst >= 1e-4 or not np.isfinite(worst):
        print(f"grad-check: FAILED at {worst:.3e} (limit 1e-4)", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


_COMMANDS = {
    "generate": _cmd_generate,
    "verify": _cmd_verify,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "ood-eval": _cmd_ood_eval,
    "report": _cmd_report,
    "grad-check": _cmd_grad_check,
}


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.verb == "train":
            _apply_config_file(args, _SUBPARSERS["train"])
        return _COMMANDS[args.verb](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteLoss as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
