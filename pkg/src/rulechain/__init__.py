"""rulechain: balanced-depth rule-reasoning datasets with an exact
forward-chaining oracle, and iterative memory attention networks trained on
them end to end."""

from .datagen import (
    DatasetSplit,
    Example,
    GenerationSpec,
    Vocabularies,
    generate_dataset,
    generate_example,
    read_records,
    write_records,
)
from .embeddings import EmbeddingTable, embed, load_embeddings, load_fixture, tokenize
from .estimator import IterativeMemoryClassifier
from .logic import (
    NOT_DERIVABLE,
    Atom,
    KnowledgeBase,
    Rule,
    Verdict,
    answer,
    forward_chain,
    parse_context,
    parse_question,
    render,
    shuffle_sentences,
)
from .model import ModelConfig, ModelParams, baseline_forward, forward, forward_detail
from .training import TrainConfig, emit_report, evaluate, ood_eval, train

__version__ = "0.1.0"

__all__ = [
    "Atom", "DatasetSplit", "EmbeddingTable", "Example", "GenerationSpec",
    "IterativeMemoryClassifier", "KnowledgeBase", "ModelConfig", "ModelParams",
    "NOT_DERIVABLE", "Rule", "TrainConfig", "Verdict", "Vocabularies",
    "answer", "baseline_forward", "embed", "emit_report", "evaluate",
    "forward", "forward_chain", "forward_detail", "generate_dataset",
    "generate_example", "load_embeddings", "load_fixture", "ood_eval",
    "parse_context", "parse_question", "read_records", "render",
    "shuffle_sentences", "tokenize", "train", "write_records",
]
