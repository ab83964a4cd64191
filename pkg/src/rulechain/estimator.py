"""scikit-learn compatible wrapper around the iterative memory classifier.

X is a sequence of reasoning examples: Example objects, dicts with
"context" (list of sentences) and "question" keys, or (context, question)
pairs. y is 0/1 (or bool) truth labels. The estimator follows the usual
fit / predict / predict_proba / get_params contract, so it composes with
sklearn model selection and pipelines operating on object arrays.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from . import model as mdl
from .datagen import DatasetSplit, Example
from .embeddings import EmbeddingTable, load_fixture
from .training import TrainConfig, train


def as_example(item, index: int, label: bool = False, depth: int = 0) -> Example:
    """Coerce one X row into an Example; raises ValueError on junk input."""
    if isinstance(item, Example):
        return item
    if isinstance(item, dict):
        try:
            return Example(
                id=str(item.get("id", index)),
                context=tuple(item["context"]),
                question=str(item["question"]),
                label=bool(item.get("label", label)),
                depth=int(item.get("depth", depth)),
            )
        except KeyError as exc:
            raise ValueError(f"X[{index}] is missing key {exc}") from exc
    if isinstance(item, (tuple, list)) and len(item) == 2:
        context, question = item
        return Example(
            id=str(index),
            context=tuple(context),
            question=str(question),
            label=label,
            depth=depth,
        )
    raise ValueError(
        f"X[{index}] must be an Example, a record dict, or a (context, question) "
        f"pair; got {type(item).__name__}"
    )


def validate_inputs(X, y=None) -> list[Example]:
    """Validate and coerce X (and optional y) into labelled Examples."""
    items = list(X)
    if not items:
        raise ValueError("X is empty")
    if y is None:
        return [as_example(item, i) for i, item in enumerate(items)]
    labels = np.asarray(y)
    if labels.shape != (len(items),):
        raise ValueError(f"y has shape {labels.shape}, expected ({len(items)},)")
    unique = set(np.unique(labels).tolist())
    if not unique <= {0, 1, True, False}:
        raise ValueError(f"y must be binary 0/1, got values {sorted(unique)}")
    out = []
    for i, (item, label) in enumerate(zip(items, labels)):
        ex = as_example(item, i, label=bool(label))
        if isinstance(item, (Example, dict)):
            ex = Example(ex.id, ex.context, ex.question, bool(label), ex.depth)
        out.append(ex)
    return out


class IterativeMemoryClassifier(BaseEstimator, ClassifierMixin):
    """Binary truth classifier for (context, question) reasoning examples.

    Parameters mirror the training defaults: Adam at `learning_rate`,
    `epochs` passes, `batch_size` examples per update, `iterations`
    reasoning steps over a `hidden_size`-dim state, with context sentences
    reshuffled each batch when `shuffle_rules` is on.
    """

    def __init__(
        self,
        variant: str = "gate",
        hidden_size: int = 64,
        iterations: int = 4,
        epochs: int = 30,
        batch_size: int = 32,
        learning_rate: float = 1e-2,
        shuffle_rules: bool = True,
        seed: int = 0,
        embeddings: EmbeddingTable | None = None,
        threshold: float = 0.5,
    ):
        self.variant = variant
        self.hidden_size = hidden_size
        self.iterations = iterations
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.shuffle_rules = shuffle_rules
        self.seed = seed
        self.embeddings = embeddings
        self.threshold = threshold

    def _table(self) -> EmbeddingTable:
        if self.embeddings is not None:
            return self.embeddings
        if not hasattr(self, "_fixture_table"):
            self._fixture_table = load_fixture()
        return self._fixture_table

    def fit(self, X, y):
        examples = validate_inputs(X, y)
        table = self._table()
        config = TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            max_iterations=self.iterations,
            hidden_size=self.hidden_size,
            seed=self.seed,
            variant=self.variant,
            shuffle_rules_each_batch=self.shuffle_rules,
            embed_dim=table.dimension,
        )
        self.params_, self.history_ = train(
            config, DatasetSplit("fit", examples), None, table
        )
        self.classes_ = np.array([0, 1])
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError(
                "this IterativeMemoryClassifier instance is not fitted yet"
            )

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        table = self._table()
        examples = validate_inputs(X)
        p1 = np.array([mdl.forward(self.params_, table, ex) for ex in examples])
        return np.column_stack([1.0 - p1, p1])

    def decision_function(self, X) -> np.ndarray:
        return self.predict_proba(X)[:, 1]

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= self.threshold).astype(int)
