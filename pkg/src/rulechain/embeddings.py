"""Tokenization and pretrained word-vector lookup.

The vector file format is one token per line: the token, then `dimension`
space-separated decimal numbers, LF newlines, UTF-8. A small fixture table
covering the generator vocabulary ships with the package so nothing here
ever needs a large download; point RULECHAIN_EMBEDDINGS (or the CLI flag)
at a real vector file to use one.

Out-of-vocabulary tokens map to a deterministic pseudo-random vector with
components uniform in [-0.05, 0.05], keyed by (token, oov_seed): distinct
unknown words stay distinguishable and the same word always gets the same
vector.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from .prng import Stream, derive_seed

TokenSequence = list[str]

_STRIP_CHARS = ".,?!"

FIXTURE_NAME = "mini_vectors_100d.txt"


class DimensionMismatch(ValueError):
    def __init__(self, path, line_no: int, expected: int, got: int):
        self.line_no = line_no
        super().__init__(
            f"{path}:{line_no}: expected {expected} vector components, got {got}"
        )


def tokenize(text: str) -> TokenSequence:
    """Lowercase, split on whitespace, strip terminal punctuation per token."""
    tokens = []
    for raw in text.lower().split():
        token = raw.rstrip(_STRIP_CHARS)
        if token:
            tokens.append(token)
    return tokens


class EmbeddingTable:
    """Immutable token -> vector map with the deterministic OOV policy."""

    def __init__(self, dimension: int, vectors: dict[str, np.ndarray], oov_seed: int = 0):
        self.dimension = dimension
        self._vectors = vectors
        self.oov_seed = oov_seed
        self._oov_cache: dict[str, np.ndarray] = {}
        self._sentence_cache: dict[str, np.ndarray] = {}
        self.duplicate_count = 0

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, token: str) -> bool:
        return token in self._vectors

    def lookup(self, token: str) -> np.ndarray:
        vec = self._vectors.get(token)
        if vec is not None:
            return vec
        vec = self._oov_cache.get(token)
        if vec is None:
            rng = Stream(derive_seed(self.oov_seed, "oov", token))
            vec = np.array(
                [rng.uniform(-0.05, 0.05) for _ in range(self.dimension)],
                dtype=np.float64,
            )
            self._oov_cache[token] = vec
        return vec

    def sentence_matrix(self, text: str) -> np.ndarray:
        """Memoized embed(tokenize(text)); callers must not mutate the result."""
        mat = self._sentence_cache.get(text)
        if mat is None:
            mat = embed(self, tokenize(text))
            self._sentence_cache[text] = mat
        return mat


def embed(table: EmbeddingTable, tokens: TokenSequence) -> np.ndarray:
    """Stack per-token vectors into an (len(tokens), dimension) matrix."""
    if not tokens:
        return np.zeros((0, table.dimension), dtype=np.float64)
    return np.stack([table.lookup(t) for t in tokens])


def load_embeddings(path, oov_seed: int = 0, default_dimension: int = 100) -> EmbeddingTable:
    """Load a vector text file. Duplicate tokens: last one wins, counted."""
    vectors: dict[str, np.ndarray] = {}
    dimension = None
    duplicates = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                if not line.strip():
                    continue
                raise DimensionMismatch(path, line_no, dimension or 1, len(parts) - 1)
            token, values = parts[0], parts[1:]
            if dimension is None:
                dimension = len(values)
            if len(values) != dimension:
                raise DimensionMismatch(path, line_no, dimension, len(values))
            if token in vectors:
                duplicates += 1
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: {exc}") from exc
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"{path}:{line_no}: non-finite vector component")
            vectors[token] = vec
    table = EmbeddingTable(
        dimension if dimension is not None else default_dimension,
        vectors,
        oov_seed=oov_seed,
    )
    table.duplicate_count = duplicates
    return table


def fixture_path():
    """Filesystem path of the bundled fixture vector file."""
    return resources.files("rulechain").joinpath("data", FIXTURE_NAME)


def load_fixture(oov_seed: int = 0) -> EmbeddingTable:
    with resources.as_file(fixture_path()) as p:
        return load_embeddings(p, oov_seed=oov_seed)
