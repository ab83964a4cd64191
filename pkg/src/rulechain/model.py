"""Iterative memory attention networks over encoded rule contexts.

One shared GRU encodes the question and every context sentence into d-dim
vectors. Each reasoning iteration scores every sentence against the current
state with a two-layer scorer over the feature vector
[s; q; r_i; (s - r_i)^2; s * r_i], re-reads each sentence with a unifier GRU
initialized at the state, and combines the per-sentence readings:

* variant "sigmoid": elementwise-sigmoid scores weight a sum of readings;
* variant "softmax": softmax-normalized scores weight the same sum;
* variant "gate": softmax scores become the update gate of a scan over the
  readings (a GRU whose update gate is the attention weight), so the state
  is rewritten only where attention points.

A plain single-pass recurrent baseline over the concatenated token stream is
included for calibration.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autograd as ag
from . import nn
from .datagen import Example
from .embeddings import EmbeddingTable, embed, tokenize
from .nn import GruParams, gru_cell
from .prng import derive_seed

VARIANTS = ("sigmoid", "softmax", "gate")


class EmptyContext(ValueError):
    pass


class AllMasked(ValueError):
    pass


class IterationOverflow(RuntimeError):
    pass


@dataclass(frozen=True, slots=True)
class ModelConfig:
    variant: str = "gate"
    hidden_size: int = 64  # state / encoding width
    embed_dim: int = 100
    attention_size: int = 64
    max_iterations: int = 4
    attention_tanh: bool = True  # False: literal linear two-layer scorer
    ga_combine: str = "scan"  # "scan" | "weighted-sum"
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected {VARIANTS}")
        if self.ga_combine not in ("scan", "weighted-sum"):
            raise ValueError(f"unknown ga_combine {self.ga_combine!r}")

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "hidden_size": self.hidden_size,
            "embed_dim": self.embed_dim,
            "attention_size": self.attention_size,
            "max_iterations": self.max_iterations,
            "attention_tanh": self.attention_tanh,
            "ga_combine": self.ga_combine,
            "seed": self.seed,
        }


@dataclass(slots=True)
class GateScanParams:
    """Reset/candidate weights for the gate-variant scan (update gate comes
    from attention, so there is no z gate here)."""

    W_r: np.ndarray
    U_r: np.ndarray
    b_r: np.ndarray
    W_h: np.ndarray
    U_h: np.ndarray
    b_h: np.ndarray

    def named(self, prefix: str) -> list[tuple[str, np.ndarray]]:
        return [
            (f"{prefix}.{name}", getattr(self, name))
            for name in ("W_r", "U_r", "b_r", "W_h", "U_h", "b_h")
        ]


def _wrap_params(obj):
    """Replace every ndarray field with a gradient-collecting Var, in place."""
    for name in obj.__dataclass_fields__:
        value = getattr(obj, name)
        if isinstance(value, np.ndarray):
            setattr(obj, name, ag.param(value))
    return obj


class ModelParams:
    """All learnable weights for one model instance. Fields hold autograd
    Vars; `.value` of each Var is the ndarray that Adam updates in place."""

    def __init__(self, config: ModelConfig):
        self.config = config
        d, de, da = config.hidden_size, config.embed_dim, config.attention_size
        seed = config.seed
        self.encoder = _wrap_params(nn.init_gru(de, d, seed, "encoder"))
        self.unifier = _wrap_params(nn.init_gru(de, d, seed, "unifier"))
        combiner_src = nn.init_gru(d, d, seed, "combiner")
        self.combiner = _wrap_params(
            GateScanParams(
                W_r=combiner_src.W_r, U_r=combiner_src.U_r, b_r=combiner_src.b_r,
                W_h=combiner_src.W_h, U_h=combiner_src.U_h, b_h=combiner_src.b_h,
            )
        )
        self.att_U = ag.param(
            nn.init_matrix((da, 5 * d), 5 * d, derive_seed(seed, "init", "att_U"))
        )
        self.att_b1 = ag.param(np.zeros(da))
        self.att_w = ag.param(
            nn.init_matrix((da,), da, derive_seed(seed, "init", "att_w"))
        )
        self.att_b2 = ag.param(np.zeros(()))
        self.out_w = ag.param(
            nn.init_matrix((d,), d, derive_seed(seed, "init", "out_w"))
        )
        self.out_b = ag.param(np.zeros(()))

    def named_vars(self) -> list[tuple[str, ag.Var]]:
        out = []
        for prefix, gru in (("encoder", self.encoder), ("unifier", self.unifier)):
            for name in ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h"):
                out.append((f"{prefix}.{name}", getattr(gru, name)))
        for name in ("W_r", "U_r", "b_r", "W_h", "U_h", "b_h"):
            out.append((f"combiner.{name}", getattr(self.combiner, name)))
        out.extend(
            [
                ("att_U", self.att_U),
                ("att_b1", self.att_b1),
                ("att_w", self.att_w),
                ("att_b2", self.att_b2),
                ("out_w", self.out_w),
                ("out_b", self.out_b),
            ]
        )
        return out

    def values(self) -> list[np.ndarray]:
        return [v.value for _, v in self.named_vars()]

    def grads(self) -> list[np.ndarray]:
        return [
            v.grad if v.grad is not None else np.zeros_like(v.value)
            for _, v in self.named_vars()
        ]

    def zero_grads(self) -> None:
        for _, v in self.named_vars():
            v.zero_grad()

    def set_values(self, values: list[np.ndarray]) -> None:
        for (_, var), val in zip(self.named_vars(), values):
            var.value[...] = val

    def save(self, path) -> None:
        nn.save_checkpoint(
            path,
            [(name, var.value) for name, var in self.named_vars()],
            self.config.to_dict(),
        )

    @classmethod
    def load(cls, path) -> "ModelParams":
        config_dict, arrays = nn.load_checkpoint(path)
        params = cls(ModelConfig(**config_dict))
        for name, var in params.named_vars():
            if name not in arrays:
                raise ValueError(f"checkpoint missing parameter {name}")
            if arrays[name].shape != var.value.shape:
                raise nn.ShapeMismatch(
                    f"{name}: checkpoint {arrays[name].shape} vs model {var.value.shape}"
                )
            var.value[...] = arrays[name]
        return params


@dataclass(frozen=True, slots=True)
class EncodedExample:
    q: np.ndarray  # (d,)
    rules: np.ndarray  # (R, d)
    C: np.ndarray  # (R, L, embed_dim)
    mask: np.ndarray  # (R, L) bool


@dataclass(frozen=True, slots=True)
class IterationState:
    s: np.ndarray
    t: int = 0
    attention_trace: tuple[np.ndarray, ...] = ()


@dataclass(frozen=True, slots=True)
class ForwardResult:
    probability: float
    attention_trace: tuple[np.ndarray, ...]
    states: tuple[np.ndarray, ...]


# ---------------------------------------------------------------- embedding


def _pad_embedded(table: EmbeddingTable, texts: list[str]) -> tuple[np.ndarray, np.ndarray]:
    """Embed each text and pad to the longest: (N, L, de) plus (N, L) mask."""
    mats = []
    for text in texts:
        m = table.sentence_matrix(text)
        if m.shape[0] == 0:
            raise AllMasked(f"no tokens in {text!r}")
        mats.append(m)
    longest = max(m.shape[0] for m in mats)
    E = np.zeros((len(mats), longest, table.dimension))
    mask = np.zeros((len(mats), longest), dtype=bool)
    for i, m in enumerate(mats):
        E[i, : m.shape[0]] = m
        mask[i, : m.shape[0]] = True
    return E, mask


def _fold_gru(gru, E: np.ndarray, mask: np.ndarray, h0) -> ag.Var:
    """Left-fold a GRU over padded sequences; masked steps carry h through.

    E: (N, L, de); h0: Var or ndarray (N, d) or (d,) broadcastable rows.
    """
    n, length = E.shape[0], E.shape[1]
    h = h0 if isinstance(h0, ag.Var) else ag.Var(h0)
    if h.value.ndim == 1:
        h = ag.broadcast_rows(h, n)
    for j in range(length):
        col = mask[:, j]
        h_new = gru_cell(gru, E[:, j, :], h)
        h = h_new if col.all() else ag.where_const(col, h_new, h)
    return h


# --------------------------------------------------------------- operations


def encode(table: EmbeddingTable, params: ModelParams, example: Example) -> EncodedExample:
    """Encode one example's context and question (no gradients recorded)."""
    if not example.context:
        raise EmptyContext(f"example {example.id} has an empty context")
    enc_out, C, mask = _encode_core(table, params, list(example.context), example.question)
    r = len(example.context)
    return EncodedExample(
        q=enc_out.value[r].copy(), rules=enc_out.value[:r].copy(), C=C, mask=mask
    )


def _encode_core(
    table: EmbeddingTable, params: ModelParams, context: list[str], question: str
) -> tuple[ag.Var, np.ndarray, np.ndarray]:
    E, mask = _pad_embedded(table, context + [question])
    zeros = np.zeros(params.config.hidden_size)
    enc_out = _fold_gru(params.encoder, E, mask, zeros)
    r = len(context)
    return enc_out, E[:r], mask[:r]


def feature_vector(s: np.ndarray, q: np.ndarray, r: np.ndarray) -> np.ndarray:
    """[s; q; r; (s - r)^2; s * r] for one rule vector."""
    s, q, r = (np.asarray(v, dtype=np.float64) for v in (s, q, r))
    if not (s.shape == q.shape == r.shape):
        raise nn.ShapeMismatch(f"feature_vector dims {s.shape}/{q.shape}/{r.shape}")
    diff = s - r
    return np.concatenate([s, q, r, diff * diff, s * r])


def _feature_matrix(s: ag.Var, q: ag.Var, rules: ag.Var) -> ag.Var:
    n = rules.value.shape[0]
    s_rows = ag.broadcast_rows(s, n)
    q_rows = ag.broadcast_rows(q, n)
    diff = ag.sub(s_rows, rules)
    return ag.concat(
        [s_rows, q_rows, rules, ag.mul(diff, diff), ag.mul(s_rows, rules)], axis=1
    )


def _attention_scores(params: ModelParams, features: ag.Var) -> ag.Var:
    inner = ag.affine(features, params.att_U, params.att_b1)
    if params.config.attention_tanh:
        inner = ag.tanh(inner)
    return ag.add(ag.matvec(inner, params.att_w), params.att_b2)


def _attention_weights(params: ModelParams, scores: ag.Var) -> ag.Var:
    if params.config.variant == "sigmoid":
        return ag.sigmoid(scores)
    return ag.softmax(scores)


def attention(
    params: ModelParams, s: np.ndarray, q: np.ndarray, rules: np.ndarray
) -> np.ndarray:
    """Attention weights over the R rule vectors for the current state."""
    rules = np.asarray(rules, dtype=np.float64)
    if rules.ndim != 2 or rules.shape[0] == 0:
        raise nn.ShapeMismatch("rules must be a non-empty (R, d) matrix")
    features = _feature_matrix(ag.Var(s), ag.Var(q), ag.Var(rules))
    return _attention_weights(params, _attention_scores(params, features)).value


def unifier(
    params: ModelParams, C_i: np.ndarray, mask_i: np.ndarray, s: np.ndarray
) -> np.ndarray:
    """Re-read one sentence's word embeddings starting from state s."""
    mask_i = np.asarray(mask_i, dtype=bool)
    if not mask_i.any():
        raise AllMasked("sentence has no unmasked positions")
    h = _fold_gru(params.unifier, C_i[None], mask_i[None], np.asarray(s, dtype=np.float64))
    return h.value[0]


def _gate_scan(params: ModelParams, H: ag.Var, gates: ag.Var, s: ag.Var) -> ag.Var:
    """Scan over per-rule readings with the attention weight as update gate."""
    p = params.combiner
    h = s
    for i in range(H.value.shape[0]):
        x = ag.row(H, i)
        g_i = ag.element(gates, i)
        r = ag.sigmoid(ag.lincomb2(x, p.W_r, h, p.U_r, p.b_r))
        hcand = ag.tanh(ag.lincomb2(x, p.W_h, ag.mul(r, h), p.U_h, p.b_h))
        h = ag.add(ag.mul(g_i, hcand), ag.mul(ag.rsub_const(1.0, g_i), h))
    return h


def _iterate_core(
    params: ModelParams,
    q: ag.Var,
    rules: ag.Var,
    C: np.ndarray,
    mask: np.ndarray,
    s: ag.Var,
) -> tuple[ag.Var, np.ndarray]:
    readings = _fold_gru(params.unifier, C, mask, s)  # (R, d), h0 = s
    features = _feature_matrix(s, q, rules)
    weights = _attention_weights(params, _attention_scores(params, features))
    if params.config.variant == "gate" and params.config.ga_combine == "scan":
        s_next = _gate_scan(params, readings, weights, s)
    else:
        s_next = ag.weighted_rows(weights, readings)
    return s_next, weights.value.copy()


def iterate(params: ModelParams, enc: EncodedExample, state: IterationState) -> IterationState:
    """One reasoning step on plain arrays (no gradients recorded)."""
    if state.t >= params.config.max_iterations:
        raise IterationOverflow(
            f"iteration {state.t} at the limit of {params.config.max_iterations}"
        )
    s_next, weights = _iterate_core(
        params, ag.Var(enc.q), ag.Var(enc.rules), enc.C, enc.mask, ag.Var(state.s)
    )
    return IterationState(
        s=s_next.value,
        t=state.t + 1,
        attention_trace=state.attention_trace + (weights,),
    )


def _forward_core(
    params: ModelParams, table: EmbeddingTable, example: Example
) -> tuple[ag.Var, list[np.ndarray], list[np.ndarray]]:
    if not example.context:
        raise EmptyContext(f"example {example.id} has an empty context")
    enc_out, C, mask = _encode_core(table, params, list(example.context), example.question)
    n_rules = len(example.context)
    q = ag.row(enc_out, n_rules)
    rules = ag.slice_rows(enc_out, 0, n_rules)
    s = q
    trace: list[np.ndarray] = []
    states: list[np.ndarray] = [s.value.copy()]
    for _ in range(params.config.max_iterations):
        s, weights = _iterate_core(params, q, rules, C, mask, s)
        trace.append(weights)
        states.append(s.value.copy())
    logit = ag.add(ag.dot(params.out_w, s), params.out_b)
    return ag.sigmoid(logit), trace, states


def forward(params: ModelParams, table: EmbeddingTable, example: Example) -> float:
    """Probability that the example's question is true."""
    prob, _, _ = _forward_core(params, table, example)
    return float(prob.value)


def forward_detail(
    params: ModelParams, table: EmbeddingTable, example: Example
) -> ForwardResult:
    prob, trace, states = _forward_core(params, table, example)
    return ForwardResult(float(prob.value), tuple(trace), tuple(states))


def baseline_forward(params: ModelParams, table: EmbeddingTable, example: Example) -> float:
    """Single recurrent pass over all context tokens then question tokens."""
    tokens: list[str] = []
    for sentence in example.context:
        tokens.extend(tokenize(sentence))
    tokens.extend(tokenize(example.question))
    if not tokens:
        raise EmptyContext(f"example {example.id} has no tokens at all")
    E = embed(table, tokens)
    h = ag.Var(np.zeros(params.config.hidden_size))
    for j in range(E.shape[0]):
        h = gru_cell(params.encoder, E[j], h)
    logit = ag.add(ag.dot(params.out_w, h), params.out_b)
    return float(ag.sigmoid(logit).value)


# ----------------------------------------------------------------- training


def loss_on_example(
    params: ModelParams, table: EmbeddingTable, example: Example
) -> tuple[float, ag.Var, list]:
    """Forward + BCE inside a fresh recording; returns (loss, node, tape)."""
    with ag.recording() as tape:
        prob, _, _ = _forward_core(params, table, example)
        p = ag.clamp(prob, nn.PROB_EPS, 1.0 - nn.PROB_EPS)
        y = float(example.label)
        loss = ag.sub(
            ag.scale(ag.log(p), -y),
            ag.scale(ag.log(ag.rsub_const(1.0, p)), 1.0 - y),
        )
    return float(loss.value), loss, tape


def example_loss_and_grads(
    params: ModelParams, table: EmbeddingTable, example: Example
) -> tuple[float, list[np.ndarray]]:
    """Loss and parameter gradients for a single example."""
    params.zero_grads()
    value, loss, tape = loss_on_example(params, table, example)
    ag.backward(loss, tape)
    return value, params.grads()
