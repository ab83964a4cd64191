"""Model tests: encoding, attention, unifier, iteration, forward passes."""

import math

import numpy as np
import pytest

from rulechain import autograd as ag
from rulechain import model as mdl
from rulechain import nn
from rulechain.datagen import Example
from rulechain.embeddings import EmbeddingTable, load_fixture
from rulechain.model import (
    AllMasked,
    EmptyContext,
    EncodedExample,
    IterationOverflow,
    IterationState,
    ModelConfig,
    ModelParams,
    attention,
    baseline_forward,
    encode,
    feature_vector,
    forward,
    forward_detail,
    iterate,
    unifier,
)
from rulechain.prng import Stream, derive_seed

EXAMPLE = Example(
    id="m1",
    context=(
        "Anne is rough.",
        "Anne is blue.",
        "Cold people are rough.",
        "Rough people are young.",
        "If Anne is green then Anne is blue.",
        "If someone is rough and nice then they are green.",
        "If someone is rough and furry then they are blue.",
        "All young people are cold.",
    ),
    question="Anne is cold.",
    label=True,
    depth=2,
)


@pytest.fixture(scope="module")
def table():
    return load_fixture()


def _params(variant="gate", **kw):
    defaults = dict(variant=variant, hidden_size=16, embed_dim=100,
                    attention_size=16, max_iterations=4, seed=0)
    defaults.update(kw)
    return ModelParams(ModelConfig(**defaults))


# ------------------------------------------------------------------ encode


def test_encode_shapes(table):
    params = _params(hidden_size=64, attention_size=64)
    enc = encode(table, params, EXAMPLE)
    assert enc.rules.shape == (8, 64)
    assert enc.q.shape == (64,)
    assert enc.C.shape[0] == 8 and enc.C.shape[2] == 100
    assert enc.mask.shape == enc.C.shape[:2]
    assert all(enc.mask[i].any() for i in range(8))


def test_encode_identical_sentences_identical_rows(table):
    params = _params()
    example = Example("dup", ("Anne is rough.", "Bob is young.", "Anne is rough."),
                      "Anne is rough.", True, 0)
    enc = encode(table, params, example)
    assert np.array_equal(enc.rules[0], enc.rules[2])
    assert not np.array_equal(enc.rules[0], enc.rules[1])


def test_encode_deterministic(table):
    params = _params()
    a = encode(table, params, EXAMPLE)
    b = encode(table, params, EXAMPLE)
    assert np.array_equal(a.q, b.q)
    assert np.array_equal(a.rules, b.rules)
    assert np.array_equal(a.C, b.C)


def test_encode_empty_context_rejected(table):
    params = _params()
    with pytest.raises(EmptyContext):
        encode(table, params, Example("e", (), "Anne is rough.", True, 0))


# ---------------------------------------------------------- feature vector


def test_feature_vector_hand_computed():
    s = np.array([1.0, 2.0, -1.0])
    q = np.array([0.5, 0.0, 3.0])
    r = np.array([2.0, 2.0, 1.0])
    got = feature_vector(s, q, r)
    expected = np.array(
        [1, 2, -1, 0.5, 0, 3, 2, 2, 1, 1, 0, 4, 2, 4, -1], dtype=float
    )
    assert np.array_equal(got, expected)


def test_feature_vector_zero_square_segment_when_equal():
    s = np.array([0.3, -0.7])
    out = feature_vector(s, np.array([1.0, 1.0]), s)
    assert np.array_equal(out[6:8], np.zeros(2))


def test_feature_vector_width_is_five_d():
    d = 64
    out = feature_vector(np.ones(d), np.ones(d), np.ones(d))
    assert out.shape == (5 * d,)


def test_feature_vector_shape_mismatch():
    with pytest.raises(nn.ShapeMismatch):
        feature_vector(np.ones(3), np.ones(4), np.ones(3))


# --------------------------------------------------------------- attention


def test_attention_single_rule_softmax_is_one(table):
    params = _params(variant="gate", hidden_size=8, attention_size=8)
    weights = attention(params, np.ones(8), np.ones(8), np.ones((1, 8)))
    assert np.allclose(weights, [1.0])


def test_attention_identical_rules_equal_weights(table):
    params = _params(variant="softmax", hidden_size=8, attention_size=8)
    rules = np.tile(np.linspace(-1, 1, 8), (3, 1))
    weights = attention(params, np.ones(8), np.zeros(8), rules)
    assert np.allclose(weights, weights[0])
    assert abs(weights.sum() - 1.0) < 1e-6


def test_attention_scalar_reference_three_rules():
    params = _params(variant="sigmoid", hidden_size=2, attention_size=3)
    s = np.array([0.2, -0.4])
    q = np.array([1.0, 0.5])
    rules = np.array([[0.3, 0.1], [-0.2, 0.9], [0.0, 0.0]])
    U, b1 = params.att_U.value, params.att_b1.value
    w, b2 = params.att_w.value, params.att_b2.value

    expected = []
    for r in rules:
        feat = list(s) + list(q) + list(r) + [(s[j] - r[j]) ** 2 for j in range(2)] \
            + [s[j] * r[j] for j in range(2)]
        score = float(b2)
        for k in range(3):
            inner = b1[k] + sum(U[k][j] * feat[j] for j in range(10))
            score += w[k] * math.tanh(inner)
        expected.append(1.0 / (1.0 + math.exp(-score)))

    got = attention(params, s, q, rules)
    assert np.allclose(got, expected, atol=1e-12)


def test_attention_linear_scorer_flag():
    kw = dict(hidden_size=4, attention_size=4)
    tanh_params = _params(variant="softmax", **kw)
    linear_params = _params(variant="softmax", attention_tanh=False, **kw)
    s, q = np.full(4, 2.0), np.full(4, -1.0)
    rules = np.array([[0.5, 1, -1, 0.25], [2.0, 0, 1, -0.5]])
    assert not np.allclose(
        attention(tanh_params, s, q, rules), attention(linear_params, s, q, rules)
    )


def test_attention_empty_rules_rejected():
    params = _params()
    with pytest.raises(nn.ShapeMismatch):
        attention(params, np.ones(16), np.ones(16), np.zeros((0, 16)))


# ----------------------------------------------------------------- unifier


def test_unifier_single_step_equals_gru_step(table):
    params = _params(hidden_size=8, attention_size=8)
    x = np.linspace(-0.5, 0.5, 100)
    s = np.linspace(0.2, -0.2, 8)
    got = unifier(params, x[None, :], np.array([True]), s)
    unifier_arrays = nn.GruParams(
        **{k: getattr(params.unifier, k).value
           for k in ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h")}
    )
    assert np.allclose(got, nn.gru_step(unifier_arrays, x, s), atol=1e-14)


def test_unifier_zero_weights_decay(table):
    params = _params(hidden_size=4, attention_size=4)
    for name in ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h"):
        getattr(params.unifier, name).value[...] = 0.0
    s = np.array([1.0, -2.0, 0.8, 4.0])
    L = 6
    C_i = np.zeros((L, 100))
    got = unifier(params, C_i, np.ones(L, dtype=bool), s)
    assert np.allclose(got, s * 0.5**L, atol=1e-14)


def test_unifier_is_left_fold_over_unmasked_rows(table):
    params = _params(hidden_size=8, attention_size=8)
    C_i = np.vstack([np.full(100, 0.1), np.zeros(100), np.full(100, -0.2)])
    mask = np.array([True, False, True])
    s = np.linspace(-1, 1, 8)
    unifier_arrays = nn.GruParams(
        **{k: getattr(params.unifier, k).value
           for k in ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h")}
    )
    h = s
    for j in (0, 2):  # masked row skipped, state carried
        h = nn.gru_step(unifier_arrays, C_i[j], h)
    assert np.allclose(unifier(params, C_i, mask, s), h, atol=1e-14)


def test_unifier_all_masked_rejected(table):
    params = _params()
    with pytest.raises(AllMasked):
        unifier(params, np.zeros((3, 100)), np.zeros(3, dtype=bool), np.zeros(16))


# ----------------------------------------------------------------- iterate


def test_iterate_single_rule_softmax_returns_reading(table):
    params = _params(variant="softmax", hidden_size=8, attention_size=8)
    example = Example("one", ("Anne is rough.",), "Anne is rough.", True, 0)
    enc = encode(table, params, example)
    state = IterationState(s=enc.q)
    nxt = iterate(params, enc, state)
    expected = unifier(params, enc.C[0], enc.mask[0], enc.q)
    assert np.allclose(nxt.s, expected, atol=1e-12)
    assert nxt.t == 1
    assert len(nxt.attention_trace) == 1
    assert np.allclose(nxt.attention_trace[0], [1.0])


def test_gate_scan_zero_gates_preserve_state():
    params = _params(variant="gate", hidden_size=8, attention_size=8)
    H = ag.Var(np.linspace(-1, 1, 24).reshape(3, 8))
    s = ag.Var(np.linspace(0.5, -0.5, 8))
    out = mdl._gate_scan(params, H, ag.Var(np.zeros(3)), s)
    assert np.array_equal(out.value, s.value)


def test_gate_scan_unit_gate_rewrites_state():
    params = _params(variant="gate", hidden_size=4, attention_size=4)
    H = ag.Var(np.ones((1, 4)))
    s = ag.Var(np.full(4, 9.0))
    gates = ag.Var(np.ones(1))
    out = mdl._gate_scan(params, H, gates, s)
    assert not np.allclose(out.value, s.value)
    assert np.all(np.abs(out.value) <= 1.0)  # pure tanh candidate


def test_iterate_overflow(table):
    params = _params(max_iterations=2)
    enc = encode(table, params, EXAMPLE)
    state = IterationState(s=enc.q, t=2)
    with pytest.raises(IterationOverflow):
        iterate(params, enc, state)


def test_iterate_trace_sums_to_one_for_softmax_modes(table):
    for variant in ("softmax", "gate"):
        params = _params(variant=variant)
        enc = encode(table, params, EXAMPLE)
        state = IterationState(s=enc.q)
        for _ in range(4):
            state = iterate(params, enc, state)
        for weights in state.attention_trace:
            assert abs(weights.sum() - 1.0) < 1e-6


def test_weighted_sum_variants_permutation_invariant(table):
    for variant in ("sigmoid", "softmax"):
        params = _params(variant=variant)
        enc = encode(table, params, EXAMPLE)
        state = IterationState(s=enc.q)
        base = iterate(params, enc, state)

        perm = list(range(len(EXAMPLE.context)))
        Stream(3).shuffle(perm)
        permuted = EncodedExample(
            q=enc.q, rules=enc.rules[perm], C=enc.C[perm], mask=enc.mask[perm]
        )
        shuffled = iterate(params, permuted, state)
        assert np.allclose(shuffled.s, base.s, atol=1e-10)
        assert np.allclose(shuffled.attention_trace[0], base.attention_trace[0][perm])


# ----------------------------------------------------------------- forward


def test_forward_in_open_unit_interval(table):
    for variant in mdl.VARIANTS:
        params = _params(variant=variant)
        p = forward(params, table, EXAMPLE)
        assert 0.0 < p < 1.0


def test_forward_zero_iterations_is_question_readout(table):
    params = _params(max_iterations=0)
    enc = encode(table, params, EXAMPLE)
    expected = 1.0 / (1.0 + math.exp(-(params.out_w.value @ enc.q + params.out_b.value)))
    assert forward(params, table, EXAMPLE) == pytest.approx(expected, abs=1e-15)


def test_forward_bit_deterministic(table):
    params = _params()
    assert forward(params, table, EXAMPLE) == forward(params, table, EXAMPLE)


def test_forward_detail_trace_and_states(table):
    params = _params()
    detail = forward_detail(params, table, EXAMPLE)
    assert len(detail.attention_trace) == 4
    assert len(detail.states) == 5
    assert all(w.shape == (8,) for w in detail.attention_trace)
    assert 0.0 < detail.probability < 1.0


def test_gate_weighted_sum_mode_matches_softmax_variant(table):
    gate_ws = _params(variant="gate", ga_combine="weighted-sum")
    soft = _params(variant="softmax")
    assert forward(gate_ws, table, EXAMPLE) == forward(soft, table, EXAMPLE)


def test_baseline_forward_range_and_empty_question(table):
    params = _params()
    assert 0.0 < baseline_forward(params, table, EXAMPLE) < 1.0
    no_question = Example("nq", EXAMPLE.context, "", True, 0)
    assert 0.0 < baseline_forward(params, table, no_question) < 1.0


def test_end_to_end_gradients_all_variants():
    """Small-probe version of the full gradient audit (acceptance runs 200+)."""
    from rulechain.cli import _grad_check_variant

    for variant in mdl.VARIANTS:
        assert _grad_check_variant(variant, probes=40, seed=0) < 1e-4


def test_model_params_checkpoint_round_trip(tmp_path, table):
    params = _params(variant="gate")
    p_before = forward(params, table, EXAMPLE)
    path = tmp_path / "model.ckpt"
    params.save(path)
    restored = ModelParams.load(path)
    assert restored.config == params.config
    assert forward(restored, table, EXAMPLE) == p_before
    for (n1, v1), (n2, v2) in zip(params.named_vars(), restored.named_vars()):
        assert n1 == n2
        assert np.array_equal(v1.value, v2.value)


def test_loss_matches_bce_of_forward(table):
    params = _params()
    prob = forward(params, table, EXAMPLE)
    value, _, _ = mdl.loss_on_example(params, table, EXAMPLE)
    assert value == pytest.approx(nn.bce_loss(prob, EXAMPLE.label), rel=1e-12)
