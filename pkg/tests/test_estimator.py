"""sklearn-compatibility tests for the estimator wrapper."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rulechain.datagen import PEOPLE, GenerationSpec, generate_dataset
from rulechain.embeddings import load_fixture
from rulechain.estimator import IterativeMemoryClassifier, as_example, validate_inputs


@pytest.fixture(scope="module")
def data():
    spec = GenerationSpec(
        category=PEOPLE, depths=(2,), counts={"train": {2: 32}, "dev": {2: 16}}, seed=3
    )
    splits = generate_dataset(spec)
    X_train = splits["train"].examples
    y_train = np.array([int(e.label) for e in X_train])
    X_test = splits["dev"].examples
    y_test = np.array([int(e.label) for e in X_test])
    return X_train, y_train, X_test, y_test


@pytest.fixture(scope="module")
def fitted(data):
    X_train, y_train, _, _ = data
    clf = IterativeMemoryClassifier(
        hidden_size=8, epochs=2, seed=0, embeddings=load_fixture()
    )
    return clf.fit(X_train, y_train)


def test_get_set_params_round_trip():
    clf = IterativeMemoryClassifier(hidden_size=8, epochs=3)
    params = clf.get_params()
    assert params["hidden_size"] == 8
    assert params["epochs"] == 3
    assert params["variant"] == "gate"
    clf.set_params(epochs=5, variant="softmax")
    assert clf.epochs == 5 and clf.variant == "softmax"


def test_clone_preserves_params():
    clf = IterativeMemoryClassifier(hidden_size=12, iterations=2, seed=9)
    twin = clone(clf)
    assert twin.get_params() == clf.get_params()


def test_predict_before_fit_raises(data):
    _, _, X_test, _ = data
    with pytest.raises(NotFittedError):
        IterativeMemoryClassifier().predict(X_test)


def test_fit_predict_shapes_and_types(fitted, data):
    _, _, X_test, _ = data
    proba = fitted.predict_proba(X_test)
    assert proba.shape == (len(X_test), 2)
    assert np.allclose(proba.sum(axis=1), 1.0)
    preds = fitted.predict(X_test)
    assert preds.shape == (len(X_test),)
    assert set(np.unique(preds)) <= {0, 1}
    assert np.array_equal(fitted.classes_, [0, 1])


def test_score_uses_accuracy(fitted, data):
    _, _, X_test, y_test = data
    score = fitted.score(X_test, y_test)
    preds = fitted.predict(X_test)
    assert score == np.mean(preds == y_test)


def test_fit_accepts_dict_and_pair_records(data):
    X_train, y_train, _, _ = data
    dict_rows = [
        {"context": list(e.context), "question": e.question} for e in X_train[:8]
    ]
    pair_rows = [(list(e.context), e.question) for e in X_train[:8]]
    y = y_train[:8]
    for rows in (dict_rows, pair_rows):
        clf = IterativeMemoryClassifier(
            hidden_size=8, epochs=1, embeddings=load_fixture()
        )
        clf.fit(rows, y)
        assert clf.predict(rows).shape == (8,)


def test_validate_inputs_rejects_bad_rows():
    with pytest.raises(ValueError):
        validate_inputs([])
    with pytest.raises(ValueError):
        validate_inputs([42])
    with pytest.raises(ValueError):
        validate_inputs([{"context": ["Anne is rough."]}])  # no question
    with pytest.raises(ValueError):
        validate_inputs([(["ctx"], "q")], y=np.array([0, 1]))  # length mismatch
    with pytest.raises(ValueError):
        validate_inputs([(["ctx"], "q")], y=np.array([3]))  # non-binary


def test_as_example_applies_label():
    ex = as_example((["Anne is rough."], "Anne is rough."), 0, label=True)
    assert ex.label is True
    assert ex.context == ("Anne is rough.",)


def test_fit_is_deterministic_across_instances(data):
    X_train, y_train, X_test, _ = data
    table = load_fixture()
    a = IterativeMemoryClassifier(hidden_size=8, epochs=1, embeddings=table)
    b = IterativeMemoryClassifier(hidden_size=8, epochs=1, embeddings=table)
    pa = a.fit(X_train, y_train).predict_proba(X_test)
    pb = b.fit(X_train, y_train).predict_proba(X_test)
    assert np.array_equal(pa, pb)
