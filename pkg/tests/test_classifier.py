import numpy as np
import pytest

import oracles
from adaptive_rbm import DimensionError, RbmModel, checkpoint, make_rng
from adaptive_rbm.classifier import (MissingLabelsError, SoftmaxHead, accuracy,
                                     loss_and_grads, predict, train_head)
from adaptive_rbm.data import bars_and_stripes


def _separable():
    # class k lights up visible unit k; one hidden unit copies each visible unit
    X = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1]] * 4, dtype=float)
    y = np.array([0, 1, 2] * 4)
    m = RbmModel(np.zeros(3), np.full(3, -2.0), 4.0 * np.eye(3))
    return m, X, y


def test_separable_toy_reaches_full_accuracy():
    m, X, y = _separable()
    head, _ = train_head(m, X, y, epochs=200, lr=0.5, batch_size=4)
    assert accuracy(m, head, X, y) == 1.0


def test_zero_learning_rate_leaves_head_unchanged():
    m, X, y = _separable()
    head, _ = train_head(m, X, y, epochs=5, lr=0.0)
    assert not head.U.any() and not head.d.any()


def test_accuracy_examples():
    m = RbmModel.zeros(2, 1)
    head = SoftmaxHead([[0.0, 0.0]], [0.0, 1.0])
    X = np.zeros((4, 2))
    assert accuracy(m, head, X, [1, 1, 1, 1]) == 1.0
    assert accuracy(m, head, X, [0, 0, 0, 0]) == 0.0
    assert accuracy(m, head, X, [1, 0, 1, 0]) == 0.5


def test_ties_go_to_lowest_index():
    m = RbmModel.zeros(2, 1)
    head = SoftmaxHead.zeros(1, 3)
    assert predict(m, head, np.zeros((2, 2))).tolist() == [0, 0]


def test_missing_labels_and_stale_head():
    m, X, _ = _separable()
    with pytest.raises(MissingLabelsError):
        train_head(m, X, None)
    with pytest.raises(MissingLabelsError):
        accuracy(m, SoftmaxHead.zeros(3, 3), X, None)
    with pytest.raises(DimensionError):
        predict(m, SoftmaxHead.zeros(4, 3), X)


def test_gradients_match_finite_differences(random_model):
    m = random_model(4, 3, seed=11)
    rng = np.random.default_rng(2)
    head = SoftmaxHead(rng.normal(size=(3, 3)), rng.normal(size=3))
    X = (rng.random((5, 4)) < 0.5).astype(float)
    y = np.array([0, 2, 1, 1, 0])
    _, grads = loss_and_grads(m, head, X, y)
    targets = {"U": head.U, "d": head.d, "W": m.W, "c": m.c}

    def f():
        return loss_and_grads(m, head, X, y)[0]

    for name, arr in targets.items():
        numeric = oracles.central_difference(f, arr)
        scale = max(np.abs(numeric).max(), 1e-8)
        assert np.abs(grads[name] - numeric).max() / scale < 1e-4, name


def test_fine_tune_off_keeps_model_bytes(tmp_path):
    ds = bars_and_stripes(3)
    m = RbmModel.initialize(9, 4, make_rng(0))
    checkpoint.save(tmp_path / "m.grbm", m)
    before = (tmp_path / "m.grbm").read_bytes()
    _, out = train_head(m, ds.as_float(), ds.labels, epochs=20)
    assert out is m
    checkpoint.save(tmp_path / "m.grbm", m)
    assert (tmp_path / "m.grbm").read_bytes() == before


def test_fine_tune_on_changes_a_copy():
    ds = bars_and_stripes(3)
    m = RbmModel.initialize(9, 4, make_rng(0))
    orig = m.copy()
    _, tuned = train_head(m, ds.as_float(), ds.labels, epochs=20, fine_tune=True)
    assert m.same_as(orig)
    assert not tuned.same_as(orig)
    assert tuned.b.tobytes() == orig.b.tobytes()


def test_fine_tuning_lowers_training_loss():
    ds = bars_and_stripes(3)
    X, y = ds.as_float(), ds.labels
    m = RbmModel.initialize(9, 6, make_rng(1))
    h0, _ = train_head(m, X, y, epochs=200, lr=0.5, batch_size=7)
    h1, m1 = train_head(m, X, y, epochs=200, lr=0.5, batch_size=7, fine_tune=True)
    assert loss_and_grads(m1, h1, X, y)[0] < loss_and_grads(m, h0, X, y)[0]


def test_reordering_with_permuted_head_keeps_predictions(random_model):
    m = random_model(5, 4, seed=3)
    rng = np.random.default_rng(0)
    head = SoftmaxHead(rng.normal(size=(4, 3)), rng.normal(size=3))
    perm = np.array([2, 0, 3, 1])
    m2 = RbmModel(m.b, m.c[perm], m.W[:, perm])
    head2 = SoftmaxHead(head.U[perm], head.d)
    X = (rng.random((30, 5)) < 0.5).astype(float)
    assert np.array_equal(predict(m, head, X), predict(m2, head2, X))
