"""Softmax output layer on top of RBM hidden probabilities.

The head scores a visible vector ``v`` as ``sigmoid(c + v W) U + d``.  Training
minimises mean cross-entropy with minibatch gradient descent; with
``fine_tune`` the gradient is also propagated into ``W`` and ``c``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax

from . import rng as rngmod
from ._validation import DimensionError
from .core import RbmModel, hidden_conditional, hidden_probs


class MissingLabelsError(ValueError):
    pass


@dataclass(eq=False)
class SoftmaxHead:
    U: np.ndarray  # J x K
    d: np.ndarray  # K

    def __post_init__(self):
        self.U = np.array(self.U, dtype=np.float64)
        self.d = np.array(self.d, dtype=np.float64).reshape(-1)
        if self.U.ndim != 2 or self.U.shape[1] != self.d.size:
            raise DimensionError(
                f"U {self.U.shape} and d {self.d.shape} disagree on K")

    @property
    def n_classes(self) -> int:
        return self.d.size

    @classmethod
    def zeros(cls, n_hidden: int, n_classes: int) -> "SoftmaxHead":
        return cls(np.zeros((n_hidden, n_classes)), np.zeros(n_classes))

    def copy(self) -> "SoftmaxHead":
        return SoftmaxHead(self.U.copy(), self.d.copy())


def features(model: RbmModel, v):
    return hidden_conditional(model, v)


def _check_head(model: RbmModel, head: SoftmaxHead) -> None:
    if head.U.shape[0] != model.n_hidden:
        raise DimensionError(
            f"head was built for J={head.U.shape[0]} hidden units, "
            f"model has J={model.n_hidden}")


def scores(model: RbmModel, head: SoftmaxHead, X) -> np.ndarray:
    _check_head(model, head)
    return hidden_probs(model, np.asarray(X, dtype=np.float64)) @ head.U + head.d


def predict(model: RbmModel, head: SoftmaxHead, X) -> np.ndarray:
    # argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(scores(model, head, X), axis=1)


def accuracy(model: RbmModel, head: SoftmaxHead, X, y) -> float:
    if y is None:
        raise MissingLabelsError("accuracy needs labels")
    y = np.asarray(y)
    return float(np.mean(predict(model, head, X) == y))


def loss_and_grads(model: RbmModel, head: SoftmaxHead, X, y):
    """Mean cross-entropy and its gradients w.r.t. U, d, W, c."""
    _check_head(model, head)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    H = hidden_probs(model, X)
    S = H @ head.U + head.d
    logp = log_softmax(S, axis=1)
    loss = -float(np.mean(logp[np.arange(n), y]))

    dS = softmax(S, axis=1)
    dS[np.arange(n), y] -= 1.0
    dS /= n
    dA = (dS @ head.U.T) * H * (1.0 - H)
    grads = {
        "U": H.T @ dS,
        "d": dS.sum(axis=0),
        "W": X.T @ dA,
        "c": dA.sum(axis=0),
    }
    return loss, grads


def train_head(model: RbmModel, X, y, *, epochs: int = 100, lr: float = 0.1,
               batch_size: int = 100, fine_tune: bool = False, seed: int = 0,
               n_classes: int | None = None, head: SoftmaxHead | None = None):
    """Fit a softmax head; returns ``(head, model)``.

    The returned model is a fine-tuned copy when ``fine_tune`` is set and the
    untouched input model otherwise.
    """
    if y is None:
        raise MissingLabelsError("training the classifier needs labels")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] != y.shape[0]:
        raise DimensionError(f"{X.shape[0]} samples but {y.shape[0]} labels")
    if X.shape[1] != model.n_visible:
        raise DimensionError(
            f"samples have {X.shape[1]} features, model expects {model.n_visible}")
    K = int(y.max()) + 1 if n_classes is None else int(n_classes)
    if K < 2:
        raise ValueError("need at least two classes")
    if y.min() < 0 or y.max() >= K:
        raise ValueError(f"labels must lie in [0, {K})")

    head = SoftmaxHead.zeros(model.n_hidden, K) if head is None else head.copy()
    _check_head(model, head)
    if fine_tune:
        model = model.copy()
    n = X.shape[0]
    for epoch in range(epochs):
        order = rngmod.make_rng(seed, rngmod.HEAD, epoch).permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            _, g = loss_and_grads(model, head, X[idx], y[idx])
            head.U -= lr * g["U"]
            head.d -= lr * g["d"]
            if fine_tune:
                model.W -= lr * g["W"]
                model.c -= lr * g["c"]
    return head, model
