"""Binary-binary RBM: parameters, energy, conditionals and exact oracles.

The energy of a joint configuration is

    E(v, h) = -b.v - c.h - v.W.h

with ``b`` the visible biases (length I), ``c`` the hidden biases (length J)
and ``W`` the I x J coupling matrix.  All arithmetic is float64.

The ``exact_*`` functions enumerate configurations and are meant for small
models only (I + J <= ``MAX_ENUMERATION``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from ._validation import (CapacityError, DimensionError, as_binary,
                          check_probabilities)

MAX_ENUMERATION = 24
_CHUNK = 1 << 15


@dataclass(eq=False)
class RbmModel:
    """Parameters of a binary RBM.

    ``step`` counts SGD minibatch updates applied so far; it is persisted in
    checkpoints.
    """

    b: np.ndarray
    c: np.ndarray
    W: np.ndarray
    step: int = 0

    def __post_init__(self):
        self.b = np.array(self.b, dtype=np.float64).reshape(-1)
        self.c = np.array(self.c, dtype=np.float64).reshape(-1)
        self.W = np.array(self.W, dtype=np.float64)
        self.check()

    def check(self) -> None:
        if self.W.ndim != 2:
            raise DimensionError(f"W must be 2-D, got shape {self.W.shape}")
        if self.W.shape != (self.b.size, self.c.size):
            raise DimensionError(
                f"W has shape {self.W.shape}, expected "
                f"({self.b.size}, {self.c.size}) from len(b), len(c)")
        if self.c.size < 1:
            raise DimensionError("an RBM needs at least one hidden unit")
        if self.b.size < 1:
            raise DimensionError("an RBM needs at least one visible unit")

    @property
    def n_visible(self) -> int:
        return self.b.size

    @property
    def n_hidden(self) -> int:
        return self.c.size

    @classmethod
    def zeros(cls, n_visible: int, n_hidden: int) -> "RbmModel":
        return cls(np.zeros(n_visible), np.zeros(n_hidden),
                   np.zeros((n_visible, n_hidden)))

    @classmethod
    def initialize(cls, n_visible: int, n_hidden: int,
                   rng: np.random.Generator) -> "RbmModel":
        """Zero biases, weights uniform in +-0.01/sqrt(I)."""
        scale = 0.01 / np.sqrt(n_visible)
        W = rng.uniform(-scale, scale, size=(n_visible, n_hidden))
        return cls(np.zeros(n_visible), np.zeros(n_hidden), W)

    def copy(self) -> "RbmModel":
        return RbmModel(self.b.copy(), self.c.copy(), self.W.copy(), self.step)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.c))
                    and np.all(np.isfinite(self.W)))

    def same_as(self, other: "RbmModel") -> bool:
        """Bit-for-bit equality of all parameters and the step counter."""
        return (self.step == other.step
                and self.W.shape == other.W.shape
                and self.b.tobytes() == other.b.tobytes()
                and self.c.tobytes() == other.c.tobytes()
                and self.W.tobytes() == other.W.tobytes())


def softplus(x):
    """log(1 + exp(x)) without overflow."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def energy(model: RbmModel, v, h):
    """Energy of (v, h); rows of 2-D inputs are evaluated pairwise."""
    v = as_binary(v, model.n_visible, "v")
    h = as_binary(h, model.n_hidden, "h")
    coupling = np.sum((v @ model.W) * h, axis=-1)
    return -(v @ model.b) - (h @ model.c) - coupling


def hidden_conditional(model: RbmModel, v):
    """p(h_j = 1 | v) for every hidden unit."""
    v = as_binary(v, model.n_visible, "v")
    return hidden_probs(model, v)


def visible_conditional(model: RbmModel, h):
    """p(v_i = 1 | h) for every visible unit."""
    h = as_binary(h, model.n_hidden, "h")
    return visible_probs(model, h)


def hidden_probs(model: RbmModel, v: np.ndarray) -> np.ndarray:
    # unchecked; v may also hold probabilities (mean-field)
    return expit(model.c + v @ model.W)


def visible_probs(model: RbmModel, h: np.ndarray) -> np.ndarray:
    return expit(model.b + h @ model.W.T)


def sample_binary(probs, rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli draws, one per entry of ``probs``."""
    probs = check_probabilities(probs)
    return (rng.random(probs.shape) < probs).astype(np.float64)


def free_energy(model: RbmModel, v):
    """-log sum_h exp(-E(v, h)), in closed form."""
    v = as_binary(v, model.n_visible, "v")
    return free_energy_unchecked(model, v)


def free_energy_unchecked(model: RbmModel, v: np.ndarray):
    return -(v @ model.b) - np.sum(softplus(model.c + v @ model.W), axis=-1)


def binary_states(n: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Rows are the binary expansions of start..stop-1 (most significant bit first)."""
    stop = (1 << n) if stop is None else stop
    codes = np.arange(start, stop, dtype=np.int64)[:, None]
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((codes >> shifts) & 1).astype(np.float64)


def _check_enumerable(model: RbmModel) -> None:
    total = model.n_visible + model.n_hidden
    if total > MAX_ENUMERATION:
        raise CapacityError(
            f"exact enumeration needs I + J <= {MAX_ENUMERATION}, "
            f"model has I + J = {total}")


def log_partition(model: RbmModel) -> float:
    """log Z, enumerating hidden states and summing visible units out."""
    _check_enumerable(model)
    J = model.n_hidden
    parts = []
    for start in range(0, 1 << J, _CHUNK):
        h = binary_states(J, start, min(start + _CHUNK, 1 << J))
        parts.append(logsumexp(h @ model.c
                               + np.sum(softplus(model.b + h @ model.W.T), axis=1)))
    return float(logsumexp(parts))


def exact_partition(model: RbmModel) -> float:
    """Z = sum over all (v, h) of exp(-E(v, h))."""
    return float(np.exp(log_partition(model)))


def exact_marginal(model: RbmModel, v):
    """p(v) by exact normalisation."""
    v = as_binary(v, model.n_visible, "v")
    return np.exp(-free_energy_unchecked(model, v) - log_partition(model))


def exact_log_likelihood(model: RbmModel, v):
    """log p(v) for each row of ``v``."""
    v = as_binary(v, model.n_visible, "v")
    return -free_energy_unchecked(model, v) - log_partition(model)


def gibbs_sample(model: RbmModel, n_samples: int, rng: np.random.Generator,
                 burn_in: int = 1000, thin: int = 10,
                 n_chains: int = 1) -> np.ndarray:
    """Draw visible samples from block Gibbs chains.

    ``n_chains`` independent chains start from uniform random states, run
    ``burn_in`` sweeps, then keep every ``thin``-th state until
    ``n_samples`` states have been collected in total.
    """
    if n_samples < 1 or n_chains < 1 or thin < 1 or burn_in < 0:
        raise ValueError("n_samples, n_chains and thin must be positive")
    per_chain = -(-n_samples // n_chains)
    v = (rng.random((n_chains, model.n_visible)) < 0.5).astype(np.float64)

    def sweep(v):
        h = (rng.random((n_chains, model.n_hidden))
             < hidden_probs(model, v)).astype(np.float64)
        return (rng.random(v.shape) < visible_probs(model, h)).astype(np.float64)

    for _ in range(burn_in):
        v = sweep(v)
    out = np.empty((per_chain, n_chains, model.n_visible))
    for s in range(per_chain):
        for _ in range(thin):
            v = sweep(v)
        out[s] = v
    return out.reshape(-1, model.n_visible)[:n_samples]
