"""Contrastive-divergence SGD with gradient monitoring and convergence diagnostics."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng as rngmod
from ._validation import DimensionError, as_binary
from .core import (RbmModel, free_energy_unchecked, hidden_probs, softplus,
                   visible_probs)


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    batch_size: int = 100
    cd_k: int = 1
    epochs: int = 10
    seed: int = 0
    ema_decay: float = 0.9
    wd_decay: float = 0.9

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.cd_k < 1:
            raise ValueError("cd_k must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        for name in ("ema_decay", "wd_decay"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")


class GradientStats:
    """Exponentially smoothed absolute gradients, one entry per parameter."""

    def __init__(self, n_visible: int, n_hidden: int, decay: float = 0.9):
        self.decay = decay
        self.g_b = np.zeros(n_visible)
        self.g_c = np.zeros(n_hidden)
        self.g_W = np.zeros((n_visible, n_hidden))
        self.step = 0

    def update(self, db, dc, dW) -> None:
        a = self.decay
        self.g_b = a * self.g_b + (1.0 - a) * np.abs(db)
        self.g_c = a * self.g_c + (1.0 - a) * np.abs(dc)
        self.g_W = a * self.g_W + (1.0 - a) * np.abs(dW)
        self.step += 1

    def insert_hidden(self, pos: int, parent: int) -> None:
        self.g_c = np.insert(self.g_c, pos, self.g_c[parent])
        self.g_W = np.insert(self.g_W, pos, self.g_W[:, parent], axis=1)

    def remove_hidden(self, j: int) -> None:
        self.g_c = np.delete(self.g_c, j)
        self.g_W = np.delete(self.g_W, j, axis=1)

    @property
    def n_hidden(self) -> int:
        return self.g_c.size


class WalkingDistance:
    """Smoothed per-hidden-unit movement of the weight columns."""

    def __init__(self, n_hidden: int, decay: float = 0.9):
        self.decay = decay
        self.wd = np.zeros(n_hidden)

    def step(self, W_prev, W_cur) -> "WalkingDistance":
        return walking_distance_step(self, W_prev, W_cur)

    def insert_hidden(self, pos: int, parent: int) -> None:
        self.wd = np.insert(self.wd, pos, self.wd[parent])

    def remove_hidden(self, j: int) -> None:
        self.wd = np.delete(self.wd, j)


def walking_distance_step(wd: WalkingDistance, W_prev, W_cur) -> WalkingDistance:
    W_prev = np.asarray(W_prev, dtype=np.float64)
    W_cur = np.asarray(W_cur, dtype=np.float64)
    if W_prev.shape != W_cur.shape:
        raise DimensionError(f"weight snapshots differ in shape: "
                             f"{W_prev.shape} vs {W_cur.shape}")
    if W_cur.shape[1] != wd.wd.size:
        raise DimensionError(f"{W_cur.shape[1]} weight columns but "
                             f"{wd.wd.size} walking distances")
    dist = np.linalg.norm(W_cur - W_prev, axis=0)
    wd.wd = wd.decay * wd.wd + (1.0 - wd.decay) * dist
    return wd


@dataclass
class BoundGaps:
    gap_b: float
    gap_c: float
    gap_W: float


def spectral_norm(M, tol: float = 1e-8, max_iter: int = 1000,
                  squarings: int = 16) -> float:
    """Largest singular value by power iteration on the Gram matrix.

    The start vector is the normalised all-ones vector pushed through
    ``G**(2**squarings)`` (``G`` = M^T M or M M^T, whichever is smaller,
    formed by repeated normalised squaring).  Plain power iteration on ``G``
    then runs until the eigen-residual ``|G v - lam v|`` drops below
    ``tol * lam`` or ``max_iter`` sweeps are done.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.size == 0:
        raise ValueError("spectral_norm needs a non-empty 2-D matrix")
    scale = np.abs(M).max()
    if scale == 0.0:
        return 0.0
    M = M / scale
    G = M.T @ M if M.shape[1] <= M.shape[0] else M @ M.T
    n = G.shape[0]
    P = G / np.abs(G).max()
    for _ in range(squarings):
        P = P @ P
        P /= np.abs(P).max()
    v = P @ np.full(n, 1.0 / np.sqrt(n))
    if np.linalg.norm(v) < 1e-8:
        # all-ones start orthogonal to the dominant subspace
        v = P[:, np.argmax(np.linalg.norm(P, axis=0))]
    v = v / np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = G @ v
        lam = float(v @ w)
        if np.linalg.norm(w - lam * v) <= tol * lam:
            break
        v = w / np.linalg.norm(w)
    return float(scale * np.sqrt(lam))


def bound_gaps(prev: RbmModel, cur: RbmModel) -> BoundGaps:
    """Quadratic Lipschitz terms of the per-group log-partition bounds."""
    if prev.W.shape != cur.W.shape:
        raise DimensionError(f"snapshots have shapes {prev.W.shape} and "
                             f"{cur.W.shape}")
    I, J = cur.W.shape
    return BoundGaps(
        gap_b=I / 2.0 * float(np.max((cur.b - prev.b) ** 2)),
        gap_c=J / 2.0 * float(np.max((cur.c - prev.c) ** 2)),
        gap_W=I * J * spectral_norm(cur.W - prev.W) ** 2,
    )


def cd_gradients(model: RbmModel, batch, k: int, rng):
    """CD-k estimate of the log-likelihood gradient (ascent direction)."""
    V = as_binary(batch, model.n_visible, "batch")
    if V.ndim == 1:
        V = V[None, :]
    if V.shape[0] == 0:
        raise ValueError("empty batch")
    if k < 1:
        raise ValueError("k must be >= 1")
    return _cd(model, V, k, rng)


def _cd(model, V, k, rng):
    ph_data = hidden_probs(model, V)
    ph = ph_data
    for _ in range(k):
        h = (rng.random(ph.shape) < ph).astype(np.float64)
        pv = visible_probs(model, h)
        v_model = (rng.random(pv.shape) < pv).astype(np.float64)
        ph = hidden_probs(model, v_model)
    n = V.shape[0]
    db = (V - v_model).mean(axis=0)
    dc = (ph_data - ph).mean(axis=0)
    dW = (V.T @ ph_data - v_model.T @ ph) / n
    return db, dc, dW


@dataclass
class RunMetrics:
    epoch: int
    mean_free_energy: float
    recon_error: float
    grad_b: float
    grad_c: float
    grad_w: float
    gap_b: float
    gap_c: float
    gap_w: float
    hidden_count: int
    events: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def reconstruction_error(model: RbmModel, V) -> float:
    """Mean per-pixel cross-entropy of the mean-field one-step reconstruction."""
    V = np.asarray(V, dtype=np.float64)
    logits = model.b + hidden_probs(model, V) @ model.W.T
    return float(np.mean(softplus(logits) - V * logits))


def mean_free_energy(model: RbmModel, V) -> float:
    return float(np.mean(free_energy_unchecked(model, np.asarray(V, np.float64))))


def sgd_epoch(model: RbmModel, data, cfg: TrainConfig, stats: GradientStats,
              epoch: int) -> RunMetrics:
    """One pass of minibatch CD-k SGD; ``model`` and ``stats`` are updated in place.

    The visiting order and every minibatch's sampling stream are keyed by
    ``(cfg.seed, epoch)``, so the epoch is reproducible on its own.
    """
    V = as_binary(data, model.n_visible, "data")
    if V.ndim != 2 or V.shape[0] == 0:
        raise ValueError("data must be a non-empty sample matrix")
    if stats.n_hidden != model.n_hidden:
        raise DimensionError(f"gradient stats track {stats.n_hidden} hidden "
                             f"units, model has {model.n_hidden}")
    start = model.copy()
    order = rngmod.make_rng(cfg.seed, rngmod.SHUFFLE, epoch).permutation(V.shape[0])
    sums = np.zeros(3)
    n_batches = 0
    lr = cfg.learning_rate
    for batch_idx, lo in enumerate(range(0, V.shape[0], cfg.batch_size)):
        batch = V[order[lo:lo + cfg.batch_size]]
        rng = rngmod.make_rng(cfg.seed, rngmod.CD, epoch, batch_idx)
        db, dc, dW = _cd(model, batch, cfg.cd_k, rng)
        model.b += lr * db
        model.c += lr * dc
        model.W += lr * dW
        model.step += 1
        stats.update(db, dc, dW)
        sums += (np.abs(db).mean(), np.abs(dc).mean(), np.abs(dW).mean())
        n_batches += 1
    if not model.is_finite():
        raise FloatingPointError(f"non-finite parameters after epoch {epoch}")
    gaps = bound_gaps(start, model)
    grad = sums / n_batches
    return RunMetrics(
        epoch=epoch,
        mean_free_energy=mean_free_energy(model, V),
        recon_error=reconstruction_error(model, V),
        grad_b=float(grad[0]), grad_c=float(grad[1]), grad_w=float(grad[2]),
        gap_b=gaps.gap_b, gap_c=gaps.gap_c, gap_w=gaps.gap_W,
        hidden_count=model.n_hidden,
    )
