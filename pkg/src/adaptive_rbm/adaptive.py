"""Hidden-layer growth and pruning.

A hidden unit ``j`` spawns a neighbour when

    (alpha_c * gc_j) * (alpha_w * rms_i(gW_ij)) > theta_g

where ``gc`` and ``gW`` are the smoothed absolute gradients kept in
:class:`~adaptive_rbm.training.GradientStats`.  The child is inserted right
after its parent and inherits the parent's weight column (plus a little
noise) and hidden bias.

A hidden unit is removed when its mean activation ``p(h_j = 1 | v)`` over the
training set falls below ``theta_a``.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng as rngmod
from ._validation import CapacityError, DimensionError
from .core import RbmModel, hidden_probs
from .training import GradientStats, WalkingDistance

log = logging.getLogger(__name__)

GENERATED = "Generated"
ANNIHILATED = "Annihilated"


@dataclass
class AdaptiveConfig:
    theta_g: float = 0.005
    theta_a: float = 0.3
    alpha_c: float = 1.0
    alpha_w: float = 1.0
    gen_start_epoch: int = 10
    max_hidden: int = 1000
    # None: start pruning once ``patience`` consecutive epochs saw no growth
    annihilation_start_epoch: int | None = None
    patience: int = 20
    max_generations_per_epoch: int = 3
    # None: 0.01 / sqrt(I)
    child_noise: float | None = None

    def __post_init__(self):
        if not self.theta_g > 0:
            raise ValueError("theta_g must be > 0")
        if not 0.0 <= self.theta_a < 1.0:
            raise ValueError("theta_a must lie in [0, 1)")
        if not (self.alpha_c > 0 and self.alpha_w > 0):
            raise ValueError("alpha_c and alpha_w must be > 0")
        if self.max_hidden < 1 or self.max_generations_per_epoch < 0:
            raise ValueError("max_hidden must be >= 1")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")
        if self.child_noise is not None and self.child_noise < 0:
            raise ValueError("child_noise must be >= 0")

    def noise_for(self, n_visible: int) -> float:
        if self.child_noise is None:
            return 0.01 / np.sqrt(n_visible)
        return self.child_noise


@dataclass
class StructuralEvent:
    epoch: int
    kind: str
    neuron_index: int
    parent_index: int | None = None
    trigger_value: float = 0.0
    seq: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def stream_record(self) -> dict:
        """The compact form embedded in each metrics line."""
        return {"kind": self.kind, "index": self.neuron_index,
                "parent": self.parent_index, "trigger": self.trigger_value}


def replay(initial_hidden: int, events) -> int:
    """Hidden count after applying ``events`` to ``initial_hidden`` units."""
    J = initial_hidden
    for ev in events:
        J += 1 if ev.kind == GENERATED else -1
    return J


def generation_scores(stats: GradientStats, cfg: AdaptiveConfig) -> np.ndarray:
    """Per-unit left-hand side of the growth condition."""
    rms_w = np.sqrt(np.mean(stats.g_W ** 2, axis=0))
    return (cfg.alpha_c * stats.g_c) * (cfg.alpha_w * rms_w)


def generation_candidates(stats: GradientStats, cfg: AdaptiveConfig,
                          model: RbmModel | None = None) -> list[int]:
    """Units whose score exceeds ``theta_g``, strongest first, capped per epoch."""
    if model is not None and (stats.g_W.shape != model.W.shape):
        raise DimensionError(f"gradient stats {stats.g_W.shape} do not match "
                             f"model {model.W.shape}")
    score = generation_scores(stats, cfg)
    hits = np.flatnonzero(score > cfg.theta_g)
    # stable sort keeps lower indices first among equal scores
    hits = hits[np.argsort(-score[hits], kind="stable")]
    return [int(j) for j in hits[:cfg.max_generations_per_epoch]]


def generate_neuron(model: RbmModel, parent: int, cfg: AdaptiveConfig,
                    rng: np.random.Generator) -> int:
    """Insert a child of ``parent`` at ``parent + 1``; returns the child index.

    Edits ``model`` in place.  Raises :class:`CapacityError` (leaving the
    model untouched) when the hidden layer is already at ``cfg.max_hidden``.
    """
    J = model.n_hidden
    if not 0 <= parent < J:
        raise IndexError(f"parent {parent} out of range for J={J}")
    if J >= cfg.max_hidden:
        raise CapacityError(f"hidden layer already at max_hidden={cfg.max_hidden}")
    noise = cfg.noise_for(model.n_visible)
    column = model.W[:, parent].copy()
    if noise > 0:
        column = column + rng.uniform(-noise, noise, size=column.size)
    pos = parent + 1
    model.W = np.insert(model.W, pos, column, axis=1)
    model.c = np.insert(model.c, pos, model.c[parent])
    return pos


def annihilate(model: RbmModel, j: int) -> None:
    """Remove hidden unit ``j`` in place; refuses to empty the layer."""
    J = model.n_hidden
    if J <= 1:
        raise CapacityError("cannot remove the last hidden unit")
    if not 0 <= j < J:
        raise IndexError(f"unit {j} out of range for J={J}")
    model.W = np.delete(model.W, j, axis=1)
    model.c = np.delete(model.c, j)


def mean_activations(model: RbmModel, data) -> np.ndarray:
    V = np.asarray(data, dtype=np.float64)
    if V.ndim != 2 or V.shape[0] == 0:
        raise ValueError("data must be a non-empty sample matrix")
    if V.shape[1] != model.n_visible:
        raise DimensionError(f"data has {V.shape[1]} features, model expects "
                             f"{model.n_visible}")
    return hidden_probs(model, V).mean(axis=0)


def annihilation_candidates(model: RbmModel, data, cfg: AdaptiveConfig,
                            exempt=None) -> list[int]:
    """Units with mean activation below ``theta_a``, weakest first.

    Never returns so many that the layer would drop below one unit.
    """
    act = mean_activations(model, data)
    low = act < cfg.theta_a
    if exempt is not None:
        low &= ~np.asarray(exempt, dtype=bool)
    hits = np.flatnonzero(low)
    hits = hits[np.argsort(act[hits], kind="stable")]
    return [int(j) for j in hits[:model.n_hidden - 1]]


@dataclass
class AdaptiveState:
    """Bookkeeping the hook carries between epochs."""

    events: list = field(default_factory=list)
    last_generation_epoch: int | None = None
    quiet_epochs: int = 0
    pruning: bool = False


def adaptive_epoch_hook(model: RbmModel, stats: GradientStats, data,
                        cfg: AdaptiveConfig, epoch: int, seed: int,
                        state: AdaptiveState,
                        walking: WalkingDistance | None = None) -> list:
    """Apply growth, then pruning, at the end of ``epoch``.

    Edits ``model``, ``stats`` and ``walking`` in place and returns the
    events of this epoch (also appended to ``state.events``).
    """
    new_events = []
    born = np.zeros(model.n_hidden, dtype=bool)

    def record(**kw):
        ev = StructuralEvent(epoch=epoch, seq=len(state.events), **kw)
        state.events.append(ev)
        new_events.append(ev)

    if epoch >= cfg.gen_start_epoch:
        chosen = generation_candidates(stats, cfg, model)
        score = generation_scores(stats, cfg)
        rng = rngmod.make_rng(seed, rngmod.GENERATE, epoch)
        # rightmost parents first so indices of pending parents stay valid
        for parent in sorted(chosen, reverse=True):
            try:
                child = generate_neuron(model, parent, cfg, rng)
            except CapacityError as exc:
                log.info("epoch %d: generation skipped (%s)", epoch, exc)
                break
            stats.insert_hidden(child, parent)
            if walking is not None:
                walking.insert_hidden(child, parent)
            born = np.insert(born, child, True)
            record(kind=GENERATED, neuron_index=child, parent_index=parent,
                   trigger_value=float(score[parent]))
        if new_events:
            state.last_generation_epoch = epoch
            state.quiet_epochs = 0
        else:
            state.quiet_epochs += 1

    if cfg.annihilation_start_epoch is not None:
        state.pruning = epoch >= cfg.annihilation_start_epoch
    elif not state.pruning and epoch >= cfg.gen_start_epoch:
        state.pruning = state.quiet_epochs >= cfg.patience

    if state.pruning:
        act = mean_activations(model, data)
        doomed = annihilation_candidates(model, data, cfg, exempt=born)
        for j in sorted(doomed, reverse=True):
            annihilate(model, j)
            stats.remove_hidden(j)
            if walking is not None:
                walking.remove_hidden(j)
            record(kind=ANNIHILATED, neuron_index=j,
                   trigger_value=float(act[j]))
    return new_events
