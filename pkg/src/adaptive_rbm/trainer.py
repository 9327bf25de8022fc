"""Epoch loop tying CD training to the structural hook."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rng as rngmod
from ._validation import as_binary
from .adaptive import AdaptiveConfig, AdaptiveState, adaptive_epoch_hook
from .core import RbmModel
from .training import (GradientStats, RunMetrics, TrainConfig, WalkingDistance,
                       sgd_epoch)


@dataclass
class TrainResult:
    model: RbmModel
    stats: GradientStats
    walking: WalkingDistance
    history: list = field(default_factory=list)
    events: list = field(default_factory=list)

    @property
    def hidden_counts(self) -> list[int]:
        return [m.hidden_count for m in self.history]


def train(data, cfg: TrainConfig, *, n_hidden: int | None = None,
          model: RbmModel | None = None, adaptive: AdaptiveConfig | None = None,
          on_epoch: Callable | None = None) -> TrainResult:
    """Train for ``cfg.epochs`` epochs (numbered from 1).

    Either pass an initial ``model`` (edited in place) or ``n_hidden`` to
    build one from the run seed.  ``on_epoch(metrics, model, events)`` is
    called after every epoch, once structural edits are done.
    """
    V = as_binary(data, None, "data")
    if V.ndim != 2 or V.shape[0] == 0:
        raise ValueError("data must be a non-empty sample matrix")
    if model is None:
        if n_hidden is None:
            raise ValueError("pass either model or n_hidden")
        model = RbmModel.initialize(V.shape[1], n_hidden,
                                    rngmod.make_rng(cfg.seed, rngmod.INIT))
    if adaptive is not None and adaptive.max_hidden < model.n_hidden:
        raise ValueError("max_hidden is smaller than the initial hidden count")
    stats = GradientStats(model.n_visible, model.n_hidden, cfg.ema_decay)
    walking = WalkingDistance(model.n_hidden, cfg.wd_decay)
    state = AdaptiveState()
    result = TrainResult(model, stats, walking, events=state.events)

    for epoch in range(1, cfg.epochs + 1):
        W_prev = model.W.copy()
        metrics: RunMetrics = sgd_epoch(model, V, cfg, stats, epoch)
        walking.step(W_prev, model.W)
        events = []
        if adaptive is not None:
            events = adaptive_epoch_hook(model, stats, V, adaptive, epoch,
                                         cfg.seed, state, walking)
            metrics.events = [ev.stream_record() for ev in events]
            metrics.hidden_count = model.n_hidden
        result.history.append(metrics)
        if on_epoch is not None:
            on_epoch(metrics, model, events)
    return result
