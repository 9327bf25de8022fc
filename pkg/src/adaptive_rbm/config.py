"""Flat ``key = value`` run configuration.

Keys are the field names of :class:`TrainConfig` and :class:`AdaptiveConfig`
plus a handful of run/data settings.  ``#`` starts a comment.  ``auto``
selects the built-in rule for the two optional adaptive settings.
"""
from __future__ import annotations

from dataclasses import fields
from pathlib import Path

from .adaptive import AdaptiveConfig
from .training import TrainConfig


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(kind):
    def parse(text: str):
        return None if text.strip().lower() in ("auto", "none", "") else kind(text)
    return parse


def _str(text: str) -> str:
    return text.strip()


# key -> (parser, default)
RUN_FIELDS = {
    "dataset": (_str, "bars_and_stripes"),
    "initial_hidden": (int, 10),
    "adaptive": (_bool, True),
    "checkpoint_every": (int, 0),
    "subset": (int, 0),
    "test_subset": (int, 0),
    "binarize_threshold": (float, 0.5),
    "zca_epsilon": (float, 0.1),
    "bars_size": (int, 4),
    "bars_samples": (int, 1000),
    "train_file": (_str, ""),
    "test_file": (_str, ""),
    "head_epochs": (int, 100),
    "head_learning_rate": (float, 0.1),
}

_TRAIN_TYPES = {"learning_rate": float, "batch_size": int, "cd_k": int,
                "epochs": int, "seed": int, "ema_decay": float,
                "wd_decay": float}
_ADAPTIVE_TYPES = {"theta_g": float, "theta_a": float, "alpha_c": float,
                   "alpha_w": float, "gen_start_epoch": int,
                   "max_hidden": int,
                   "annihilation_start_epoch": _optional(int),
                   "patience": int, "max_generations_per_epoch": int,
                   "child_noise": _optional(float)}


def _defaults() -> dict:
    out = {f.name: f.default for f in fields(TrainConfig)}
    out.update({f.name: f.default for f in fields(AdaptiveConfig)})
    out.update({k: d for k, (_, d) in RUN_FIELDS.items()})
    return out


PARSERS = {**_TRAIN_TYPES, **_ADAPTIVE_TYPES,
           **{k: p for k, (p, _) in RUN_FIELDS.items()}}
KEYS = tuple(PARSERS)


def set_value(cfg: dict, key: str, text: str) -> None:
    if key not in PARSERS:
        raise ConfigError(f"unknown config key: {key}", key)
    try:
        cfg[key] = PARSERS[key](text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}", key) from None


def parse_text(text: str, base: dict | None = None) -> dict:
    cfg = _defaults() if base is None else dict(base)
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        set_value(cfg, key, value)
    return cfg


def load(path=None) -> dict:
    if path is None:
        return _defaults()
    return parse_text(Path(path).read_text())


def dump_text(cfg: dict) -> str:
    lines = []
    for key in KEYS:
        value = cfg[key]
        if value is None:
            value = "auto"
        elif isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def train_config(cfg: dict) -> TrainConfig:
    try:
        return TrainConfig(**{k: cfg[k] for k in _TRAIN_TYPES})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def adaptive_config(cfg: dict) -> AdaptiveConfig | None:
    if not cfg["adaptive"]:
        return None
    try:
        return AdaptiveConfig(**{k: cfg[k] for k in _ADAPTIVE_TYPES})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
