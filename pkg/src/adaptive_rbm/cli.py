"""Command line entry point: ``adaptive-rbm {train,eval,probe}``.

Exit codes: 0 ok, 1 other failure, 2 configuration, 3 data, 4 missing
labels, 5 dimension mismatch.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, checkpoint
from . import classifier as clf
from . import config as cfgmod
from . import data as datamod
from . import rng as rngmod
from ._validation import CapacityError, DimensionError
from .adaptive import mean_activations
from .core import RbmModel, exact_log_likelihood, log_partition
from .trainer import train
from .training import bound_gaps

log = logging.getLogger("adaptive_rbm")

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_DATA, EXIT_LABELS, EXIT_DIM = 0, 1, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def build_config(args) -> dict:
    path = getattr(args, "config", None)
    try:
        if path is not None and str(path).endswith(".json"):
            manifest = json.loads(Path(path).read_text())
            cfg = cfgmod.load()
            for key, value in manifest["config"].items():
                cfgmod.set_value(cfg, key, "auto" if value is None else str(value))
        else:
            cfg = cfgmod.load(path)
        overrides = []
        for key in ("seed", "epochs", "subset"):
            value = getattr(args, key, None)
            if value is not None:
                overrides.append((key, str(value)))
        overrides += [tuple(s.split("=", 1)) if "=" in s else (s, "")
                      for s in getattr(args, "set", None) or []]
        for key, value in overrides:
            cfgmod.set_value(cfg, key.strip(), value.strip())
    except cfgmod.ConfigError:
        raise
    except OSError as exc:
        raise cfgmod.ConfigError(f"cannot read config: {exc}") from None
    return cfg


def load_datasets(cfg: dict, data_dir) -> tuple[datamod.Dataset, datamod.Dataset | None]:
    """Train and (optional) test sets as binary datasets."""
    name = cfg["dataset"]
    seed = cfg["seed"]
    data_dir = Path(data_dir) if data_dir else Path(".")
    if name == "bars_and_stripes":
        n, count = cfg["bars_size"], cfg["bars_samples"]
        train_ds = datamod.bars_and_stripes(n, exhaustive=count == 0,
                                            n_samples=count, seed=seed)
        test_ds = datamod.bars_and_stripes(n, exhaustive=count == 0,
                                           n_samples=count, seed=seed + 1)
        return train_ds, test_ds
    if name == "gdat":
        train_ds = datamod.load_dataset(cfg["train_file"])
        test_ds = datamod.load_dataset(cfg["test_file"]) if cfg["test_file"] else None
        return train_ds, test_ds
    if name == "mnist":
        train_raw = datamod.load_mnist(data_dir, "train")
        try:
            test_raw = datamod.load_mnist(data_dir, "test")
        except FileNotFoundError:
            test_raw = None
        train_raw, test_raw = _subsets(cfg, train_raw, test_raw)
        thr = cfg["binarize_threshold"]
        return train_raw.binarize(thr), test_raw and test_raw.binarize(thr)
    if name == "cifar10":
        train_raw = datamod.load_cifar10_dir(data_dir, "train")
        try:
            test_raw = datamod.load_cifar10_dir(data_dir, "test")
        except FileNotFoundError:
            test_raw = None
        train_raw, test_raw = _subsets(cfg, train_raw, test_raw)
        zca = datamod.zca_fit(train_raw.values, cfg["zca_epsilon"])
        train_raw.values = zca.transform(train_raw.values)
        if test_raw is not None:
            test_raw.values = zca.transform(test_raw.values)
        return train_raw.binarize(0.0), test_raw and test_raw.binarize(0.0)
    raise cfgmod.ConfigError(f"unknown dataset: {name}", "dataset")


def _subsets(cfg, train_raw, test_raw):
    def cut(raw, n, seed):
        if not n or n >= raw.values.shape[0]:
            return raw
        idx = datamod.stratified_subset(raw.labels, n, seed)
        return datamod.RawData(raw.values[idx], raw.labels[idx], raw.name, raw.digest)
    train_raw = cut(train_raw, cfg["subset"], cfg["seed"])
    if test_raw is not None:
        test_raw = cut(test_raw, cfg["test_subset"] or cfg["subset"], cfg["seed"] + 1)
    return train_raw, test_raw


@contextmanager
def run_lock(out_dir: Path):
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise CliError(f"{out_dir} is in use by another run (remove {lock} "
                       f"if stale)", EXIT_OTHER) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def cmd_train(args) -> int:
    cfg = build_config(args)
    tcfg = cfgmod.train_config(cfg)
    acfg = cfgmod.adaptive_config(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with run_lock(out):
        train_ds, test_ds = load_datasets(cfg, args.data_dir)
        if cfg["initial_hidden"] < 1:
            raise cfgmod.ConfigError("initial_hidden must be >= 1", "initial_hidden")
        (out / "data").mkdir(exist_ok=True)
        (out / "checkpoints").mkdir(exist_ok=True)
        datamod.save_dataset(out / "data" / "train.gdat", train_ds)
        if test_ds is not None:
            datamod.save_dataset(out / "data" / "test.gdat", test_ds)
        (out / "config.cfg").write_text(cfgmod.dump_text(cfg))
        manifest = {
            "artifact_version": __version__,
            "config": {k: cfg[k] for k in cfgmod.KEYS},
            "seed": cfg["seed"],
            "datasets": {"train": {"name": train_ds.name, "digest": train_ds.digest,
                                   "n": len(train_ds)},
                         "test": None if test_ds is None else
                         {"name": test_ds.name, "digest": test_ds.digest,
                          "n": len(test_ds)}},
            "start_time": _now(),
            "end_time": None,
            "outputs": {"metrics": "metrics.jsonl", "events": "events.jsonl",
                        "model": "model.grbm", "checkpoints": "checkpoints/",
                        "config": "config.cfg"},
        }
        _write_json(out / "manifest.json", manifest)

        X = train_ds.as_float()
        model = RbmModel.initialize(X.shape[1], cfg["initial_hidden"],
                                    rngmod.make_rng(tcfg.seed, rngmod.INIT))
        every = cfg["checkpoint_every"]
        with open(out / "metrics.jsonl", "w") as metrics_f, \
                open(out / "events.jsonl", "w") as events_f:
            def on_epoch(metrics, model, events):
                metrics_f.write(json.dumps(metrics.to_dict()) + "\n")
                metrics_f.flush()
                for ev in events:
                    events_f.write(json.dumps(ev.to_dict()) + "\n")
                events_f.flush()
                if every and metrics.epoch % every == 0:
                    checkpoint.save(out / "checkpoints" / f"epoch_{metrics.epoch:04d}.grbm",
                                    model)
                if not args.quiet:
                    log.info("epoch %d  F=%.4f  recon=%.4f  J=%d", metrics.epoch,
                             metrics.mean_free_energy, metrics.recon_error,
                             metrics.hidden_count)

            train(X, tcfg, model=model, adaptive=acfg, on_epoch=on_epoch)
        checkpoint.save(out / "model.grbm", model)
        manifest["end_time"] = _now()
        _write_json(out / "manifest.json", manifest)
    return EXIT_OK


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _eval_data(args, model_path: Path):
    if args.train_data:
        train_ds = datamod.load_dataset(args.train_data)
        test_ds = datamod.load_dataset(args.test_data) if args.test_data else None
        return train_ds, test_ds, 0
    if args.config:
        cfg = build_config(args)
        train_ds, test_ds = load_datasets(cfg, args.data_dir)
        return train_ds, test_ds, cfg["seed"]
    run_data = model_path.parent / "data"
    train_ds = datamod.load_dataset(run_data / "train.gdat")
    test_path = run_data / "test.gdat"
    test_ds = datamod.load_dataset(test_path) if test_path.exists() else None
    return train_ds, test_ds, 0


def cmd_eval(args) -> int:
    model_path = Path(args.model)
    model, head = checkpoint.load(model_path)
    if args.head:
        _, head = checkpoint.load(args.head)
        if head is None:
            raise CliError(f"{args.head} holds no classifier head", EXIT_DIM)
    train_ds, test_ds, seed = _eval_data(args, model_path)
    for ds in (train_ds, test_ds):
        if ds is not None and ds.labels is None:
            raise clf.MissingLabelsError(f"dataset {ds.name!r} has no labels")
        if ds is not None and ds.n_features != model.n_visible:
            raise DimensionError(f"dataset has {ds.n_features} features, "
                                 f"model expects {model.n_visible}")
    if head is not None and head.U.shape[0] != model.n_hidden:
        raise DimensionError(f"head expects J={head.U.shape[0]}, model has "
                             f"J={model.n_hidden}")
    if head is None or args.retrain:
        n_classes = int(train_ds.labels.max()) + 1
        if test_ds is not None:
            n_classes = max(n_classes, int(test_ds.labels.max()) + 1)
        head, model = clf.train_head(
            model, train_ds.as_float(), train_ds.labels, epochs=args.epochs,
            lr=args.lr, fine_tune=args.fine_tune, seed=seed, n_classes=n_classes)
    print(f"train_acc={clf.accuracy(model, head, train_ds.as_float(), train_ds.labels):.4f}")
    if test_ds is not None:
        print(f"test_acc={clf.accuracy(model, head, test_ds.as_float(), test_ds.labels):.4f}")
    if args.save:
        checkpoint.save(args.save, model, head)
    return EXIT_OK


def cmd_probe(args) -> int:
    model, _ = checkpoint.load(args.model)
    print(f"I={model.n_visible}")
    print(f"J={model.n_hidden}")
    print(f"step={model.step}")
    V = None
    if args.data:
        ds = datamod.load_dataset(args.data)
        if ds.n_features != model.n_visible:
            raise DimensionError(f"dataset has {ds.n_features} features, "
                                 f"model expects {model.n_visible}")
        V = ds.as_float()
    try:
        logz = log_partition(model)
    except CapacityError as exc:
        print(f"enumeration skipped: {exc}", file=sys.stderr)
    else:
        print(f"Z={np.exp(logz):.15g}")
        print(f"log_Z={logz:.17g}")
        if V is not None:
            ll = exact_log_likelihood(model, V)
            print(f"log_likelihood={ll.sum():.17g}")
            print(f"mean_log_likelihood={ll.mean():.17g}")
            for n, value in enumerate(ll[:args.max_rows]):
                print(f"ll[{n}]={value:.17g}")
    if V is not None:
        for j, a in enumerate(mean_activations(model, V)):
            print(f"activation[{j}]={a:.17g}")
    if args.compare:
        other, _ = checkpoint.load(args.compare)
        gaps = bound_gaps(other, model)
        print(f"gap_b={gaps.gap_b:.17g}")
        print(f"gap_c={gaps.gap_c:.17g}")
        print(f"gap_w={gaps.gap_W:.17g}")
    return EXIT_OK


def _common(p):
    p.add_argument("--config", help="key = value config file or a run manifest.json")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", default="run")
    p.add_argument("--data-dir")
    p.add_argument("--subset", type=int, help="stratified training subset size")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaptive-rbm", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an RBM and write a run directory")
    _common(p)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="fit a softmax head and report accuracy")
    _common(p)
    p.add_argument("model")
    p.add_argument("--train-data", help="GDAT training set")
    p.add_argument("--test-data", help="GDAT test set")
    p.add_argument("--head", help="container whose HEAD section to use")
    p.add_argument("--fine-tune", action="store_true")
    p.add_argument("--retrain", action="store_true",
                   help="train a new head even if the model carries one")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--save", help="write model + head container here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("probe", help="exact likelihoods, bound gaps, activations")
    _common(p)
    p.add_argument("model")
    p.add_argument("--compare", help="second checkpoint for bound gaps")
    p.add_argument("--data", help="GDAT dataset for likelihoods and activations")
    p.add_argument("--max-rows", type=int, default=20)
    p.set_defaults(func=cmd_probe)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except clf.MissingLabelsError as exc:
        print(f"label error: {exc}", file=sys.stderr)
        return EXIT_LABELS
    except DimensionError as exc:
        print(f"dimension error: {exc}", file=sys.stderr)
        return EXIT_DIM
    except (datamod.DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (CliError, checkpoint.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return getattr(exc, "code", EXIT_OTHER)


if __name__ == "__main__":
    sys.exit(main())
