"""Dataset loading and preprocessing.

Readers for the MNIST IDX and CIFAR-10 binary formats, ZCA whitening,
binarisation, the bars-and-stripes toy distribution, and a compact binary
cache for binarised datasets.
"""
from __future__ import annotations

import gzip
import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.preprocessing import binarize as _sk_binarize

from . import rng as rngmod


class DataError(ValueError):
    """Malformed or inconsistent dataset input."""


class BadMagicError(DataError):
    pass


class TruncatedFileError(DataError):
    pass


class CountMismatchError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 3072

# md5 of the gzipped files as distributed by the MNIST site
MNIST_MD5 = {
    "train-images-idx3-ubyte.gz": "f68b3c2dcbeaaa9fbdd348bbdeb94873",
    "train-labels-idx1-ubyte.gz": "d53e105ee54ea40749a09fcbcd1e9432",
    "t10k-images-idx3-ubyte.gz": "9fb629c4189551a2d022fa330f9573f3",
    "t10k-labels-idx1-ubyte.gz": "ec29112dd5afa0611ce80d1b7f02629c",
}
MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_FILES = {
    "train": tuple(f"data_batch_{k}.bin" for k in range(1, 6)),
    "test": ("test_batch.bin",),
}


@dataclass(eq=False)
class Dataset:
    """Binary samples (N x I, uint8) with optional integer labels."""

    samples: np.ndarray
    labels: np.ndarray | None = None
    name: str = ""
    digest: str = ""

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 2:
            raise DataError(f"samples must be 2-D, got shape {s.shape}")
        if not np.all((s == 0) | (s == 1)):
            raise DataError("samples must contain only 0 and 1")
        self.samples = s.astype(np.uint8)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (s.shape[0],):
                raise CountMismatchError(
                    f"{s.shape[0]} samples but {self.labels.size} labels")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def n_features(self) -> int:
        return self.samples.shape[1]

    def subset(self, idx) -> "Dataset":
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.samples[idx], labels, self.name, self.digest)

    def as_float(self) -> np.ndarray:
        return self.samples.astype(np.float64)


@dataclass(eq=False)
class RawData:
    """Real-valued samples straight from a loader, before binarisation."""

    values: np.ndarray
    labels: np.ndarray | None
    name: str = ""
    digest: str = ""

    def binarize(self, threshold: float = 0.5) -> Dataset:
        return Dataset(binarize(self.values, threshold), self.labels,
                       self.name, self.digest)


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def file_digest(paths) -> str:
    """sha256 over the raw bytes of ``paths`` in order."""
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def md5_of(path) -> str:
    return hashlib.md5(Path(path).read_bytes()).hexdigest()


def parse_idx_images(raw: bytes) -> np.ndarray:
    if len(raw) < 16:
        raise TruncatedFileError("IDX image header needs 16 bytes")
    magic, n, rows, cols = struct.unpack_from(">IIII", raw, 0)
    if magic != IDX_IMAGES_MAGIC:
        raise BadMagicError(f"expected image magic 0x{IDX_IMAGES_MAGIC:08x}, "
                            f"got 0x{magic:08x}")
    size = n * rows * cols
    if len(raw) - 16 < size:
        raise TruncatedFileError(f"header promises {size} pixel bytes, file "
                                 f"holds {len(raw) - 16}")
    return np.frombuffer(raw, np.uint8, size, 16).reshape(n, rows, cols).copy()


def parse_idx_labels(raw: bytes) -> np.ndarray:
    if len(raw) < 8:
        raise TruncatedFileError("IDX label header needs 8 bytes")
    magic, n = struct.unpack_from(">II", raw, 0)
    if magic != IDX_LABELS_MAGIC:
        raise BadMagicError(f"expected label magic 0x{IDX_LABELS_MAGIC:08x}, "
                            f"got 0x{magic:08x}")
    if len(raw) - 8 < n:
        raise TruncatedFileError(f"header promises {n} labels, file holds "
                                 f"{len(raw) - 8}")
    return np.frombuffer(raw, np.uint8, n, 8).copy()


def idx_images_bytes(images: np.ndarray) -> bytes:
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    return struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes()


def idx_labels_bytes(labels: np.ndarray) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", IDX_LABELS_MAGIC, labels.size) + labels.tobytes()


def load_idx(images_path, labels_path=None) -> RawData:
    """MNIST-style IDX files; pixels scaled to [0, 1], one row per image."""
    images = parse_idx_images(_read_bytes(images_path))
    labels = None
    paths = [images_path]
    if labels_path is not None:
        labels = parse_idx_labels(_read_bytes(labels_path))
        paths.append(labels_path)
        if labels.size != images.shape[0]:
            raise CountMismatchError(f"{images.shape[0]} images but "
                                     f"{labels.size} labels")
    values = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return RawData(values, labels, Path(images_path).name, file_digest(paths))


def parse_cifar10(raw: bytes) -> tuple[np.ndarray, np.ndarray]:
    """Split CIFAR-10 binary records into (labels, N x 3072 uint8 pixels)."""
    if len(raw) == 0:
        raise EmptyDatasetError("CIFAR-10 file holds zero records")
    if len(raw) % CIFAR_RECORD:
        raise TruncatedFileError(f"file length {len(raw)} is not a multiple "
                                 f"of {CIFAR_RECORD}")
    rec = np.frombuffer(raw, np.uint8).reshape(-1, CIFAR_RECORD)
    return rec[:, 0].copy(), rec[:, 1:].copy()


def cifar10_bytes(labels, pixels) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1, 1)
    pixels = np.asarray(pixels, dtype=np.uint8).reshape(labels.shape[0], 3072)
    return np.hstack([labels, pixels]).tobytes()


def load_cifar10(batch_paths) -> RawData:
    """Concatenate CIFAR-10 binary batches; pixels scaled to [0, 1]."""
    if isinstance(batch_paths, (str, Path)):
        batch_paths = [batch_paths]
    labels, pixels = zip(*(parse_cifar10(_read_bytes(p)) for p in batch_paths))
    values = np.concatenate(pixels).astype(np.float64) / 255.0
    return RawData(values, np.concatenate(labels), "cifar10",
                   file_digest(batch_paths))


def _find(data_dir: Path, name: str) -> Path:
    for candidate in (data_dir / name, data_dir / (name + ".gz")):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"{name} not found in {data_dir}")


def load_mnist(data_dir, split: str = "train") -> RawData:
    images, labels = MNIST_FILES[split]
    data_dir = Path(data_dir)
    raw = load_idx(_find(data_dir, images), _find(data_dir, labels))
    raw.name = f"mnist-{split}"
    return raw


def load_cifar10_dir(data_dir, split: str = "train") -> RawData:
    data_dir = Path(data_dir)
    if (data_dir / "cifar-10-batches-bin").is_dir():
        data_dir = data_dir / "cifar-10-batches-bin"
    raw = load_cifar10([_find(data_dir, f) for f in CIFAR_FILES[split]])
    raw.name = f"cifar10-{split}"
    return raw


@dataclass(eq=False)
class ZcaTransform:
    mean: np.ndarray
    matrix: np.ndarray
    epsilon: float

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.matrix

    def inverse_transform(self, Z) -> np.ndarray:
        return np.linalg.solve(self.matrix, np.asarray(Z, np.float64).T).T + self.mean


def zca_fit(samples, epsilon: float = 0.1) -> ZcaTransform:
    """ZCA whitening: U (L + eps)^(-1/2) U^T from the sample covariance."""
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError("ZCA needs a 2-D sample matrix with at least 2 rows")
    if not np.all(np.isfinite(X)):
        raise DataError("ZCA input contains non-finite values")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, bias=True).reshape(X.shape[1], X.shape[1])
    eigval, eigvec = np.linalg.eigh(cov)
    eigval = np.clip(eigval, 0.0, None) + epsilon
    if np.any(eigval <= 0):
        raise DataError("covariance is singular; use epsilon > 0")
    matrix = (eigvec / np.sqrt(eigval)) @ eigvec.T
    matrix = 0.5 * (matrix + matrix.T)
    return ZcaTransform(mean, matrix, float(epsilon))


def binarize(samples, threshold: float = 0.5) -> np.ndarray:
    """1 where value > threshold, else 0 (uint8)."""
    if np.isnan(threshold):
        raise ValueError("threshold must not be NaN")
    x = np.asarray(samples, dtype=np.float64)
    if np.isinf(threshold):
        # sklearn only accepts finite thresholds
        return np.full(x.shape, threshold < 0, dtype=np.uint8)
    return _sk_binarize(x, threshold=threshold).astype(np.uint8)


def _bars_label(img: np.ndarray) -> int:
    # 0: every row constant (horizontal bars), 1: vertical stripes
    return 0 if np.all(img == img[:, :1]) else 1


def bars_and_stripes(n: int, exhaustive: bool = True, n_samples: int = 0,
                     seed: int = 0) -> Dataset:
    """n x n bars-and-stripes images, flattened row-major, labelled 0/1.

    Exhaustive mode lists the 2**(n+1) - 2 distinct patterns (the all-off
    and all-on images once each).  Otherwise ``n_samples`` images are drawn
    by picking an orientation and then n fair bits.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if exhaustive:
        bits = ((np.arange(1 << n)[:, None] >> np.arange(n - 1, -1, -1)) & 1)
        bars = np.repeat(bits[:, :, None], n, axis=2)
        stripes = np.repeat(bits[:, None, :], n, axis=1)[1:-1]
        imgs = np.concatenate([bars, stripes])
    else:
        rng = rngmod.make_rng(seed, rngmod.DATA, n)
        vertical = rng.random(n_samples) < 0.5
        bits = (rng.random((n_samples, n)) < 0.5).astype(np.int64)
        imgs = np.where(vertical[:, None, None], bits[:, None, :], bits[:, :, None])
        imgs = np.broadcast_to(imgs, (n_samples, n, n))
    labels = np.array([_bars_label(im) for im in imgs], dtype=np.int64)
    return Dataset(imgs.reshape(len(imgs), n * n), labels, f"bars-stripes-{n}")


def stratified_subset(labels, n: int, seed: int = 0, exclude=None) -> np.ndarray:
    """Deterministic class-balanced sample of ``n`` indices (sorted).

    Classes get ``n // K`` draws each, the first ``n % K`` classes one more.
    Indices in ``exclude`` are never chosen.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    avail = np.ones(labels.size, dtype=bool)
    if exclude is not None:
        avail[np.asarray(exclude, dtype=np.int64)] = False
    rng = rngmod.make_rng(seed, rngmod.DATA, 1 << 20)
    chosen = []
    for rank, k in enumerate(classes):
        pool = np.flatnonzero((labels == k) & avail)
        want = n // classes.size + (rank < n % classes.size)
        if want > pool.size:
            raise DataError(f"class {k} has only {pool.size} samples, need {want}")
        chosen.append(rng.choice(pool, size=want, replace=False))
    return np.sort(np.concatenate(chosen))


_GDAT = struct.Struct("<4sIII")


def dataset_bytes(ds: Dataset) -> bytes:
    """Cache container: b"GDAT" | u32 version | u32 N | u32 I | packed bits
    | u32 has_labels | labels (N x u32)."""
    N, I = ds.samples.shape
    out = [_GDAT.pack(b"GDAT", 1, N, I),
           np.packbits(ds.samples.reshape(-1)).tobytes(),
           struct.pack("<I", ds.labels is not None)]
    if ds.labels is not None:
        out.append(ds.labels.astype("<u4").tobytes())
    return b"".join(out)


def parse_dataset(raw: bytes, name: str = "") -> Dataset:
    if len(raw) < _GDAT.size:
        raise TruncatedFileError("GDAT header truncated")
    magic, version, N, I = _GDAT.unpack_from(raw, 0)
    if magic != b"GDAT":
        raise BadMagicError(f"bad dataset magic {magic!r}")
    if version != 1:
        raise DataError(f"unsupported dataset version {version}")
    nbytes = (N * I + 7) // 8
    off = _GDAT.size
    if len(raw) < off + nbytes + 4:
        raise TruncatedFileError("GDAT payload truncated")
    bits = np.unpackbits(np.frombuffer(raw, np.uint8, nbytes, off))[:N * I]
    off += nbytes
    (has_labels,) = struct.unpack_from("<I", raw, off)
    off += 4
    labels = None
    if has_labels:
        if len(raw) < off + 4 * N:
            raise TruncatedFileError("GDAT labels truncated")
        labels = np.frombuffer(raw, "<u4", N, off).astype(np.int64)
    return Dataset(bits.reshape(N, I), labels, name,
                   hashlib.sha256(raw).hexdigest())


def save_dataset(path, ds: Dataset) -> None:
    Path(path).write_bytes(dataset_bytes(ds))


def load_dataset(path) -> Dataset:
    return parse_dataset(Path(path).read_bytes(), Path(path).stem)
