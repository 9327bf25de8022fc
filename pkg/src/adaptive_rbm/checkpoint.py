"""Binary model container.

Layout (all little-endian)::

    b"GRBM" | u32 version (=1) | u32 I | u32 J
    | b (I x f64) | c (J x f64) | W row-major (I*J x f64) | u64 step

optionally followed by a classifier section::

    b"HEAD" | U row-major (J*K x f64) | d (K x f64) | u32 K
"""
from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from ._validation import DimensionError
from .classifier import SoftmaxHead
from .core import RbmModel

MAGIC = b"GRBM"
HEAD_TAG = b"HEAD"
VERSION = 1
_HEADER = struct.Struct("<4sIII")
_STEP = struct.Struct("<Q")


class CheckpointError(ValueError):
    """The bytes are not a valid model container."""


def dumps(model: RbmModel, head: SoftmaxHead | None = None) -> bytes:
    I, J = model.n_visible, model.n_hidden
    parts = [
        _HEADER.pack(MAGIC, VERSION, I, J),
        model.b.astype("<f8").tobytes(),
        model.c.astype("<f8").tobytes(),
        np.ascontiguousarray(model.W, dtype="<f8").tobytes(),
        _STEP.pack(int(model.step)),
    ]
    if head is not None:
        if head.U.shape[0] != J:
            raise DimensionError(
                f"head expects {head.U.shape[0]} hidden units, model has {J}")
        parts += [
            HEAD_TAG,
            np.ascontiguousarray(head.U, dtype="<f8").tobytes(),
            head.d.astype("<f8").tobytes(),
            struct.pack("<I", head.n_classes),
        ]
    return b"".join(parts)


def loads(data: bytes) -> tuple[RbmModel, SoftmaxHead | None]:
    if len(data) < _HEADER.size:
        raise CheckpointError("truncated header")
    magic, version, I, J = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}")
    off = _HEADER.size
    body = 8 * (I + J + I * J) + _STEP.size
    if len(data) < off + body:
        raise CheckpointError("truncated parameter block")
    b = np.frombuffer(data, "<f8", I, off)
    off += 8 * I
    c = np.frombuffer(data, "<f8", J, off)
    off += 8 * J
    W = np.frombuffer(data, "<f8", I * J, off).reshape(I, J)
    off += 8 * I * J
    (step,) = _STEP.unpack_from(data, off)
    off += _STEP.size
    model = RbmModel(b, c, W, step=step)

    rest = data[off:]
    if not rest:
        return model, None
    if rest[:4] != HEAD_TAG or len(rest) < 8:
        raise CheckpointError("trailing bytes are not a HEAD section")
    (K,) = struct.unpack_from("<I", rest, len(rest) - 4)
    payload = len(rest) - 8
    if K < 1 or payload != 8 * K * (J + 1):
        raise DimensionError(
            f"HEAD section of {payload} bytes does not fit K={K} classes "
            f"over J={J} hidden units")
    U = np.frombuffer(rest, "<f8", J * K, 4).reshape(J, K)
    d = np.frombuffer(rest, "<f8", K, 4 + 8 * J * K)
    return model, SoftmaxHead(U.copy(), d.copy())


def save(path, model: RbmModel, head: SoftmaxHead | None = None) -> None:
    """Write atomically (temp file + rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(dumps(model, head))
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def load(path) -> tuple[RbmModel, SoftmaxHead | None]:
    return loads(Path(path).read_bytes())
