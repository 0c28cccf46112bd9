"""GEVIT001 parameter checkpoints.

Layout: the 8-byte magic, then per tensor ``u16 name length | name | u8 rank |
u32 extents | f64 data`` (all little-endian) until end of file. Model config
travels in the same stream as rank-0 tensors named ``config.<field>`` so a
checkpoint is self-describing.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .tensor import Tensor
from .vit import CLASSIFIERS, ViTConfig, ViTModel, config_dict

MAGIC = b"GEVIT001"


class CheckpointError(ValueError):
    pass


def write_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    chunks = [MAGIC]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_tensors(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:8]!r}")
    pos, out = 8, {}
    try:
        while pos < len(buf):
            (n,) = struct.unpack_from("<H", buf, pos)
            name = buf[pos + 2:pos + 2 + n].decode("utf-8")
            pos += 2 + n
            (rank,) = struct.unpack_from("<B", buf, pos)
            shape = struct.unpack_from(f"<{rank}I", buf, pos + 1)
            pos += 1 + 4 * rank
            count = int(np.prod(shape))
            out[name] = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).reshape(shape).copy()
            pos += 8 * count
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt at byte {pos}") from exc
    return out


def save(model: ViTModel, path) -> None:
    tensors: dict[str, np.ndarray] = {}
    for key, value in config_dict(model.cfg).items():
        if key == "classifier":
            value = CLASSIFIERS.index(value)
        tensors[f"config.{key}"] = np.array(float(value))
    tensors.update(model.state())
    write_tensors(path, tensors)


def load(path) -> ViTModel:
    tensors = read_tensors(path)
    kwargs = {}
    for key, arr in list(tensors.items()):
        if key.startswith("config."):
            kwargs[key[7:]] = float(tensors.pop(key))
    for key, value in kwargs.items():
        if key == "classifier":
            kwargs[key] = CLASSIFIERS[int(value)]
        elif key != "cosine_temperature":
            kwargs[key] = int(value)
    cfg = ViTConfig(**kwargs)
    params = {n: Tensor(a, requires_grad=True) for n, a in tensors.items()}
    return ViTModel(cfg, params)
