"""Checkpoint format.

    b"DTQN" | u16 version | u32 header length | JSON header | float32 LE payload

The header holds the architecture descriptor and the ordered parameter
shapes; the payload is every parameter flattened in that order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .base import ArchitectureMismatch, QNet
from .mlp import MlpQNet
from .transformer import TransformerQNet

MAGIC = b"DTQN"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")


class CheckpointError(ValueError):
    pass


def dumps(net: QNet) -> bytes:
    header = {
        "architecture": net.descriptor(),
        "params": [[name, list(p.shape)] for name, p in net.params.items()],
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes() for p in net.params.values())
    return _PREFIX.pack(MAGIC, VERSION, len(hbytes)) + hbytes + payload


def build(descriptor: dict, dtype=np.float32) -> QNet:
    d = dict(descriptor)
    kind = d.pop("kind")
    if kind == "mlp":
        return MlpQNet(d["input_dim"], d["n_actions"], hidden=d["hidden"], dtype=dtype)
    if kind == "transformer":
        return TransformerQNet(dtype=dtype, **d)
    raise CheckpointError(f"unknown architecture kind {kind!r}")


def loads(data: bytes, expected: dict | None = None) -> QNet:
    if len(data) < _PREFIX.size:
        raise CheckpointError("checkpoint truncated (no header)")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError("not a DTQN checkpoint")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = _PREFIX.size
    if len(data) < start + hlen:
        raise CheckpointError("checkpoint truncated (header)")
    try:
        header = json.loads(data[start:start + hlen])
    except ValueError as exc:
        raise CheckpointError("corrupt checkpoint header") from exc
    arch = header["architecture"]
    if expected is not None and arch != expected:
        raise ArchitectureMismatch(f"checkpoint architecture {arch} does not match {expected}")
    net = build(arch)
    offset = start + hlen
    for name, shape in header["params"]:
        if name not in net.params or list(net.params[name].shape) != shape:
            raise ArchitectureMismatch(f"parameter {name} has unexpected shape {shape}")
        n = int(np.prod(shape)) * 4
        chunk = data[offset:offset + n]
        if len(chunk) != n:
            raise CheckpointError("checkpoint truncated (payload)")
        net.params[name][...] = np.frombuffer(chunk, dtype="<f4").reshape(shape)
        offset += n
    if offset != len(data):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return net


def save(net: QNet, path: str | Path) -> None:
    Path(path).write_bytes(dumps(net))


def load(path: str | Path, expected: dict | None = None) -> QNet:
    return loads(Path(path).read_bytes(), expected)
