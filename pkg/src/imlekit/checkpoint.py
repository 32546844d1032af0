"""Binary generator checkpoints.

Layout (all integers little-endian)::

    b"IMLE"                      magic
    u32                          format version
    u64                          metadata length in bytes
    <metadata>                   UTF-8 JSON, keys sorted
    f64 * n_params               parameters, per layer: weights row-major, then biases

The JSON block holds ``layer_sizes``, ``output_activation``, ``seed``,
``outer_iter``, ``image_shape`` and a ``config`` echo.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .models import GeneratorNet

MAGIC = b"IMLE"
VERSION = 1
_HEAD = struct.Struct("<4sIQ")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    net: GeneratorNet
    seed: int = 0
    outer_iter: int = 0
    image_shape: tuple[int, int] | None = None
    config: dict = field(default_factory=dict)

    def metadata(self) -> dict:
        return {
            "layer_sizes": list(self.net.layer_sizes),
            "output_activation": self.net.output_activation,
            "activations": {"hidden": "relu", "output": self.net.output_activation},
            "seed": self.seed,
            "outer_iter": self.outer_iter,
            "image_shape": list(self.image_shape) if self.image_shape else None,
            "config": self.config,
        }

    def to_bytes(self) -> bytes:
        meta = json.dumps(self.metadata(), sort_keys=True, separators=(",", ":")).encode("utf-8")
        blob = self.net.params.astype("<f8").tobytes()
        return _HEAD.pack(MAGIC, VERSION, len(meta)) + meta + blob

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Checkpoint":
        if len(raw) < _HEAD.size:
            raise CheckpointError("file too short for a checkpoint header")
        magic, version, meta_len = _HEAD.unpack_from(raw)
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}")
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        start = _HEAD.size
        if len(raw) < start + meta_len:
            raise CheckpointError("truncated metadata block")
        try:
            meta = json.loads(raw[start:start + meta_len].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"unreadable metadata: {exc}") from None
        sizes = meta["layer_sizes"]
        count = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
        blob = raw[start + meta_len:]
        if len(blob) != 8 * count:
            raise CheckpointError(f"parameter blob holds {len(blob)} bytes, expected {8 * count}")
        params = np.frombuffer(blob, dtype="<f8").astype(np.float64)
        net = GeneratorNet(sizes, meta["output_activation"], params)
        shape = tuple(meta["image_shape"]) if meta.get("image_shape") else None
        return cls(net, meta.get("seed", 0), meta.get("outer_iter", 0), shape, meta.get("config", {}))


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(ckpt.to_bytes())


def load_checkpoint(path) -> Checkpoint:
    return Checkpoint.from_bytes(Path(path).read_bytes())
