"""JSON run configuration for the ``train`` command.

Unknown keys anywhere in the document are rejected; see ``TRAIN_SCHEMA``.
Example::

    {
      "data": {"kind": "ring", "k": 8, "radius": 2.0, "std": 0.1, "n": 512},
      "model": {"preset": "desk", "output_activation": "identity"},
      "train": {"K": 300, "L": 50, "eta": 1e-4},
      "seed": 0,
      "output_dir": "runs/ring",
      "checkpoint_every": 100
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .training import OPTIMIZERS, ImleConfig
from .nnsearch import STRUCTURES

_POS_INT = {"type": "integer", "minimum": 1}
_NONNEG_INT = {"type": "integer", "minimum": 0}
_POS_NUM = {"type": "number", "exclusiveMinimum": 0}

TRAIN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["data"],
    "properties": {
        "data": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["ring", "idx", "csv"]},
                "path": {"type": "string"},
                "has_header": {"type": "boolean"},
                "limit": _POS_INT,
                "image_shape": {"type": "array", "items": _POS_INT, "minItems": 2, "maxItems": 2},
                "k": _POS_INT,
                "radius": {"type": "number", "minimum": 0},
                "std": _POS_NUM,
                "n": _POS_INT,
                "seed": _NONNEG_INT,
            },
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": ["desk", "mnist", "custom"]},
                "layer_sizes": {"type": "array", "items": _POS_INT, "minItems": 2},
                "output_activation": {"enum": ["identity", "sigmoid"]},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "m": _POS_INT,
                "K": _NONNEG_INT,
                "L": _NONNEG_INT,
                "eta": _POS_NUM,
                "batch_size": _POS_INT,
                "minibatch_size": _POS_INT,
                "optimizer": {"enum": list(OPTIMIZERS)},
                "index_structure": {"enum": list(STRUCTURES)},
                "stale_matching": {"type": "boolean"},
            },
        },
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "output_dir": {"type": "string"},
        "checkpoint_every": _NONNEG_INT,
        "record_wall_time": {"type": "boolean"},
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    kind: str
    path: str | None = None
    has_header: bool = False
    limit: int | None = None
    image_shape: tuple[int, int] | None = None
    k: int = 8
    radius: float = 2.0
    std: float = 0.1
    n: int = 512
    seed: int | None = None


@dataclass
class ModelConfig:
    preset: str = "desk"
    layer_sizes: list[int] | None = None
    output_activation: str | None = None


@dataclass
class RunConfig:
    data: DataConfig
    model: ModelConfig = field(default_factory=ModelConfig)
    train: ImleConfig = field(default_factory=ImleConfig)
    seed: int = 0
    output_dir: str = "imle-run"
    checkpoint_every: int = 0
    record_wall_time: bool = True
    base_dir: Path = field(default_factory=Path.cwd)
    raw: dict = field(default_factory=dict)

    def data_path(self) -> Path | None:
        if self.data.path is None:
            return None
        p = Path(self.data.path)
        return p if p.is_absolute() else (self.base_dir / p)

    def out_dir(self) -> Path:
        p = Path(self.output_dir)
        return p if p.is_absolute() else (self.base_dir / p)


def parse_run_config(doc: dict, base_dir: Path | None = None) -> RunConfig:
    try:
        jsonschema.validate(doc, TRAIN_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    data = DataConfig(**doc["data"])
    if data.image_shape is not None:
        data.image_shape = tuple(data.image_shape)
    if data.kind in ("idx", "csv") and not data.path:
        raise ConfigError(f"data.kind={data.kind} requires data.path")
    model = ModelConfig(**doc.get("model", {}))
    if model.preset == "custom" and not model.layer_sizes:
        raise ConfigError("model.preset=custom requires model.layer_sizes")
    seed = doc.get("seed", 0)
    train = ImleConfig(seed=seed, **doc.get("train", {}))
    return RunConfig(
        data=data, model=model, train=train, seed=seed,
        output_dir=doc.get("output_dir", "imle-run"),
        checkpoint_every=doc.get("checkpoint_every", 0),
        record_wall_time=doc.get("record_wall_time", True),
        base_dir=base_dir or Path.cwd(), raw=doc,
    )


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_run_config(doc, path.parent)
