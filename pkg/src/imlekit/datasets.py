"""Dataset containers, synthetic mixtures and file loaders (IDX, CSV)."""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import RngStream, as_points


class DatasetError(ValueError):
    """Malformed input data."""


class IdxFormatError(DatasetError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class BadMagicError(IdxFormatError):
    pass


class UnsupportedElementTypeError(IdxFormatError):
    pass


class TruncatedPayloadError(IdxFormatError):
    pass


class CsvFormatError(DatasetError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class Normalization:
    """Per-dimension affine map ``y = (x - offset) / scale``."""

    offset: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        if np.any(self.scale == 0) or not np.all(np.isfinite(self.scale)):
            raise DatasetError("normalization scales must be finite and nonzero")

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (points - self.offset) / self.scale

    def invert(self, points: np.ndarray) -> np.ndarray:
        return points * self.scale + self.offset


@dataclass(frozen=True)
class Dataset:
    """An ordered set of ``n`` examples of dimension ``dim``, stored as an (n, dim) array."""

    points: np.ndarray
    source_tag: str = ""
    normalization: Normalization | None = None
    image_shape: tuple[int, int] | None = None

    def __post_init__(self):
        pts = as_points(self.points)
        if pts.shape[0] < 1:
            raise DatasetError("a dataset needs at least one point")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n

    def subset(self, indices) -> "Dataset":
        return Dataset(self.points[np.asarray(indices)], self.source_tag,
                       self.normalization, self.image_shape)

    def normalized(self) -> "Dataset":
        """Standardize each coordinate to zero mean, unit spread.

        Constant coordinates keep scale 1 so the map stays invertible.
        """
        offset = self.points.mean(axis=0)
        scale = self.points.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        norm = Normalization(offset, scale)
        return Dataset(norm.apply(self.points), self.source_tag, norm, self.image_shape)

    def denormalized(self) -> "Dataset":
        if self.normalization is None:
            return self
        return Dataset(self.normalization.invert(self.points), self.source_tag,
                       None, self.image_shape)


@dataclass(frozen=True)
class MixtureSpec:
    """Isotropic Gaussian mixture sharing one standard deviation."""

    component_means: np.ndarray
    component_std: float
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        means = as_points(self.component_means)
        if self.component_std <= 0:
            raise DatasetError("component_std must be positive")
        k = means.shape[0]
        w = np.full(k, 1.0 / k) if self.weights is None else np.asarray(self.weights, float)
        if w.shape != (k,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DatasetError("weights must be nonnegative, one per component, summing to 1")
        object.__setattr__(self, "component_means", means)
        object.__setattr__(self, "weights", w)

    @property
    def k(self) -> int:
        return self.component_means.shape[0]

    @property
    def dim(self) -> int:
        return self.component_means.shape[1]

    def to_json(self) -> str:
        return json.dumps({
            "means": self.component_means.tolist(),
            "std": self.component_std,
            "weights": self.weights.tolist(),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MixtureSpec":
        d = json.loads(text)
        return cls(np.array(d["means"]), d["std"], np.array(d["weights"]))


def ring_mixture_spec(k: int, radius: float, std: float) -> MixtureSpec:
    """Equal-weight mixture with ``k`` means evenly spaced on a circle in 2-D."""
    if k < 1:
        raise DatasetError("k must be >= 1")
    angles = 2.0 * np.pi * np.arange(k) / k
    means = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    return MixtureSpec(means, std)


def sample_mixture(spec: MixtureSpec, rng: RngStream, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` points; returns ``(points, component_labels)``."""
    labels = rng.choice(spec.k, size=n, p=spec.weights)
    noise = rng.normal((n, spec.dim))
    return spec.component_means[labels] + spec.component_std * noise, labels


def gen_ring_mixture(rng: RngStream, k: int, radius: float, std: float, n: int) -> Dataset:
    if std <= 0:
        raise DatasetError("std must be positive")
    if n < k:
        raise DatasetError("need n >= k")
    spec = ring_mixture_spec(k, radius, std)
    points, _ = sample_mixture(spec, rng, n)
    return Dataset(points, source_tag="mixture:" + spec.to_json())


def mixture_spec_of(data: Dataset) -> MixtureSpec:
    """Recover the generating mixture recorded by :func:`gen_ring_mixture`."""
    if not data.source_tag.startswith("mixture:"):
        raise DatasetError("dataset was not generated from a mixture")
    return MixtureSpec.from_json(data.source_tag[len("mixture:"):])


# IDX element type code -> (numpy big-endian dtype, byte size)
_IDX_TYPES = {0x08: (">u1", 1)}


def load_idx(path) -> Dataset:
    """Read an (uncompressed) IDX file such as the MNIST image archives.

    The first record axis indexes examples; remaining axes are flattened.
    Unsigned-byte payloads are scaled to [0, 1] by dividing by 255.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 4:
        raise TruncatedPayloadError("truncated header", len(raw))
    if raw[0] != 0 or raw[1] != 0:
        raise BadMagicError("bad magic: first two bytes must be zero", 0)
    type_code, rank = raw[2], raw[3]
    if type_code not in _IDX_TYPES:
        raise UnsupportedElementTypeError(f"unsupported element type 0x{type_code:02x}", 2)
    if rank < 1:
        raise BadMagicError("rank must be at least 1", 3)
    header_end = 4 + 4 * rank
    if len(raw) < header_end:
        raise TruncatedPayloadError("truncated header", len(raw))
    dims = struct.unpack(f">{rank}I", raw[4:header_end])
    dtype, size = _IDX_TYPES[type_code]
    count = math.prod(dims)
    if len(raw) < header_end + count * size:
        raise TruncatedPayloadError("truncated payload", len(raw))
    if dims[0] < 1:
        raise DatasetError("IDX file holds no records")
    payload = np.frombuffer(raw, dtype=dtype, count=count, offset=header_end)
    points = payload.astype(np.float64).reshape(dims[0], -1) / 255.0
    image_shape = (dims[1], dims[2]) if rank == 3 else None
    return Dataset(points, source_tag=f"idx:{path}", image_shape=image_shape)


def write_idx(path, array: np.ndarray) -> None:
    """Write an unsigned-byte array as IDX (inverse of :func:`load_idx` up to /255)."""
    a = np.asarray(array, dtype=np.uint8)
    header = bytes([0, 0, 0x08, a.ndim]) + struct.pack(f">{a.ndim}I", *a.shape)
    Path(path).write_bytes(header + a.astype(">u1").tobytes())


def load_csv(path, has_header: bool = False) -> Dataset:
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if has_header and lineno == 1:
                continue
            if not row:
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise CsvFormatError(f"expected {width} fields, found {len(row)}", lineno)
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise CsvFormatError(f"unparsable field ({exc})", lineno) from None
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return Dataset(np.array(rows), source_tag=f"csv:{path}")
