"""Binary PPM (P6) image grids."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def to_bytes(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] values to 0..255, rounding halves away from zero."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(255.0 * v + 0.5).astype(np.uint8)


def grid_image(samples: np.ndarray, shape: tuple[int, int], cols: int) -> np.ndarray:
    """Tile flattened grayscale images row-major into one (H, W) array; blanks are 0."""
    h, w = shape
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] != h * w:
        raise ValueError(f"samples of dim {samples.shape[-1]} cannot be rasterized as {h}x{w}")
    if cols < 1:
        raise ValueError("grid needs at least one column")
    count = samples.shape[0]
    rows = max(1, -(-count // cols))
    canvas = np.zeros((rows * h, cols * w))
    for k, img in enumerate(samples):
        r, c = divmod(k, cols)
        canvas[r * h:(r + 1) * h, c * w:(c + 1) * w] = img.reshape(h, w)
    return canvas


def ppm_bytes(gray: np.ndarray) -> bytes:
    """Encode a 2-D [0, 1] array as P6, replicating gray into R, G and B."""
    px = to_bytes(gray)
    rgb = np.repeat(px[:, :, None], 3, axis=2)
    header = f"P6\n{px.shape[1]} {px.shape[0]}\n255\n".encode("ascii")
    return header + rgb.tobytes()


def write_ppm(path, gray: np.ndarray) -> None:
    Path(path).write_bytes(ppm_bytes(gray))


def read_ppm(path) -> np.ndarray:
    """Read a P6 file written by :func:`write_ppm`; returns the (H, W, 3) uint8 array."""
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)
