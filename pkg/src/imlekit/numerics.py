"""Vector arithmetic, seeded random streams and a finite-difference oracle.

Vectors and matrices are plain float64 numpy arrays. Every public helper
rejects non-finite output so NaN/Inf never leak into the rest of the package.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np


class DimensionMismatch(ValueError):
    """Two operands disagree on dimensionality."""


class NonFiniteValue(ArithmeticError):
    """A computation produced NaN or Inf."""


def as_vec(values, dim: int | None = None) -> np.ndarray:
    """Coerce ``values`` to a finite 1-D float64 array, optionally checking ``dim``."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D vector, got shape {v.shape}")
    if v.size == 0:
        raise DimensionMismatch("vectors must have dim >= 1")
    if dim is not None and v.size != dim:
        raise DimensionMismatch(f"expected dim {dim}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteValue("vector contains NaN or Inf")
    return v


def as_points(values) -> np.ndarray:
    """Coerce a collection of equal-length vectors to a finite (n, d) float64 array."""
    p = np.asarray(values, dtype=np.float64)
    if p.ndim == 1:
        p = p.reshape(-1, 1)
    if p.ndim != 2:
        raise DimensionMismatch(f"expected an (n, d) array of points, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise NonFiniteValue("points contain NaN or Inf")
    return np.ascontiguousarray(p)


class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Backed by numpy's PCG64 seeded through ``SeedSequence(seed,
    spawn_key=(stream_id,))``, so distinct stream ids are independent.
    Gaussian draws use numpy's ziggurat sampler; sequences are fixed for a
    given numpy release. A stream has a single owner: concurrent users must
    each hold their own ``stream_id``.
    """

    def __init__(self, seed: int = 0, stream_id: int = 0):
        if not (0 <= seed < 2**64 and 0 <= stream_id < 2**64):
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def child(self, stream_id: int) -> "RngStream":
        """A fresh stream sharing this seed under another id."""
        return RngStream(self.seed, stream_id)

    def normal(self, shape) -> np.ndarray:
        return self.generator.standard_normal(shape)

    def integers(self, low: int, high: int | None = None, size=None):
        return self.generator.integers(low, high, size=size)

    def uniform(self, size=None) -> np.ndarray:
        return self.generator.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def choice(self, a, size: int, replace: bool = True, p=None) -> np.ndarray:
        return self.generator.choice(a, size=size, replace=replace, p=p)


def gaussian_sample(rng: RngStream, dim: int) -> np.ndarray:
    """Draw one standard-normal vector of length ``dim``."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return rng.normal(dim)


def sq_euclidean(a, b) -> float:
    """Squared Euclidean distance between two equal-length vectors."""
    a = as_vec(a)
    b = as_vec(b)
    if a.size != b.size:
        raise DimensionMismatch(f"dim {a.size} != dim {b.size}")
    with np.errstate(over="ignore"):
        d = float(sq_dists_to(a[None, :], b)[0])
    if not math.isfinite(d):
        raise NonFiniteValue("squared distance overflowed")
    return d


def sq_dists_to(points: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Squared distances from every row of ``points`` to ``q``.

    This is the single distance kernel used by brute-force and tree search
    alike, so both produce bitwise-identical values for the same pair.
    """
    diff = points - q
    return np.einsum("ij,ij->i", diff, diff)


def pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(len(a), len(b)) matrix of squared distances, computed row by row of ``a``."""
    out = np.empty((a.shape[0], b.shape[0]))
    for i in range(a.shape[0]):
        out[i] = sq_dists_to(b, a[i])
    return out


def finite_diff_grad(f: Callable[[np.ndarray], float], theta, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``theta``."""
    if h <= 0:
        raise ValueError("step size h must be positive")
    theta = as_vec(theta)
    grad = np.empty_like(theta)
    probe = theta.copy()
    for j in range(theta.size):
        probe[j] = theta[j] + h
        hi = float(f(probe))
        probe[j] = theta[j] - h
        lo = float(f(probe))
        probe[j] = theta[j]
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NonFiniteValue(f"f is not finite around coordinate {j}")
        grad[j] = (hi - lo) / (2.0 * h)
    return grad
