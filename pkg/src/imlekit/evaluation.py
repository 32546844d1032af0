"""Model evaluation: Parzen-window log-likelihood, mode coverage, interpolation, NN audit."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .datasets import Dataset, MixtureSpec
from .models import GeneratorNet
from .nnsearch import NearestIndex
from .numerics import DimensionMismatch, as_points, sq_dists_to

_CHUNK = 256


@dataclass
class ParzenEstimate:
    sigma: float
    per_point: np.ndarray
    n_centers: int

    @property
    def mean(self) -> float:
        return float(self.per_point.mean())

    @property
    def stderr(self) -> float:
        if self.per_point.size < 2:
            return 0.0
        return float(self.per_point.std(ddof=1) / math.sqrt(self.per_point.size))


def parzen_log_likelihood(centers, sigma: float, test) -> ParzenEstimate:
    """Log-density of each test point under an isotropic Gaussian KDE on ``centers``.

    ``log mean_j exp(-||x - c_j||^2 / (2 sigma^2)) - d/2 log(2 pi sigma^2)``,
    evaluated with log-sum-exp.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    centers = as_points(centers)
    x = test.points if isinstance(test, Dataset) else as_points(test)
    if centers.shape[1] != x.shape[1]:
        raise DimensionMismatch(f"centers dim {centers.shape[1]}, test dim {x.shape[1]}")
    d = x.shape[1]
    log_m = math.log(centers.shape[0])
    norm = 0.5 * d * math.log(2 * math.pi * sigma * sigma)
    inv = 1.0 / (2.0 * sigma * sigma)
    cc = np.einsum("ij,ij->i", centers, centers)
    out = np.empty(x.shape[0])
    for start in range(0, x.shape[0], _CHUNK):
        xb = x[start:start + _CHUNK]
        xx = np.einsum("ij,ij->i", xb, xb)
        d2 = np.maximum(xx[:, None] + cc[None, :] - 2.0 * (xb @ centers.T), 0.0)
        out[start:start + _CHUNK] = logsumexp(-d2 * inv, axis=1)
    out -= log_m + norm
    return ParzenEstimate(float(sigma), out, centers.shape[0])


def default_sigma_grid(count: int = 20, lo: float = 0.01, hi: float = 1.0) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), count)


def select_bandwidth(centers, validation, sigma_grid) -> float:
    """Grid sigma with the highest mean validation log-likelihood (ties -> smaller)."""
    grid = sorted(float(s) for s in sigma_grid)
    if not grid:
        raise ValueError("sigma grid is empty")
    if grid[0] <= 0:
        raise ValueError("sigmas must be positive")
    best, best_ll = grid[0], -math.inf
    for s in grid:
        ll = parzen_log_likelihood(centers, s, validation).mean
        if ll > best_ll:
            best, best_ll = s, ll
    return best


@dataclass
class CoverageReport:
    nearest_sample_dist: np.ndarray   # per mode
    covered: int
    total: int
    threshold: float                  # absolute radius
    precision: float

    @property
    def all_covered(self) -> bool:
        return self.covered == self.total


def mode_coverage(samples, spec: MixtureSpec, threshold_sigmas: float = 3.0) -> CoverageReport:
    """Count modes with a sample within ``threshold_sigmas * std`` of their mean.

    Precision is the fraction of samples within that radius of any mean.
    """
    if not threshold_sigmas > 0:
        raise ValueError("threshold_sigmas must be positive")
    s = as_points(samples)
    if s.shape[1] != spec.dim:
        raise DimensionMismatch(f"samples dim {s.shape[1]}, mixture dim {spec.dim}")
    radius = threshold_sigmas * spec.component_std
    d2 = np.stack([sq_dists_to(s, mu) for mu in spec.component_means], axis=1)
    nearest = np.sqrt(d2.min(axis=0))
    covered = int(np.sum(nearest <= radius))
    precision = float(np.mean(np.sqrt(d2.min(axis=1)) <= radius))
    return CoverageReport(nearest, covered, spec.k, radius, precision)


def interpolate_latent(net: GeneratorNet, endpoints, steps: int) -> list[np.ndarray]:
    """Images along straight latent paths through ``endpoints``, closing the loop.

    Returns one (steps, data_dim) array per segment; segment ``k`` runs from
    endpoint ``k`` to endpoint ``k + 1`` (the last back to the first).
    """
    z = as_points(endpoints)
    if z.shape[0] < 2:
        raise ValueError("need at least two endpoints")
    if steps < 2:
        raise ValueError("need at least two steps")
    if z.shape[1] != net.latent_dim:
        raise DimensionMismatch(f"latent dim is {net.latent_dim}, endpoints have {z.shape[1]}")
    t = np.linspace(0.0, 1.0, steps)[:, None]
    segments = []
    for k in range(z.shape[0]):
        a, b = z[k], z[(k + 1) % z.shape[0]]
        segments.append(net.forward((1.0 - t) * a + t * b))
    return segments


@dataclass(frozen=True)
class NeighbourMatch:
    sample: np.ndarray
    training_index: int
    sq_dist: float


def nearest_training_neighbour(samples, training: Dataset, structure: str = "brute") -> list[NeighbourMatch]:
    if len(samples) == 0:
        return []
    s = as_points(samples)
    if s.shape[1] != training.dim:
        raise DimensionMismatch(f"samples dim {s.shape[1]}, training dim {training.dim}")
    index = NearestIndex(training.points, structure)
    idx, dist = index.query_arrays(s)
    return [NeighbourMatch(row, int(i), float(d)) for row, i, d in zip(s, idx, dist)]
