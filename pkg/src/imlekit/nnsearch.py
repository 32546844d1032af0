"""Exact squared-Euclidean nearest-neighbour search.

Two interchangeable structures answer identical queries:

``brute``
    vectorized linear scan.
``vp-tree``
    vantage-point tree. Each node takes the first unused point of a seeded
    shuffle as its pivot and splits the rest at the median distance to it.
    Small subsets are kept as leaf buckets scanned with the same distance
    kernel as ``brute``, so distances agree bit for bit.

Ties are always broken towards the lowest point index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import DimensionMismatch, RngStream, as_points, as_vec, sq_dists_to

STRUCTURES = ("brute", "vp-tree")

LEAF_SIZE = 128
# Relative slack on pruning bounds so rounding in sqrt never discards a tie.
_PRUNE_SLACK = 1e-9


@dataclass(frozen=True)
class MatchResult:
    index: int
    sq_dist: float


class _Node:
    __slots__ = ("pivot", "radius", "inside", "outside", "bucket", "bucket_points")

    def __init__(self):
        self.pivot = -1
        self.radius = 0.0
        self.inside = None
        self.outside = None
        self.bucket = None
        self.bucket_points = None


class NearestIndex:
    """Immutable index over a frozen point set."""

    def __init__(self, points, structure: str = "brute", rng: RngStream | None = None,
                 leaf_size: int = LEAF_SIZE):
        if structure not in STRUCTURES:
            raise ValueError(f"structure must be one of {STRUCTURES}")
        if isinstance(points, (list, tuple)) and len(points) == 0:
            raise ValueError("cannot index an empty point set")
        try:
            pts = as_points(points)
        except ValueError as exc:
            raise ValueError(f"points must share one dimension: {exc}") from None
        if pts.shape[0] == 0:
            raise ValueError("cannot index an empty point set")
        pts.setflags(write=False)
        self.points = pts
        self.structure = structure
        self._root = None
        if structure == "vp-tree":
            order = (rng or RngStream(0)).permutation(pts.shape[0])
            self._root = self._build(order, max(1, leaf_size))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def count(self) -> int:
        return self.points.shape[0]

    def _build(self, idx: np.ndarray, leaf_size: int) -> _Node:
        node = _Node()
        if idx.size <= leaf_size:
            # Sorted bucket: equal distances resolve to the lowest index by argmin.
            bucket = np.sort(idx)
            node.bucket = bucket
            node.bucket_points = np.ascontiguousarray(self.points[bucket])
            return node
        node.pivot = int(idx[0])
        rest = idx[1:]
        d = np.sqrt(sq_dists_to(self.points[rest], self.points[node.pivot]))
        order = np.argsort(d, kind="stable")
        half = rest.size // 2
        node.radius = float(d[order[half]]) if rest.size % 2 else float(0.5 * (d[order[half - 1]] + d[order[half]]))
        inside = d <= node.radius
        node.inside = self._build(rest[inside], leaf_size) if inside.any() else None
        node.outside = self._build(rest[~inside], leaf_size) if (~inside).any() else None
        return node

    def _check_query(self, q) -> np.ndarray:
        q = as_vec(q)
        if q.size != self.dim:
            raise DimensionMismatch(f"index dim {self.dim}, query dim {q.size}")
        return q

    def _brute(self, q: np.ndarray) -> tuple[int, float]:
        d = sq_dists_to(self.points, q)
        j = int(np.argmin(d))
        return j, float(d[j])

    def _tree(self, q: np.ndarray) -> tuple[int, float]:
        best_j, best_d = -1, math.inf
        best_r = math.inf
        stack = [(self._root, 0.0)]
        while stack:
            node, bound = stack.pop()
            if bound > best_r * (1 + _PRUNE_SLACK) + _PRUNE_SLACK:
                continue
            if node.bucket is not None:
                d = sq_dists_to(node.bucket_points, q)
                k = int(np.argmin(d))
                dk = float(d[k])
                jk = int(node.bucket[k])
                if dk < best_d or (dk == best_d and jk < best_j):
                    best_j, best_d, best_r = jk, dk, math.sqrt(dk)
                continue
            dp = float(sq_dists_to(self.points[node.pivot:node.pivot + 1], q)[0])
            if dp < best_d or (dp == best_d and node.pivot < best_j):
                best_j, best_d, best_r = node.pivot, dp, math.sqrt(dp)
            rp = math.sqrt(dp)
            gap = rp - node.radius
            # Push the farther side first so the nearer side is explored first.
            near, far = (node.inside, node.outside) if gap <= 0 else (node.outside, node.inside)
            if far is not None:
                stack.append((far, max(bound, abs(gap))))
            if near is not None:
                stack.append((near, bound))
        return best_j, best_d

    def query(self, q) -> MatchResult:
        q = self._check_query(q)
        j, d = self._tree(q) if self.structure == "vp-tree" else self._brute(q)
        return MatchResult(j, d)

    def query_batch(self, queries) -> list[MatchResult]:
        queries = list(queries) if not isinstance(queries, np.ndarray) else queries
        if len(queries) == 0:
            return []
        return [self.query(q) for q in queries]

    def query_arrays(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Batch query returning ``(indices, sq_dists)`` arrays."""
        queries = as_points(queries)
        if queries.shape[1] != self.dim:
            raise DimensionMismatch(f"index dim {self.dim}, query dim {queries.shape[1]}")
        idx = np.empty(queries.shape[0], dtype=np.int64)
        dist = np.empty(queries.shape[0])
        search = self._tree if self.structure == "vp-tree" else self._brute
        for i, q in enumerate(queries):
            idx[i], dist[i] = search(q)
        return idx, dist


def build_index(points, structure: str = "brute", rng: RngStream | None = None) -> NearestIndex:
    return NearestIndex(points, structure, rng)


def query_nearest(index: NearestIndex, q) -> MatchResult:
    return index.query(q)


def query_batch(index: NearestIndex, queries) -> list[MatchResult]:
    return index.query_batch(queries)
