"""Exact k-nearest-neighbour KD-tree with deterministic tie-breaking.

Points carry string payload ids. Queries return the k closest points by
Euclidean distance in ascending order, breaking distance ties by id, so
degenerate data and repeated runs give identical results. Subtrees whose
splitting plane lies exactly at the current k-th distance are still visited
(a tied point with a smaller id must be found), which makes the result
identical to a linear scan for every input.
"""

from __future__ import annotations

import math
from bisect import insort

import numpy as np


class _Node:
    __slots__ = ("index", "axis", "left", "right")

    def __init__(self, index, axis, left, right):
        self.index = index
        self.axis = axis
        self.left = left
        self.right = right


class KDTree:
    def __init__(self, points: np.ndarray, ids: list[str]):
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2:
            raise ValueError(f"points must be a 2-D array, got shape {points.shape}")
        if len(points) != len(ids):
            raise ValueError(f"{len(points)} points for {len(ids)} ids")
        if points.shape[1] < 1:
            raise ValueError("points need at least one dimension")
        self.points = points
        self.ids = [str(i) for i in ids]
        self.size = len(ids)
        self.dims = points.shape[1]
        self._root = self._build(np.arange(self.size), 0) if self.size else None

    def _build(self, idx: np.ndarray, depth: int):
        if idx.size == 0:
            return None
        axis = depth % self.dims
        order = idx[np.argsort(self.points[idx, axis], kind="stable")]
        mid = order.size // 2
        return _Node(
            int(order[mid]),
            axis,
            self._build(order[:mid], depth + 1),
            self._build(order[mid + 1:], depth + 1),
        )

    def query(self, q: np.ndarray, k: int) -> list[tuple[float, str]]:
        """The min(k, size) nearest points as (distance, id), ascending by
        (distance, id)."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (self.dims,):
            raise ValueError(f"query must have shape ({self.dims},), got {q.shape}")
        best: list[tuple[float, str, int]] = []  # (dist_sq, id, row) ascending

        def visit(node):
            if node is None:
                return
            p = self.points[node.index]
            dist_sq = float(((p - q) ** 2).sum())
            cand = (dist_sq, self.ids[node.index], node.index)
            if len(best) < k:
                insort(best, cand)
            elif cand[:2] < (best[-1][0], best[-1][1]):
                insort(best, cand)
                best.pop()
            diff = float(q[node.axis] - p[node.axis])
            near, far = (node.left, node.right) if diff < 0 else (node.right, node.left)
            visit(near)
            # ties at the k-th distance may still hold a smaller id: <= not <
            if len(best) < k or diff * diff <= best[-1][0]:
                visit(far)

        visit(self._root)
        return [(math.sqrt(d), sid) for d, sid, _ in best]
