"""Radius-bounded k-nearest-neighbor graphs.

Neighbors are ordered by (distance, index). When fewer than ``k`` points lie
within the radius, the remaining slots are filled with the center itself at
distance 0 and flagged in ``pad_mask``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class NeighborGraph:
    indices: np.ndarray    # (..., N, K) int64
    distances: np.ndarray  # (..., N, K)
    pad_mask: np.ndarray   # (..., N, K) bool, True on self-pads
    k: int
    radius: float

    @property
    def n(self) -> int:
        return self.indices.shape[-2]

    def permute_slots(self, order: np.ndarray) -> "NeighborGraph":
        """Reorder the K slots of every row (``order`` has shape (..., N, K))."""
        take = lambda a: np.take_along_axis(a, order, axis=-1)
        return NeighborGraph(take(self.indices), take(self.distances), take(self.pad_mask),
                             self.k, self.radius)


def _validate(points: np.ndarray, k: int, include_self: bool) -> np.ndarray:
    points = np.asarray(points)
    if points.ndim != 2 or points.shape[1] != 3:
        raise DimensionError(f"points must have shape (N, 3), got {points.shape}")
    if points.shape[0] == 0:
        raise ValueError("empty point set")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not include_self and points.shape[0] < 2:
        raise ValueError("need at least 2 points when include_self is false")
    if not np.all(np.isfinite(points)):
        raise ValueError("non-finite coordinates")
    return points


def pair_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distances between rows of ``a`` (..., P, D) and ``b`` (..., Q, D).

    Squares are accumulated coordinate by coordinate in a fixed order so every
    caller produces bitwise-identical values for the same pair.
    """
    d = b[..., None, :, :] - a[..., :, None, :]
    sq = d[..., 0] * d[..., 0]
    for c in range(1, d.shape[-1]):
        sq += d[..., c] * d[..., c]
    return np.sqrt(sq)


def _finish(order: np.ndarray, dist_sorted: np.ndarray, k: int, radius: float,
            centers: np.ndarray) -> NeighborGraph:
    """Turn per-row sorted candidate lists into a padded (N, K) graph."""
    avail = order.shape[-1]
    if avail < k:
        fill = k - avail
        order = np.concatenate([order, np.broadcast_to(centers[..., None], order.shape[:-1] + (fill,))], axis=-1)
        dist_sorted = np.concatenate([dist_sorted, np.full(order.shape[:-1] + (fill,), np.inf)], axis=-1)
    idx = order[..., :k].astype(np.int64)
    dist = dist_sorted[..., :k]
    # filler slots carry inf, which would pass an infinite radius, so test finiteness too
    pad = ~((dist <= radius) & np.isfinite(dist))
    idx = np.where(pad, centers[..., None], idx)
    dist = np.where(pad, 0.0, dist).astype(dist_sorted.dtype if dist_sorted.dtype.kind == "f" else float)
    return NeighborGraph(idx, dist, pad, k, radius)


def knn_sorted(points: np.ndarray, include_self: bool = False, k: int | None = None):
    """(distance, index)-sorted neighbor order for (N, 3) or (B, N, 3) points.

    Returns ``(order, dist_sorted)`` with one row per point. With ``k`` set
    only the first ``k`` columns are produced; otherwise every candidate is.
    """
    pts = np.asarray(points)
    d = pair_distances(pts, pts)
    n = pts.shape[-2]
    if not include_self:
        d[..., np.arange(n), np.arange(n)] = np.inf
    avail = n if include_self else n - 1
    if k is None or k >= avail:
        order = np.argsort(d, axis=-1, kind="stable")[..., :avail]
        return order, np.take_along_axis(d, order, axis=-1)

    lead = d.shape[:-1]
    flat = d.reshape(-1, n)
    kth = np.partition(flat, k - 1, axis=-1)[:, k - 1:k]
    cand = flat <= kth
    counts = cand.sum(axis=-1)
    order = np.empty((flat.shape[0], k), dtype=np.int64)
    simple = counts == k
    if simple.any():
        # exactly k candidates: nonzero lists them in ascending index order,
        # so a stable sort by distance yields the (distance, index) order
        cols = np.nonzero(cand[simple])[1].reshape(-1, k)
        dv = np.take_along_axis(flat[simple], cols, axis=-1)
        order[simple] = np.take_along_axis(cols, np.argsort(dv, axis=-1, kind="stable"), axis=-1)
    if not simple.all():
        tied = ~simple
        order[tied] = np.argsort(flat[tied], axis=-1, kind="stable")[:, :k]
    dist_sorted = np.take_along_axis(flat, order, axis=-1)
    return order.reshape(lead + (k,)), dist_sorted.reshape(lead + (k,))


def graph_from_sorted(order: np.ndarray, dist_sorted: np.ndarray, k: int,
                      radius: float = math.inf) -> NeighborGraph:
    """Cut a k-slot radius graph out of a precomputed full neighbor order."""
    n = order.shape[-2]
    centers = np.broadcast_to(np.arange(n), order.shape[:-1])
    return _finish(order[..., :k], dist_sorted[..., :k], k, radius, centers)


def knn_bruteforce(points, k: int, r: float = math.inf, include_self: bool = False) -> NeighborGraph:
    points = _validate(points, k, include_self)
    order, dist_sorted = knn_sorted(points, include_self, k)
    return graph_from_sorted(order, dist_sorted, k, r)


def knn_grid(points, k: int, r: float, include_self: bool = False) -> NeighborGraph:
    """Exact radius KNN using a uniform grid with cell edge ``r``.

    Only the 27 cells around a point's own cell can hold points within ``r``,
    so the result matches :func:`knn_bruteforce` exactly.
    """
    if not (r > 0) or not math.isfinite(r):
        raise ValueError(f"grid search needs a finite radius > 0, got {r}")
    points = _validate(points, k, include_self)
    n = points.shape[0]
    # any cell edge >= r is exact; the margin keeps rounding from splitting a pair two cells apart
    cell = r * (1.0 + 1e-9)
    cells = np.floor((points - points.min(axis=0)) / cell).astype(np.int64)
    span = cells.max(axis=0) + 3
    key = ((cells[:, 0] + 1) * span[1] + (cells[:, 1] + 1)) * span[2] + (cells[:, 2] + 1)
    by_key = np.argsort(key, kind="stable")
    sorted_keys = key[by_key]
    uniq, starts = np.unique(sorted_keys, return_index=True)
    ends = np.append(starts[1:], n)
    bucket = {int(u): by_key[s:e] for u, s, e in zip(uniq, starts, ends)}
    offsets = np.array([(dx * span[1] + dy) * span[2] + dz
                        for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)])

    indices = np.empty((n, k), dtype=np.int64)
    distances = np.empty((n, k), dtype=points.dtype)
    pad = np.empty((n, k), dtype=bool)
    for u, members in bucket.items():
        cand = [bucket[c] for c in (u + offsets) if c in bucket]
        cand = np.sort(np.concatenate(cand))
        d = pair_distances(points[members], points[cand])
        if not include_self:
            d[members[:, None] == cand[None, :]] = np.inf
        order = np.argsort(d, axis=-1, kind="stable")
        ds = np.take_along_axis(d, order, axis=-1)
        g = _finish(cand[order], ds, k, r, members)
        indices[members] = g.indices
        distances[members] = g.distances
        pad[members] = g.pad_mask
    return NeighborGraph(indices, distances, pad, k, r)
