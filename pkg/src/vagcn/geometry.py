"""Per-edge geometry of a neighbor graph: relative vectors, distances,
elevation/azimuth ratios and distance-attention weights."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor, cos, gather_rows, mul, norm, reduce_max, reduce_sum, safe_div, square, sub, add
from .errors import DimensionError
from .spatial import NeighborGraph

DEGENERATE = 1e-12


@dataclass
class EdgeGeometry:
    rel: Tensor        # (..., N, K, 3)
    dist: Tensor       # (..., N, K)
    elev: Tensor       # (..., N, K)
    azim: Tensor       # (..., N, K)
    m_weight: Tensor   # (..., N, K)
    pad_mask: np.ndarray

    def angular_factor(self, mode: str = "cos_of_ratio") -> Tensor:
        return angular_factor(self.elev, self.azim, mode)


def relative_vectors(points, graph: NeighborGraph):
    """rel[i, j] = q_ij - p_i and its Euclidean length; self-pads give zeros."""
    points = as_tensor(points)
    if points.shape[-2] != graph.n or points.ndim != graph.indices.ndim:
        raise DimensionError(f"graph over {graph.indices.shape} does not match points {points.shape}")
    neighbors = gather_rows(points, graph.indices)
    centers = points.reshape(points.shape[:-1] + (1, 3))
    rel = sub(neighbors, centers)
    return rel, norm(rel, axis=-1)


def elevation_azimuth(rel: Tensor, dist: Tensor):
    """elev = z / dist, azim = x / |(x, y)|; zero whenever the denominator is degenerate."""
    if rel.shape[:-1] != dist.shape:
        raise DimensionError(f"rel {rel.shape} and dist {dist.shape} disagree")
    z = rel[..., 2]
    x = rel[..., 0]
    horizontal = norm(rel[..., :2], axis=-1)
    return safe_div(z, dist, DEGENERATE), safe_div(x, horizontal, DEGENERATE)


def distance_attention(dist, pad_mask=None) -> Tensor:
    """Row-normalized squared gap to the farthest neighbor.

    Rows whose squared gaps sum below the degenerate threshold (all distances
    equal, including fully padded rows) fall back to uniform weights. Pad slots
    take part as ordinary distance-0 entries.
    """
    dist = as_tensor(dist)
    far = reduce_max(dist, axis=-1, keepdims=True)
    w = square(sub(far, dist))
    total = reduce_sum(w, axis=-1, keepdims=True)
    k = dist.shape[-1]
    uniform = np.where(total.data < DEGENERATE, 1.0 / k, 0.0).astype(dist.dtype)
    return add(safe_div(w, total, DEGENERATE), uniform)


def angular_factor(elev: Tensor, azim: Tensor, mode: str = "cos_of_ratio") -> Tensor:
    if mode == "cos_of_ratio":
        return mul(cos(elev), cos(azim))
    if mode == "ratio":
        return mul(elev, azim)
    raise ValueError(f"unknown angular mode {mode!r}")


def edge_geometry(points, graph: NeighborGraph) -> EdgeGeometry:
    rel, dist = relative_vectors(points, graph)
    elev, azim = elevation_azimuth(rel, dist)
    m = distance_attention(dist, graph.pad_mask)
    return EdgeGeometry(rel, dist, elev, azim, m, graph.pad_mask)
