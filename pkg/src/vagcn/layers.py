"""Shared MLPs, EdgeConv and the dual-channel VAConv operator."""
from __future__ import annotations

import numpy as np

from .autodiff import (
    BatchNormState,
    Linear,
    Module,
    Tensor,
    activation,
    add,
    as_tensor,
    batch_norm,
    concat,
    gather_rows,
    masked_fill,
    mul,
    reduce_max,
    reduce_sum,
    reshape,
    sub,
)
from .errors import DimensionError
from .geometry import EdgeGeometry, angular_factor, edge_geometry
from .spatial import NeighborGraph

AGGREGATION_MODES = ("sum", "weighted_max")
ANGULAR_MODES = ("cos_of_ratio", "ratio")


class MlpLayer(Module):
    """Linear map, then optional batch norm, then optional activation.

    The bias is dropped when batch norm follows, since the norm's shift absorbs it.
    """

    def __init__(self, c_in: int, c_out: int, rng, norm: bool = True, act: str | None = "leaky_relu"):
        self.linear = Linear(c_in, c_out, rng, bias=not norm)
        self.bn = BatchNormState(c_out) if norm else None
        self.act = act

    @property
    def c_in(self) -> int:
        return self.linear.c_in

    @property
    def c_out(self) -> int:
        return self.linear.c_out

    def post(self, y: Tensor, training: bool) -> Tensor:
        if self.bn is not None:
            return batch_norm(y, self.bn, training, self.act)
        if self.act:
            y = activation(y, self.act)
        return y

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return self.post(self.linear(x), training)


class SharedMlp(Module):
    """Pointwise MLP over the trailing channel axis; ``widths`` = [c_in, c_1, ..., c_out]."""

    def __init__(self, widths, rng, norm: bool = True, act: str | None = "leaky_relu"):
        widths = list(widths)
        if len(widths) < 2:
            raise ValueError("an MLP needs at least an input and an output width")
        self.layers = [MlpLayer(a, b, rng, norm, act) for a, b in zip(widths[:-1], widths[1:])]

    @property
    def c_in(self) -> int:
        return self.layers[0].c_in

    @property
    def c_out(self) -> int:
        return self.layers[-1].c_out

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return shared_mlp(x, self, training)


def shared_mlp(x, params: SharedMlp, training: bool) -> Tensor:
    x = as_tensor(x)
    if x.shape[-1] != params.c_in:
        raise DimensionError(f"MLP expects {params.c_in} input channels, got shape {x.shape}")
    for layer in params.layers:
        x = layer(x, training)
    return x


def edge_features(x, graph: NeighborGraph) -> Tensor:
    """D[i, j] = x[idx[i, j]] - x[i]; self-pad slots come out as zero vectors."""
    x = as_tensor(x)
    if x.ndim != graph.indices.ndim or x.shape[-2] != graph.n:
        raise DimensionError(f"features {x.shape} do not match graph {graph.indices.shape}")
    neighbors = gather_rows(x, graph.indices)
    return sub(neighbors, reshape(x, x.shape[:-1] + (1, x.shape[-1])))


def mlp_on_edge_differences(x: Tensor, graph: NeighborGraph, mlp: SharedMlp, training: bool) -> Tensor:
    """``mlp(edge_features(x, graph))`` with the first linear map applied per point.

    W(x_j - x_i) = (xW)_j - (xW)_i, so the matmul runs over N rows instead of N*K.
    The per-point rows are centered first: the differences do not depend on
    the offset, and smaller magnitudes lose less to cancellation.
    """
    first = mlp.layers[0]
    if x.shape[-1] != first.c_in:
        raise DimensionError(f"MLP expects {first.c_in} input channels, got shape {x.shape}")
    centered = sub(x, x.data.mean(axis=-2, keepdims=True))
    y = edge_features(centered @ first.linear.weight, graph)
    if first.linear.bias is not None:
        y = add(y, first.linear.bias)
    y = first.post(y, training)
    for layer in mlp.layers[1:]:
        y = layer(y, training)
    return y


def max_exclusion_mask(pad_mask: np.ndarray) -> np.ndarray:
    """Slots to hide from a max over neighbors.

    Pads are hidden unless a row has nothing but pads, in which case the row's
    self-edges are kept so the max stays finite.
    """
    pad_mask = np.asarray(pad_mask, dtype=bool)
    return pad_mask & ~pad_mask.all(axis=-1, keepdims=True)


def masked_neighbor_max(values: Tensor, pad_mask: np.ndarray) -> Tensor:
    """Max over the neighbor axis (-2) of (..., N, K, C) values, ignoring pads."""
    hide = max_exclusion_mask(pad_mask)
    if hide.any():
        values = masked_fill(values, hide[..., None], -np.inf)
    return reduce_max(values, axis=-2)


class VAConv(Module):
    def __init__(self, c_in: int, c_out: int, rng, k: int = 20, r: float = float("inf"),
                 aggregation_mode: str = "sum", angular_mode: str = "cos_of_ratio"):
        if aggregation_mode not in AGGREGATION_MODES:
            raise ValueError(f"unknown aggregation mode {aggregation_mode!r}")
        if angular_mode not in ANGULAR_MODES:
            raise ValueError(f"unknown angular mode {angular_mode!r}")
        self.edge_mlp = SharedMlp([c_in, c_out], rng)
        self.attn_mlp = SharedMlp([4, c_in], rng)
        self.global_mlp = SharedMlp([c_in, c_out], rng)
        self.k = k
        self.r = r
        self.aggregation_mode = aggregation_mode
        self.angular_mode = angular_mode

    @property
    def c_in(self) -> int:
        return self.edge_mlp.c_in

    @property
    def c_out(self) -> int:
        return self.edge_mlp.c_out

    def __call__(self, x, points, graph: NeighborGraph, training: bool,
                 geo: EdgeGeometry | None = None) -> Tensor:
        return vaconv_forward(x, points, graph, self, training, geo)


def edge_weights(geo: EdgeGeometry, angular_mode: str) -> Tensor:
    """Per-edge scalar: angular factor times distance attention."""
    return mul(angular_factor(geo.elev, geo.azim, angular_mode), geo.m_weight)


def vaconv_local(x, points, graph: NeighborGraph, geo: EdgeGeometry, params: VAConv,
                 training: bool) -> Tensor:
    """Geometry-weighted aggregation of transformed edge features."""
    x = as_tensor(x)
    if geo.dist.shape != graph.indices.shape:
        raise DimensionError(f"geometry {geo.dist.shape} does not match graph {graph.indices.shape}")
    h = mlp_on_edge_differences(x, graph, params.edge_mlp, training)
    lam = edge_weights(geo, params.angular_mode)
    lam = reshape(lam, lam.shape + (1,))
    if params.aggregation_mode == "sum":
        keep = (~np.asarray(graph.pad_mask))[..., None].astype(h.dtype)
        return reduce_sum(mul(h, mul(lam, keep)), axis=-2)
    if params.aggregation_mode == "weighted_max":
        return masked_neighbor_max(mul(h, lam), graph.pad_mask)
    raise ValueError(f"unknown aggregation mode {params.aggregation_mode!r}")


def vaconv_global(x, geo: EdgeGeometry, params: VAConv, training: bool) -> Tensor:
    """Relative-vector attention over the input features, then an MLP."""
    x = as_tensor(x)
    if params.attn_mlp.c_out != x.shape[-1]:
        raise DimensionError(f"attention width {params.attn_mlp.c_out} != feature width {x.shape[-1]}")
    dist = geo.dist
    edge_geo = concat([geo.rel, reshape(dist, dist.shape + (1,))], axis=-1)
    attn = masked_neighbor_max(params.attn_mlp(edge_geo, training), geo.pad_mask)
    return params.global_mlp(mul(x, attn), training)


def vaconv_forward(x, points, graph: NeighborGraph, params: VAConv, training: bool,
                   geo: EdgeGeometry | None = None) -> Tensor:
    if geo is None:
        geo = edge_geometry(points, graph)
    return add(vaconv_global(x, geo, params, training),
               vaconv_local(x, points, graph, geo, params, training))


class EdgeConv(Module):
    def __init__(self, c_in: int, widths, rng, k: int = 20):
        widths = [widths] if isinstance(widths, int) else list(widths)
        self.mlp = SharedMlp([2 * c_in] + widths, rng)
        self.k = k

    @property
    def c_in(self) -> int:
        return self.mlp.c_in // 2

    @property
    def c_out(self) -> int:
        return self.mlp.c_out

    def __call__(self, x, graph: NeighborGraph, training: bool) -> Tensor:
        return edgeconv_forward(x, graph, self, training)


def edgeconv_forward(x, graph: NeighborGraph, params: EdgeConv, training: bool) -> Tensor:
    """max_j mlp(concat(x_i, x_j - x_i)).

    The first linear map is split into its center and edge halves so the
    center half is evaluated once per point instead of once per edge.
    """
    x = as_tensor(x)
    c = params.c_in
    if x.shape[-1] != c:
        raise DimensionError(f"EdgeConv expects {c} channels, got shape {x.shape}")
    d = edge_features(x, graph)
    first = params.mlp.layers[0]
    w = first.linear.weight
    center = x @ w[:c]
    y = add(reshape(center, center.shape[:-1] + (1, center.shape[-1])), d @ w[c:])
    if first.linear.bias is not None:
        y = add(y, first.linear.bias)
    y = first.post(y, training)
    for layer in params.mlp.layers[1:]:
        y = layer(y, training)
    return masked_neighbor_max(y, graph.pad_mask)
