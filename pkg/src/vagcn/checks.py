"""Finite-difference gradient suite over every differentiable op plus a
micro end-to-end model. Runs in float64."""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, Tensor, default_dtype, grad_check
from .geometry import distance_attention, edge_geometry, elevation_azimuth, relative_vectors
from .layers import EdgeConv, VAConv, edge_features, edgeconv_forward, vaconv_forward, vaconv_global, vaconv_local
from .model import ModelConfig, build_model, forward, loss
from .spatial import knn_bruteforce

TOLERANCE = 1e-4


def _param(rng, *shape, scale=1.0, shift=0.0) -> Tensor:
    return Tensor(rng.standard_normal(shape) * scale + shift, requires_grad=True)


def _cloud(rng, n=12):
    pts = rng.uniform(-1, 1, size=(n, 3))
    return pts, knn_bruteforce(pts, 4, 1.2)


def _layer_case(rng, aggregation="sum", angular="cos_of_ratio"):
    pts, graph = _cloud(rng)
    layer = VAConv(5, 6, rng, 4, 1.2, aggregation, angular)
    x = _param(rng, pts.shape[0], 5)
    p = Tensor(pts, requires_grad=True)
    return layer, x, p, graph


def _check_matmul(rng, eps):
    a, b = _param(rng, 3, 4), _param(rng, 4, 2)
    return grad_check(lambda: a @ b, [a, b], eps)


def _ewise(kind):
    def check(rng, eps):
        a, b = _param(rng, 4, 3), _param(rng, 3, shift=3.0)
        return grad_check(lambda: ad.ewise(kind, a, b), [a, b], eps)
    return check


def _check_div(rng, eps):
    a, b = _param(rng, 4, 3), _param(rng, 4, 3, scale=0.3, shift=2.0)
    return grad_check(lambda: ad.div(a, b), [a, b], eps)


def _check_sum(rng, eps):
    a = _param(rng, 3, 4, 2)
    return grad_check(lambda: ad.reduce_sum(a, axis=1), [a], eps)


def _check_max(rng, eps):
    a = _param(rng, 5, 6, 3)
    return max(grad_check(lambda: ad.reduce_max(a, axis=1), [a], eps),
               grad_check(lambda: ad.reduce_max(a, axis=-1), [a], eps))


def _check_gather(rng, eps):
    x = _param(rng, 6, 3)
    idx = rng.integers(0, 6, size=(6, 4))
    return grad_check(lambda: ad.gather_rows(x, idx), [x], eps)


def _check_concat(rng, eps):
    a, b = _param(rng, 4, 2, 3), _param(rng, 4, 2, 1)
    return grad_check(lambda: ad.concat([a, b], axis=-1), [a, b], eps)


def _activation(kind):
    def check(rng, eps):
        x = _param(rng, 5, 4)
        x.data[np.abs(x.data) < 0.05] += 0.3  # stay clear of the kink
        return grad_check(lambda: ad.activation(x, kind), [x], eps)
    return check


def _check_batch_norm(rng, eps):
    state = BatchNormState(4)
    state.scale.data[:] = rng.uniform(0.5, 1.5, 4)
    state.shift.data[:] = rng.standard_normal(4)
    x = _param(rng, 6, 5, 4, scale=2.0, shift=1.0)
    worst = 0.0
    for training in (True, False):
        worst = max(worst, grad_check(lambda: ad.batch_norm(x, state, training), [x, state.scale, state.shift], eps))
    return worst


def _check_cross_entropy(rng, eps):
    logits = _param(rng, 5, 4)
    labels = rng.integers(0, 4, size=5)
    return grad_check(lambda: ad.cross_entropy(logits, labels), [logits], eps)


def _check_norm(rng, eps):
    x = _param(rng, 4, 5, 3)
    return grad_check(lambda: ad.norm(x, axis=-1), [x], eps)


def _stack_last(values) -> Tensor:
    """Concatenate (..., K) tensors into one (..., K, len(values)) tensor."""
    return ad.concat([ad.reshape(v, v.shape + (1,)) for v in values], axis=-1)


def _check_relative_vectors(rng, eps):
    pts, graph = _cloud(rng)
    p = Tensor(pts, requires_grad=True)

    def f():
        rel, dist = relative_vectors(p, graph)
        return ad.concat([rel, ad.reshape(dist, dist.shape + (1,))], axis=-1)
    return grad_check(f, [p], eps)


def _check_elevation_azimuth(rng, eps):
    rel = _param(rng, 6, 4, 3)
    return grad_check(lambda: _stack_last(elevation_azimuth(rel, ad.norm(rel, axis=-1))), [rel], eps)


def _check_distance_attention(rng, eps):
    d = Tensor(rng.uniform(0.1, 2.0, size=(6, 5)), requires_grad=True)
    return grad_check(lambda: distance_attention(d), [d], eps)


def _check_edge_geometry(rng, eps):
    pts, graph = _cloud(rng)
    p = Tensor(pts, requires_grad=True)

    def f():
        g = edge_geometry(p, graph)
        return _stack_last((g.elev, g.azim, g.m_weight))
    return grad_check(f, [p], eps)


def _check_edge_features(rng, eps):
    pts, graph = _cloud(rng)
    x = _param(rng, pts.shape[0], 3)
    return grad_check(lambda: edge_features(x, graph), [x], eps)


def _vaconv(part, aggregation="sum"):
    def check(rng, eps):
        layer, x, p, graph = _layer_case(rng, aggregation)
        inputs = [x, p] + layer.parameters()
        if part == "local":
            f = lambda: vaconv_local(x, p, graph, edge_geometry(p, graph), layer, True)
        elif part == "global":
            f = lambda: vaconv_global(x, edge_geometry(p, graph), layer, True)
        else:
            f = lambda: vaconv_forward(x, p, graph, layer, True)
        return grad_check(f, inputs, eps)
    return check


def _check_edgeconv(rng, eps):
    pts, graph = _cloud(rng)
    layer = EdgeConv(3, [6, 5], rng, 4)
    x = _param(rng, pts.shape[0], 3)
    return grad_check(lambda: edgeconv_forward(x, graph, layer, True), [x] + layer.parameters(), eps)


def micro_config(**overrides) -> ModelConfig:
    """N=16, k=4, every stage 8 channels wide; radii sized so neighborhoods are populated."""
    base = dict(num_classes=3, points_per_sample=16, k=4, radii1=(0.6, 0.9), radii2=(1.0, 1.3),
                radii_fusion=(1.5, 2.0), edgeconv_widths=(8, 8, 8), stem_width=8, layer1_width=8,
                layer2_width=8, fusion_width=8, embed_width=8, head_widths=(8, 8), label_width=8)
    base.update(overrides)
    return ModelConfig(**base)


def _check_micro_model(rng, eps):
    model = build_model(micro_config(seed=int(rng.integers(1 << 30))))
    # zero-valued inputs (self-pad edges) map to the activation kink when
    # every shift is 0, so move the shifts off zero
    for _, bn in model.batch_norms():
        bn.shift.data[:] = rng.uniform(0.1, 0.5, bn.channels) * rng.choice([-1.0, 1.0], bn.channels)
    pts = rng.uniform(-1, 1, size=(2, 16, 3))
    x = Tensor(pts, requires_grad=True)
    labels = rng.integers(0, 3, size=2)
    # batch norm runs on its running statistics here: with a batch of two, batch
    # statistics pin the head activations to +-1 and starve every gradient
    return grad_check(lambda: loss(forward(model, x, training=False), labels),
                      [x] + model.parameters(), eps)


CHECKS: dict[str, Callable] = {
    "matmul": _check_matmul,
    "add": _ewise("add"),
    "sub": _ewise("sub"),
    "mul": _ewise("mul"),
    "div": _check_div,
    "reduce_sum": _check_sum,
    "reduce_max": _check_max,
    "gather_rows": _check_gather,
    "concat": _check_concat,
    "relu": _activation("relu"),
    "leaky_relu": _activation("leaky_relu"),
    "batch_norm": _check_batch_norm,
    "cross_entropy": _check_cross_entropy,
    "norm": _check_norm,
    "relative_vectors": _check_relative_vectors,
    "elevation_azimuth": _check_elevation_azimuth,
    "distance_attention": _check_distance_attention,
    "edge_geometry": _check_edge_geometry,
    "edge_features": _check_edge_features,
    "vaconv_local": _vaconv("local"),
    "vaconv_local_weighted_max": _vaconv("local", "weighted_max"),
    "vaconv_global": _vaconv("global"),
    "vaconv_forward": _vaconv("forward"),
    "edgeconv_forward": _check_edgeconv,
    "micro_model": _check_micro_model,
}


def run_suite(only=None, eps: float = 1e-6, seed: int = 0) -> dict[str, float]:
    """Max relative error per check, computed in float64."""
    names = list(CHECKS) if not only else list(only)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown gradcheck item(s): {', '.join(unknown)}")
    results = {}
    with default_dtype(np.float64):
        for i, name in enumerate(names):
            rng = np.random.default_rng([seed, i])
            results[name] = CHECKS[name](rng, eps)
    return results
