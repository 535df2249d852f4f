"""VA-GCN assembly: EdgeConv channel, parallel multi-scale VAConv channel,
fusion channel, and classification / part-segmentation heads."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .autodiff import (
    Linear,
    Module,
    Tensor,
    add,
    concat,
    cross_entropy,
    expand,
    get_default_dtype,
    reduce_max,
    reshape,
    softmax,
)
from .errors import ConfigError, DimensionError
from .geometry import edge_geometry
from .layers import AGGREGATION_MODES, ANGULAR_MODES, EdgeConv, MlpLayer, SharedMlp, VAConv
from .spatial import graph_from_sorted, knn_sorted

TASKS = ("classification", "part_segmentation")
PARALLEL_VARIANTS = {
    # (layer 1, layer 2, fusion) parallel?
    "v0": (False, False, False),
    "v1": (True, False, False),
    "v2": (True, True, False),
    "v3": (True, True, True),
}
CHANNEL_VARIANTS = ("edgeconv_only", "vaconv_only", "dual")
GRAPH_SPACES = ("coords", "features")


@dataclass
class ModelConfig:
    """Architecture description. Defaults are the CPU-sized desk schedule
    (full widths / 4, k=8); :meth:`full_scale` restores full widths."""

    task: str = "classification"
    num_classes: int = 8
    num_categories: int = 16
    points_per_sample: int = 256
    extra_channels: int = 0
    k: int = 8
    radii1: tuple = (0.1, 0.2)
    radii2: tuple = (0.3, 0.4)
    radii_fusion: tuple = (0.6, 0.8)
    edgeconv_widths: tuple = (16, 16, 32)
    stem_width: int = 16
    layer1_width: int = 16
    layer2_width: int = 16
    fusion_width: int = 32
    embed_width: int = 512
    head_widths: tuple = (128, 64)
    label_width: int = 16
    parallel_variant: str = "v3"
    channel_variant: str = "dual"
    aggregation_mode: str = "sum"
    angular_mode: str = "cos_of_ratio"
    graph_space: str = "coords"
    seed: int = 0

    @classmethod
    def full_scale(cls, **overrides) -> "ModelConfig":
        base = dict(k=20, edgeconv_widths=(64, 64, 128), stem_width=64, layer1_width=64,
                    layer2_width=128, fusion_width=256, embed_width=2048, head_widths=(512, 256),
                    label_width=64, points_per_sample=1024, num_classes=40)
        base.update(overrides)
        return cls(**base)

    def validate(self) -> "ModelConfig":
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}")
        if self.parallel_variant not in PARALLEL_VARIANTS:
            raise ConfigError(f"parallel_variant must be one of {tuple(PARALLEL_VARIANTS)}")
        if self.channel_variant not in CHANNEL_VARIANTS:
            raise ConfigError(f"channel_variant must be one of {CHANNEL_VARIANTS}")
        if self.aggregation_mode not in AGGREGATION_MODES:
            raise ConfigError(f"aggregation_mode must be one of {AGGREGATION_MODES}")
        if self.angular_mode not in ANGULAR_MODES:
            raise ConfigError(f"angular_mode must be one of {ANGULAR_MODES}")
        if self.graph_space not in GRAPH_SPACES:
            raise ConfigError(f"graph_space must be one of {GRAPH_SPACES}")
        if self.k < 1 or self.points_per_sample < 2 or self.num_classes < 1:
            raise ConfigError("k, points_per_sample and num_classes must be positive")
        for name in ("radii1", "radii2", "radii_fusion"):
            radii = getattr(self, name)
            if len(radii) != 2 or any(not r > 0 for r in radii):
                raise ConfigError(f"{name} needs two positive radii, got {radii}")
        widths = [self.stem_width, self.layer1_width, self.layer2_width, self.fusion_width,
                  self.embed_width, self.label_width, *self.edgeconv_widths, *self.head_widths]
        if any(w < 1 for w in widths) or not self.edgeconv_widths:
            raise ConfigError("all channel widths must be positive")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)

    def replace(self, **kw) -> "ModelConfig":
        return replace(self, **kw)


class ParallelStage(Module):
    """One VAConv per radius with concatenated outputs, or a single VAConv of
    doubled width at the larger radius when the stage is not parallel."""

    def __init__(self, c_in, width, radii, parallel, cfg: ModelConfig, rng):
        if parallel:
            specs = [(width, r) for r in radii]
        else:
            specs = [(2 * width, max(radii))]
        self.branches = [VAConv(c_in, w, rng, cfg.k, r, cfg.aggregation_mode, cfg.angular_mode)
                         for w, r in specs]

    @property
    def c_out(self) -> int:
        return sum(b.c_out for b in self.branches)

    @property
    def radii(self) -> list:
        return [b.r for b in self.branches]

    def __call__(self, x, points, graphs, geos, training):
        outs = [b(x, points, graphs[b.r], training, geos[b.r]) for b in self.branches]
        return outs[0] if len(outs) == 1 else concat(outs, axis=-1)


class VAGCN(Module):
    def __init__(self, cfg: ModelConfig):
        cfg.validate()
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        c_in = 3 + cfg.extra_channels
        p1, p2, pf = PARALLEL_VARIANTS[cfg.parallel_variant]
        use_a = cfg.channel_variant in ("edgeconv_only", "dual")
        use_b = cfg.channel_variant in ("vaconv_only", "dual")
        fusion_in = 0

        if use_a:
            self.edgeconvs = []
            c = c_in
            for w in cfg.edgeconv_widths:
                self.edgeconvs.append(EdgeConv(c, w, rng, cfg.k))
                c = w
            fusion_in += cfg.edgeconv_widths[-1]
        if use_b:
            self.stem = SharedMlp([c_in, cfg.stem_width], rng)
            self.layer1 = ParallelStage(cfg.stem_width, cfg.layer1_width, cfg.radii1, p1, cfg, rng)
            self.layer2 = ParallelStage(self.layer1.c_out, cfg.layer2_width, cfg.radii2, p2, cfg, rng)
            self.skip = SharedMlp([cfg.stem_width, self.layer2.c_out], rng)
            fusion_in += self.layer2.c_out
        self.fusion = ParallelStage(fusion_in, cfg.fusion_width, cfg.radii_fusion, pf, cfg, rng)
        self.embed = SharedMlp([self.fusion.c_out, cfg.embed_width], rng)

        if cfg.task == "classification":
            widths = [cfg.embed_width, *cfg.head_widths]
            self.head = [MlpLayer(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]
            self.classifier = Linear(widths[-1], cfg.num_classes, rng)
        else:
            self.label_mlp = MlpLayer(cfg.num_categories, cfg.label_width, rng)
            widths = [self.fusion.c_out + cfg.embed_width + cfg.label_width, *cfg.head_widths]
            self.head = [MlpLayer(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]
            self.classifier = Linear(widths[-1], cfg.num_classes, rng)

    @property
    def input_channels(self) -> int:
        return 3 + self.cfg.extra_channels

    def _radii(self) -> set:
        radii = set(self.fusion.radii)
        if hasattr(self, "layer1"):
            radii |= set(self.layer1.radii) | set(self.layer2.radii)
        return radii

    def __call__(self, x, categories=None, training: bool | None = None, capture: dict | None = None):
        return forward(self, x, categories, training, capture)


def build_model(cfg: ModelConfig) -> VAGCN:
    return VAGCN(cfg)


def forward(model: VAGCN, x, categories=None, training: bool | None = None,
            capture: dict | None = None) -> Tensor:
    """Logits of shape (B, num_classes) or (B, N, num_parts).

    ``x`` is (B, N, 3 + E): positions first, then any extra channels.
    ``capture``, when given, receives the neighbor graphs and edge geometry
    used by each radius, keyed by radius.
    """
    cfg = model.cfg
    training = model.training if training is None else training
    xd = x.data if isinstance(x, Tensor) else np.asarray(x)
    if xd.ndim == 2:
        xd = xd[None]
    if xd.ndim != 3 or xd.shape[1] != cfg.points_per_sample or xd.shape[2] != model.input_channels:
        raise DimensionError(f"expected input (B, {cfg.points_per_sample}, {model.input_channels}), "
                             f"got {np.shape(xd)}")
    B, N, _ = xd.shape
    xd = xd.astype(get_default_dtype(), copy=False)
    points = xd[..., :3]
    feats = x if isinstance(x, Tensor) and x.ndim == 3 else Tensor(xd)
    # geometry is differentiated only when the caller asks for input gradients
    geo_points = feats[..., :3] if feats.requires_grad else points

    order, dist_sorted = knn_sorted(points, k=cfg.k)
    graphs, geos = {}, {}
    for r in sorted(model._radii()):
        graphs[r] = graph_from_sorted(order, dist_sorted, cfg.k, r)
        geos[r] = edge_geometry(geo_points, graphs[r])
    if capture is not None:
        capture["graphs"] = graphs
        capture["geometry"] = geos

    branches = []
    if hasattr(model, "edgeconvs"):
        full = graph_from_sorted(order, dist_sorted, cfg.k)
        e = feats
        for i, ec in enumerate(model.edgeconvs):
            g = full
            if i > 0 and cfg.graph_space == "features":
                o, ds = knn_sorted(e.data, k=cfg.k)
                g = graph_from_sorted(o, ds, cfg.k)
            e = ec(e, g, training)
        # the channel is a cascade; its output is the last EdgeConv's features
        branches.append(e)
    if hasattr(model, "stem"):
        x0 = model.stem(feats, training)
        l1 = model.layer1(x0, geo_points, graphs, geos, training)
        l2 = model.layer2(l1, geo_points, graphs, geos, training)
        branches.append(add(l2, model.skip(x0, training)))
    fused_in = branches[0] if len(branches) == 1 else concat(branches, axis=-1)
    fused = model.fusion(fused_in, geo_points, graphs, geos, training)
    emb = model.embed(fused, training)
    glob = reduce_max(emb, axis=1)

    if cfg.task == "classification":
        h = glob
        for layer in model.head:
            h = layer(h, training)
        return model.classifier(h)

    if categories is None:
        raise ValueError("part segmentation needs object categories")
    onehot = np.zeros((B, cfg.num_categories), dtype=xd.dtype)
    onehot[np.arange(B), np.asarray(categories)] = 1.0
    lab = model.label_mlp(Tensor(onehot, dtype=xd.dtype), training)
    per_point = [fused,
                 expand(reshape(glob, (B, 1, cfg.embed_width)), (B, N, cfg.embed_width)),
                 expand(reshape(lab, (B, 1, cfg.label_width)), (B, N, cfg.label_width))]
    h = concat(per_point, axis=-1)
    for layer in model.head:
        h = layer(h, training)
    return model.classifier(h)


def loss(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy over the batch (and over points for segmentation)."""
    return cross_entropy(logits, np.asarray(labels, dtype=np.int64))


def predict_proba(model: VAGCN, x, categories=None) -> np.ndarray:
    return softmax(forward(model, x, categories, training=False).data)
