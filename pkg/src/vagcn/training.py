"""Training loop, evaluation metrics, multi-sample inference and checkpoints."""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .autodiff import OptimizerState, Tape, adam_step, cosine_lr, read_weights, softmax, write_weights
from .data.container import DatasetContainer
from .data.transforms import augment
from .errors import ConfigError, NumericError
from .model import VAGCN, ModelConfig, build_model, forward, loss


@dataclass
class TrainConfig:
    batch_size: int = 16
    lr0: float = 1e-3
    weight_decay: float = 1e-4
    epochs: int = 60
    seed: int = 0
    augment: bool = True
    eval_batch_size: int = 50
    checkpoint: str | None = None
    metrics: str | None = None

    def validate(self) -> "TrainConfig":
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1 or self.eval_batch_size < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.lr0 < 0 or self.weight_decay < 0:
            raise ConfigError("lr0 and weight_decay must be non-negative")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------- checkpoints

def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def save_checkpoint(model: VAGCN, path) -> None:
    """Weights as VAGW plus ``<path>.json`` holding the model config."""
    write_weights(path, model.state_dict())
    sidecar_path(path).write_text(json.dumps(model.cfg.to_dict(), indent=2, sort_keys=True) + "\n")


def load_checkpoint(path, cfg: ModelConfig | None = None) -> VAGCN:
    """Rebuild a model from its checkpoint. ``cfg`` overrides the sidecar."""
    if cfg is None:
        cfg = ModelConfig.from_dict(json.loads(sidecar_path(path).read_text()))
    model = build_model(cfg)
    model.load_state_dict(read_weights(path))
    return model.eval()


# ---------------------------------------------------------------- metrics

def classification_metrics(pred: np.ndarray, target: np.ndarray, num_classes: int) -> dict:
    """Overall accuracy and mean per-class accuracy (classes absent from target are skipped)."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if target.size == 0:
        raise ValueError("cannot score an empty dataset")
    oa = float(np.mean(pred == target))
    per_class = [np.mean(pred[target == c] == c) for c in range(num_classes) if np.any(target == c)]
    return {"oa": oa, "mca": float(np.mean(per_class))}


def part_map_from(ds: DatasetContainer) -> dict[int, np.ndarray]:
    """Part ids observed for each object category."""
    return {int(c): np.unique(ds.labels[ds.categories == c]) for c in np.unique(ds.categories)}


def shape_iou(pred: np.ndarray, target: np.ndarray, parts) -> float:
    """Mean IoU over a shape's candidate parts; a part absent from both counts as 1."""
    ious = []
    for p in parts:
        inter = np.sum((pred == p) & (target == p))
        union = np.sum((pred == p) | (target == p))
        ious.append(1.0 if union == 0 else inter / union)
    return float(np.mean(ious))


def segmentation_metrics(pred: np.ndarray, target: np.ndarray, categories: np.ndarray,
                         part_map: dict, num_classes: int) -> dict:
    out = classification_metrics(pred.ravel(), target.ravel(), num_classes)
    ious = np.array([shape_iou(p, t, part_map[int(c)]) for p, t, c in zip(pred, target, categories)])
    per_cat = [ious[categories == c].mean() for c in np.unique(categories)]
    out["miou_ins"] = float(ious.mean())
    out["miou_cls"] = float(np.mean(per_cat))
    return out


def predict_logits(model: VAGCN, ds: DatasetContainer, batch_size: int = 50) -> np.ndarray:
    x = ds.inputs()
    outs = []
    for s in range(0, ds.num_samples, batch_size):
        cats = None if ds.categories is None else ds.categories[s:s + batch_size]
        outs.append(forward(model, x[s:s + batch_size], cats, training=False).data)
    return np.concatenate(outs, axis=0)


def evaluate(model: VAGCN, ds: DatasetContainer, batch_size: int = 50,
             part_map: dict | None = None) -> dict:
    """OA and mCA; segmentation also reports class- and instance-averaged mIoU.

    Segmentation predictions are restricted to the parts of each shape's category.
    """
    if ds.num_samples == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    logits = predict_logits(model, ds, batch_size)
    if not ds.segmentation:
        return classification_metrics(logits.argmax(axis=-1), ds.labels, ds.num_classes)
    part_map = part_map_from(ds) if part_map is None else part_map
    pred = np.empty(ds.labels.shape, dtype=np.int64)
    for i, c in enumerate(ds.categories):
        parts = part_map[int(c)]
        pred[i] = parts[logits[i][:, parts].argmax(axis=-1)]
    return segmentation_metrics(pred, ds.labels, ds.categories, part_map, ds.num_classes)


# ---------------------------------------------------------------- multi-sample inference

def msi_indices(total: int, m: int, repeats: int, seed: int) -> np.ndarray:
    """(R, m) sorted subsample indices, drawn without replacement per repeat."""
    if m > total:
        raise ValueError(f"cloud has {total} points, fewer than the subsample size {m}")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rng = np.random.default_rng(seed)
    return np.stack([np.sort(rng.choice(total, size=m, replace=False)) for _ in range(repeats)])


def msi_predict(model: VAGCN, cloud: np.ndarray, m: int | None = None, repeats: int = 10,
                seed: int = 0) -> np.ndarray:
    """Class probabilities averaged over ``repeats`` random m-point subsamples.

    Subsample indices are sorted, so with repeats=1 and m equal to the cloud
    size the input (and the output) match a plain forward pass exactly.
    """
    cloud = np.asarray(cloud)
    m = model.cfg.points_per_sample if m is None else m
    idx = msi_indices(cloud.shape[0], m, repeats, seed)
    probs = softmax(forward(model, cloud[idx], training=False).data)
    return probs.sum(axis=0) / repeats


def msi_evaluate(model: VAGCN, ds: DatasetContainer, repeats: int = 10, seed: int = 0,
                 m: int | None = None) -> dict:
    x = ds.inputs()
    pred = np.array([msi_predict(model, x[i], m, repeats, seed + i).argmax() for i in range(ds.num_samples)])
    return classification_metrics(pred, ds.labels, ds.num_classes)


# ---------------------------------------------------------------- training

@dataclass
class TrainResult:
    history: list
    best: dict
    steps: int


def _metrics_line(fh, record: dict) -> None:
    if fh is not None:
        fh.write(json.dumps(record, sort_keys=True) + "\n")
        fh.flush()


def _score(metrics: dict) -> float:
    return metrics.get("miou_ins", metrics["oa"])


def train(model: VAGCN, train_ds: DatasetContainer, tc: TrainConfig,
          eval_ds: DatasetContainer | None = None, header: dict | None = None,
          log=None) -> TrainResult:
    """Adam with decoupled weight decay and a per-step cosine schedule.

    After every epoch the model is scored on ``eval_ds`` (the training set
    when omitted) and the best-scoring weights are written to
    ``tc.checkpoint``. One JSON line per epoch goes to ``tc.metrics``, after
    a header line holding the resolved configuration.
    """
    tc.validate()
    if train_ds.num_samples == 0:
        raise ValueError("training set is empty")
    eval_ds = train_ds if eval_ds is None else eval_ds
    part_map = part_map_from(train_ds) if train_ds.segmentation else None
    if part_map is not None and eval_ds.segmentation:
        for c, parts in part_map_from(eval_ds).items():
            part_map[c] = np.union1d(part_map.get(c, parts), parts)

    rng = np.random.default_rng(tc.seed)
    x_all = train_ds.inputs()
    labels_all = train_ds.labels.astype(np.int64)
    n = train_ds.num_samples
    per_epoch = math.ceil(n / tc.batch_size)
    total = tc.epochs * per_epoch
    opt = OptimizerState(lr0=tc.lr0, weight_decay=tc.weight_decay, total_steps=total)
    named = list(model.named_parameters())
    params = [p for _, p in named]

    fh = open(tc.metrics, "w") if tc.metrics else None
    history, best = [], None
    try:
        _metrics_line(fh, {"header": True, "model": model.cfg.to_dict(), "train": tc.to_dict(),
                           **(header or {})})
        for epoch in range(1, tc.epochs + 1):
            start = time.perf_counter()
            model.train()
            order = rng.permutation(n)
            losses, lr = [], 0.0
            for step in range(per_epoch):
                batch = order[step * tc.batch_size:(step + 1) * tc.batch_size]
                xb = x_all[batch]
                if tc.augment:
                    xb = xb.copy()
                    for j in range(len(batch)):
                        xb[j, :, :3] = augment(xb[j, :, :3], rng)
                cats = None if train_ds.categories is None else train_ds.categories[batch]
                with Tape() as tape:
                    value = loss(forward(model, xb, cats, training=True), labels_all[batch])
                if not np.isfinite(value.item()):
                    raise NumericError(f"non-finite loss at epoch {epoch}, step {step + 1}")
                tape.backward(value, params)
                lr = cosine_lr(opt.t, total, tc.lr0)
                try:
                    adam_step(opt, named, lr=lr)
                except NumericError as exc:
                    raise NumericError(f"epoch {epoch}, step {step + 1}: {exc}") from None
                losses.append(value.item())
            model.eval()
            metrics = evaluate(model, eval_ds, tc.eval_batch_size, part_map)
            record = {"epoch": epoch, "lr": lr, "loss": float(np.mean(losses)), **metrics,
                      "epoch_seconds": round(time.perf_counter() - start, 3)}
            history.append(record)
            _metrics_line(fh, record)
            if log is not None:
                log(record)
            if best is None or _score(metrics) > _score(best):
                best = dict(record)
                if tc.checkpoint:
                    save_checkpoint(model, tc.checkpoint)
    finally:
        if fh is not None:
            fh.close()
    return TrainResult(history, best, opt.t)
