from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, NumericError
from .tensor import Tensor


def cosine_lr(t: int, total: int, lr0: float) -> float:
    """Cosine annealing from ``lr0`` at t=0 down to 0 at t=total."""
    if total == 0:
        raise ValueError("total steps must be positive")
    if not 0 <= t <= total:
        raise ValueError(f"step {t} outside [0, {total}]")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * t / total))


@dataclass
class OptimizerState:
    lr0: float = 1e-3
    weight_decay: float = 1e-4
    total_steps: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: OptimizerState, params, grads=None, lr: float | None = None) -> None:
    """One Adam update with decoupled weight decay, applied in place.

    ``params`` is a sequence of (name, Tensor) pairs. ``grads`` defaults to each
    tensor's ``.grad``; a missing gradient counts as zero. ``lr`` defaults to
    the cosine schedule evaluated at the current step.
    """
    params = list(params)
    if grads is None:
        grads = [p.grad for _, p in params]
    grads = list(grads)
    if len(grads) != len(params):
        raise DimensionError(f"{len(params)} params but {len(grads)} grads")
    for (name, p), g in zip(params, grads):
        if g is not None and not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        if g is not None and np.shape(g) != p.shape:
            raise DimensionError(f"{name}: grad shape {np.shape(g)} != param shape {p.shape}")

    if lr is None:
        lr = cosine_lr(min(state.t, state.total_steps), state.total_steps, state.lr0)
    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for (name, p), g in zip(params, grads):
        data = p.data
        if g is None:
            g = np.zeros_like(data)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(data)
            state.v[name] = np.zeros_like(data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        if state.weight_decay:
            data -= (lr * state.weight_decay) * data
        data -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(data.dtype, copy=False)
