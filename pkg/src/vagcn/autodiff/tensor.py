"""Dense tensors on top of numpy with a recorded tape for reverse-mode gradients.

Operations record themselves on the innermost active :class:`Tape` whenever one
of their inputs requires a gradient. Outside a tape nothing is recorded, which
is how inference runs.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

from ..errors import BoundsError, DimensionError, StaleTapeError

_state = threading.local()
_default_dtype = np.float64


def set_default_dtype(dtype) -> None:
    global _default_dtype
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype!r}")
    _default_dtype = dtype


def get_default_dtype():
    return _default_dtype


@contextmanager
def default_dtype(dtype):
    previous = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


def _tape_stack() -> list:
    stack = getattr(_state, "stack", None)
    if stack is None:
        stack = _state.stack = []
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node_id", "tape", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype or _default_dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self.node_id = None
        self.tape = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def max(self, axis, keepdims=False):
        return reduce_max(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self, params: Sequence["Tensor"] = ()):
        if self.tape is None:
            raise StaleTapeError("tensor was not produced on a recording tape")
        return self.tape.backward(self, params)


class _Record:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out, inputs, backward):
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered log of differentiable operations executed inside ``with tape:``.

    A tape supports exactly one backward pass; afterwards its records are
    released and any further ``backward`` raises :class:`StaleTapeError`.
    """

    def __init__(self):
        self.records: list[_Record] = []
        self.consumed = False

    def __enter__(self):
        if self.consumed:
            raise StaleTapeError("cannot record on a consumed tape")
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def __len__(self):
        return len(self.records)

    def record(self, out: Tensor, inputs: tuple, backward: Callable) -> None:
        out.requires_grad = True
        out.node_id = len(self.records)
        out.tape = self
        self.records.append(_Record(out, inputs, backward))

    def backward(self, loss: Tensor, params: Sequence[Tensor] = ()) -> dict:
        """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every leaf on the tape.

        Returns a dict keyed by ``id(leaf)``. Leaves listed in ``params`` that do
        not influence the loss receive a zero gradient.
        """
        if self.consumed:
            raise StaleTapeError("backward already ran on this tape; run forward again")
        if loss.size != 1:
            raise DimensionError(f"loss must be a scalar, got shape {loss.shape}")
        nid = loss.node_id
        if nid is None or nid >= len(self.records) or self.records[nid].out is not loss:
            raise StaleTapeError("loss was not recorded on this tape")

        grads = {id(loss): np.ones_like(loss.data)}
        leaves = {}
        for rec in reversed(self.records[: nid + 1]):
            g = grads.pop(id(rec.out), None)
            if g is None:
                continue
            in_grads = rec.backward(g)
            for inp, gi in zip(rec.inputs, in_grads):
                if gi is None or not isinstance(inp, Tensor) or not inp.requires_grad:
                    continue
                key = id(inp)
                if inp.tape is not self:
                    leaves[key] = inp
                prev = grads.get(key)
                grads[key] = gi if prev is None else prev + gi

        result = {}
        for key, leaf in leaves.items():
            g = grads[key].astype(leaf.data.dtype, copy=False)
            leaf.grad = g if leaf.grad is None else leaf.grad + g
            result[key] = leaf.grad
        for p in params:
            if id(p) not in result:
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)
                result[id(p)] = p.grad

        self.records.clear()
        self.consumed = True
        return result


def backward(tape: Tape, loss: Tensor, params: Sequence[Tensor] = ()) -> dict:
    return tape.backward(loss, params)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, (int, float)):
        return Tensor(x)
    arr = np.asarray(x)
    return Tensor(arr, dtype=arr.dtype if arr.dtype.kind == "f" else None)


def _result(data, inputs, backward) -> Tensor:
    out = Tensor(data, dtype=data.dtype)
    tape = active_tape()
    if tape is not None and any(isinstance(t, Tensor) and t.requires_grad for t in inputs):
        tape.record(out, inputs, backward)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    sa, sb = a.shape, b.shape
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    sa, sb = a.shape, b.shape
    return _result(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    ad, bd = a.data, b.data

    def bw(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return _result(ad * bd, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    ad, bd = a.data, b.data

    def bw(g):
        ga = _unbroadcast(g / bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * ad / (bd * bd), bd.shape) if b.requires_grad else None
        return ga, gb

    return _result(ad / bd, (a, b), bw)


_EWISE = {"add": add, "sub": sub, "mul": mul}


def ewise(op_kind: str, a, b) -> Tensor:
    try:
        fn = _EWISE[op_kind]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op_kind!r}") from None
    return fn(a, b)


def square(x: Tensor) -> Tensor:
    xd = x.data
    return _result(xd * xd, (x,), lambda g: (2.0 * g * xd,))


def cos(x: Tensor) -> Tensor:
    xd = x.data
    return _result(np.cos(xd), (x,), lambda g: (-g * np.sin(xd),))


def safe_div(num: Tensor, den: Tensor, threshold: float) -> Tensor:
    """``num / den`` where ``|den| >= threshold``, else 0 (gradient 0 there too)."""
    num, den = as_tensor(num), as_tensor(den)
    _broadcast_shape(num, den)
    nd, dd = num.data, den.data
    ok = np.abs(dd) >= threshold
    safe = np.where(ok, dd, 1.0)
    out = np.where(ok, nd / safe, 0.0).astype(nd.dtype, copy=False)

    def bw(g):
        g = np.where(ok, g, 0.0)
        gn = _unbroadcast(g / safe, nd.shape) if num.requires_grad else None
        gd = _unbroadcast(-g * nd / (safe * safe), dd.shape) if den.requires_grad else None
        return gn, gd

    return _result(out, (num, den), bw)


def norm(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Euclidean norm along ``axis``; the gradient at a zero vector is taken as 0."""
    xd = x.data
    ax = axis % xd.ndim
    comps = np.moveaxis(xd, ax, 0)
    sq = comps[0] * comps[0]
    for c in comps[1:]:
        sq = sq + c * c
    n = np.sqrt(sq)
    nk = np.expand_dims(n, ax)

    def bw(g):
        gk = g if keepdims else np.expand_dims(g, ax)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(nk > 0, gk / np.where(nk > 0, nk, 1.0), 0.0)
        return (scale * xd,)

    return _result(nk if keepdims else n, (x,), bw)


def masked_fill(x: Tensor, mask: np.ndarray, value: float) -> Tensor:
    mask = np.asarray(mask, dtype=bool)
    xd = x.data
    try:
        out = np.where(mask, np.asarray(value, dtype=xd.dtype), xd)
    except ValueError:
        raise DimensionError(f"mask shape {mask.shape} does not broadcast to {xd.shape}") from None

    def bw(g):
        return (_unbroadcast(np.where(mask, 0.0, g).astype(g.dtype, copy=False), xd.shape),)

    return _result(out.astype(xd.dtype, copy=False), (x,), bw)


def activation(x: Tensor, kind: str = "leaky_relu", slope: float = 0.2) -> Tensor:
    """relu or leaky_relu; at exactly 0 the positive-branch slope is used."""
    if kind == "relu":
        slope = 0.0
    elif kind != "leaky_relu":
        raise ValueError(f"unknown activation {kind!r}")
    xd = x.data
    s = np.asarray(slope, dtype=xd.dtype)
    out = xd * s
    np.maximum(out, xd, out=out)
    # per-element derivative: 1 on x >= 0, slope elsewhere
    factor = np.empty_like(xd)
    np.greater_equal(xd, 0, out=factor, casting="unsafe")
    factor *= 1 - s
    factor += s
    return _result(out, (x,), lambda g: (g * factor,))


def relu(x: Tensor) -> Tensor:
    return activation(x, "relu")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    return activation(x, "leaky_relu", slope)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shapes {a.shape} and {b.shape} are incompatible")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul batch extents {a.shape} and {b.shape} do not broadcast") from None
    ad, bd = a.data, b.data
    flat = bd.ndim == 2
    if flat:
        out = (ad.reshape(-1, ad.shape[-1]) @ bd).reshape(ad.shape[:-1] + (bd.shape[-1],))
    else:
        out = ad @ bd

    def bw(g):
        ga = gb = None
        if flat:
            g2 = g.reshape(-1, g.shape[-1])
            if a.requires_grad:
                ga = (g2 @ bd.T).reshape(ad.shape)
            if b.requires_grad:
                gb = ad.reshape(-1, ad.shape[-1]).T @ g2
        else:
            if a.requires_grad:
                ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
            if b.requires_grad:
                gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return _result(out, (a, b), bw)


# ---------------------------------------------------------------- reductions

def _check_axis(x: Tensor, axis: int) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"axis {axis} out of range for rank {x.ndim}")
    return axis % x.ndim


def reduce_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = x.shape
    if axis is None:
        out = x.data.sum(keepdims=keepdims)

        def bw(g):
            return (np.broadcast_to(g, shape).copy(),)
    else:
        axis = _check_axis(x, axis)
        out = x.data.sum(axis=axis, keepdims=keepdims)

        def bw(g):
            gk = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(gk, shape).copy(),)

    return _result(np.asarray(out), (x,), bw)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else x.shape[_check_axis(x, axis)]
    return mul(reduce_sum(x, axis, keepdims), 1.0 / count)


def reduce_max(x: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    """Max along ``axis``; the gradient goes to the lowest-index maximizer only."""
    axis = _check_axis(x, axis)
    xd = x.data
    n = xd.shape[axis]
    if 1 <= n <= 32 and axis != xd.ndim - 1:
        # short non-trailing axis: a slot-by-slot scan beats argmax on a strided axis
        view = np.moveaxis(xd, axis, 0)
        best = view[0].copy()
        for j in range(1, n):
            np.maximum(best, view[j], out=best)
        out = np.expand_dims(best, axis) if keepdims else best

        def bw(g):
            gk = np.moveaxis(np.expand_dims(g, axis) if not keepdims else g, axis, 0)[0]
            gx = np.empty_like(xd)
            gview = np.moveaxis(gx, axis, 0)
            taken = np.zeros(best.shape, dtype=bool)
            for j in range(n):
                hit = view[j] == best
                hit &= ~taken
                taken |= hit
                np.multiply(gk, hit, out=gview[j])
            return (gx,)

        return _result(out, (x,), bw)

    arg = np.expand_dims(np.argmax(xd, axis=axis), axis)
    out = np.take_along_axis(xd, arg, axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis)

    def bw(g):
        gk = g if keepdims else np.expand_dims(g, axis)
        gx = np.zeros_like(xd)
        np.put_along_axis(gx, arg, gk, axis=axis)
        return (gx,)

    return _result(out, (x,), bw)


def reduce(op_kind: str, x: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    if op_kind == "sum":
        return reduce_sum(x, axis, keepdims)
    if op_kind == "max":
        return reduce_max(x, axis, keepdims)
    raise ValueError(f"unknown reduction {op_kind!r}")


# ---------------------------------------------------------------- shape / indexing

def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {src} into {tuple(shape)}") from None
    return _result(out, (x,), lambda g: (g.reshape(src),))


def expand(x: Tensor, shape) -> Tensor:
    """Broadcast ``x`` to ``shape``; the gradient sums over stretched axes."""
    src = x.shape
    try:
        out = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise DimensionError(f"cannot broadcast {src} to {tuple(shape)}") from None
    return _result(out, (x,), lambda g: (_unbroadcast(g, src),))


def take(x: Tensor, index) -> Tensor:
    xd = x.data
    out = xd[index]
    if np.shares_memory(out, xd):
        out = out.copy()

    parts = index if isinstance(index, tuple) else (index,)
    basic = all(p is Ellipsis or p is None or isinstance(p, (int, np.integer, slice)) for p in parts)

    def bw(g):
        gx = np.zeros_like(xd)
        if basic:
            gx[index] += g
        else:
            np.add.at(gx, index, g)
        return (gx,)

    return _result(np.asarray(out), (x,), bw)


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise DimensionError("concat needs at least one part")
    rank = parts[0].ndim
    if any(p.ndim != rank for p in parts):
        raise DimensionError(f"concat rank mismatch: {[p.shape for p in parts]}")
    axis = _check_axis(parts[0], axis)
    ref = parts[0].shape
    for p in parts[1:]:
        if any(s != r for i, (s, r) in enumerate(zip(p.shape, ref)) if i != axis):
            raise DimensionError(f"concat extent mismatch: {[q.shape for q in parts]}")
    out = np.concatenate([p.data for p in parts], axis=axis)
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(out, tuple(parts), bw)


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """``out[..., i, j, :] = x[..., idx[..., i, j], :]`` for x of shape (N, C) or (B, N, C)."""
    idx = np.asarray(idx)
    xd = x.data
    if xd.ndim == 2 and idx.ndim == 2:
        batched = False
        xb, ib = xd[None], idx[None]
    elif xd.ndim == 3 and idx.ndim == 3 and idx.shape[0] == xd.shape[0]:
        batched = True
        xb, ib = xd, idx
    else:
        raise DimensionError(f"gather_rows: x {xd.shape} and idx {idx.shape} are incompatible")
    B, N, C = xb.shape
    bad = (ib < 0) | (ib >= N)
    if bad.any():
        loc = tuple(int(v) for v in np.argwhere(bad)[0])
        where = loc if batched else loc[1:]
        raise BoundsError(f"gather index {int(ib[loc])} at {where} out of range for {N} rows")
    flat_idx = (ib + (np.arange(B) * N)[:, None, None]).reshape(-1)
    out = xb.reshape(B * N, C)[flat_idx].reshape(ib.shape + (C,))
    if not batched:
        out = out[0]

    def bw(g):
        return (_scatter_rows(g.reshape(-1, C), flat_idx, B * N).reshape(xd.shape),)

    return _result(out, (x,), bw)


def _scatter_rows(values: np.ndarray, rows: np.ndarray, n_rows: int) -> np.ndarray:
    """Sum ``values[e]`` into row ``rows[e]`` of an (n_rows, C) zero array."""
    ones = np.ones(rows.size, dtype=values.dtype)
    routing = sparse.csr_matrix((ones, (rows, np.arange(rows.size))), shape=(n_rows, rows.size))
    return np.asarray(routing @ values)


# ---------------------------------------------------------------- normalization

class BatchNormState:
    """Per-channel affine parameters plus running statistics."""

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.scale = Tensor(np.ones(channels), requires_grad=True)
        self.shift = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=_default_dtype)
        self.running_var = np.ones(channels, dtype=_default_dtype)


def batch_norm(x: Tensor, state: BatchNormState, training: bool, act: str | None = None,
               slope: float = 0.2) -> Tensor:
    """Per-channel normalization over every axis but the last, optionally
    followed by ``act`` ("relu" or "leaky_relu") in the same pass.

    Training mode uses batch statistics and updates the running estimates;
    eval mode is a fixed affine map built from the running estimates.
    """
    xd = x.data
    C = state.channels
    if xd.shape[-1] != C:
        raise DimensionError(f"batch_norm expects {C} channels, got shape {xd.shape}")
    if act == "relu":
        slope = 0.0
    elif act not in (None, "leaky_relu"):
        raise ValueError(f"unknown activation {act!r}")
    gamma, beta = state.scale, state.shift
    x2 = xd.reshape(-1, C)
    M = x2.shape[0]
    ones = np.ones(M, dtype=xd.dtype)
    if training:
        mu = (ones @ x2) / M
        centered = x2 - mu
        var = (ones @ (centered * centered)) / M
        del centered
        inv = (1.0 / np.sqrt(var + state.eps)).astype(xd.dtype, copy=False)
        m = state.momentum
        unbiased = var * (M / (M - 1)) if M > 1 else var
        state.running_mean = ((1 - m) * state.running_mean + m * mu).astype(state.running_mean.dtype)
        state.running_var = ((1 - m) * state.running_var + m * unbiased).astype(state.running_var.dtype)
    else:
        mu = state.running_mean.astype(xd.dtype, copy=False)
        inv = (1.0 / np.sqrt(state.running_var + state.eps)).astype(xd.dtype, copy=False)
    gd, bd = gamma.data, beta.data
    a = inv * gd
    y = x2 * a
    y += bd - mu * a
    factor = None
    if act is not None:
        s = np.asarray(slope, dtype=xd.dtype)
        factor = np.empty_like(y)
        np.greater_equal(y, 0, out=factor, casting="unsafe")
        factor *= 1 - s
        factor += s
        y *= factor
    out = y.reshape(xd.shape)

    def bw(g):
        gy = g.reshape(-1, C)
        if factor is not None:
            gy = gy * factor
        sg = ones @ gy
        sgx = ones @ (gy * x2)
        dgamma = inv * (sgx - mu * sg)
        dx = None
        if x.requires_grad:
            dx = gy * a
            if training:
                beta_c = -a * inv * dgamma / M
                gamma_c = -a * sg / M - beta_c * mu
                dx += x2 * beta_c
                dx += gamma_c
            dx = dx.reshape(xd.shape)
        return (dx,
                dgamma if gamma.requires_grad else None,
                sg if beta.requires_grad else None)

    return _result(out, (x, gamma, beta), bw)


# ---------------------------------------------------------------- losses

def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood over every leading position of ``logits``."""
    labels = np.asarray(labels)
    ld = logits.data
    if labels.shape != ld.shape[:-1]:
        raise DimensionError(f"labels {labels.shape} do not match logits {ld.shape}")
    C = ld.shape[-1]
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise BoundsError(f"label out of range for {C} classes")
    flat = ld.reshape(-1, C)
    lab = labels.reshape(-1)
    lsm = log_softmax(flat)
    n = flat.shape[0]
    loss = -lsm[np.arange(n), lab].mean()

    def bw(g):
        p = np.exp(lsm)
        p[np.arange(n), lab] -= 1.0
        return ((p * (g / n)).reshape(ld.shape),)

    return _result(np.asarray(loss, dtype=ld.dtype), (logits,), bw)
