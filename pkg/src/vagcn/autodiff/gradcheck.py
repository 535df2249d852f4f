"""Central finite-difference checks of tape gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import NondeterminismError
from .tensor import Tape, Tensor, mul, reduce_sum


# rounding slack, in units of the function value's ulp, that a central
# difference is allowed before a mismatch counts
ULPS = 8


def _scalarize(out: Tensor, weights: np.ndarray | None) -> Tensor:
    if out.size == 1 and weights is None:
        return reduce_sum(out)
    return reduce_sum(mul(out, weights))


def grad_check(f: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = 1e-6,
               seed: int = 0, max_elements: int | None = None) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` takes no arguments and reads ``inputs`` (tensors with
    ``requires_grad``) by closure. Non-scalar outputs are contracted with a
    fixed random weighting so every output element participates.
    ``max_elements`` caps the number of probed entries per input (chosen at
    random); ``None`` probes all of them.

    A difference quotient cannot resolve anything finer than the rounding of
    ``f`` itself divided by the step, so discrepancies below a few ulps of
    ``f`` over ``eps`` count as agreement. Without this, a structurally zero
    gradient against a one-ulp wobble in ``f`` scores as a large relative error.
    """
    inputs = list(inputs)
    first = f().data.copy()
    second = f().data
    if not np.array_equal(first, second):
        raise NondeterminismError("function returned different values on identical inputs")
    rng = np.random.default_rng(seed)
    weights = None if first.size == 1 else rng.standard_normal(first.shape)

    for t in inputs:
        t.grad = None
    with Tape() as tape:
        loss = _scalarize(f(), weights)
    tape.backward(loss, inputs)

    def value() -> float:
        return float(_scalarize(f(), weights).data)

    worst = 0.0
    for t in inputs:
        analytic = t.grad.reshape(-1)
        flat = t.data.reshape(-1)
        positions = np.arange(flat.size)
        if max_elements is not None and flat.size > max_elements:
            positions = np.sort(rng.choice(flat.size, size=max_elements, replace=False))
        for i in positions:
            orig = flat[i]
            flat[i] = orig + eps
            up = value()
            flat[i] = orig - eps
            down = value()
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            a = float(analytic[i])
            resolution = ULPS * np.finfo(t.data.dtype).eps * max(1.0, abs(up), abs(down)) / eps
            if abs(a - numeric) <= resolution:
                continue
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, err)
    return worst
