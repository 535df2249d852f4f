"""Parameter containers: a small Module tree with dotted parameter names."""
from __future__ import annotations

import math

import numpy as np

from .tensor import BatchNormState, Tensor, get_default_dtype


class Module:
    """Base class; attributes holding Tensors, BatchNormStates, Modules or
    lists of Modules are discovered in assignment order."""

    training = True

    def _children(self):
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            if isinstance(value, (Tensor, BatchNormState, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for i, v in enumerate(value):
                    yield f"{name}.{i}", v

    def named_parameters(self, prefix: str = ""):
        for name, value in self._children():
            full = prefix + name
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield full, value
            elif isinstance(value, BatchNormState):
                yield full + ".scale", value.scale
                yield full + ".shift", value.shift
            else:
                yield from value.named_parameters(full + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def batch_norms(self, prefix: str = ""):
        for name, value in self._children():
            if isinstance(value, BatchNormState):
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.batch_norms(prefix + name + ".")

    def state_dict(self) -> dict[str, np.ndarray]:
        """Parameters and batch-norm running statistics, in a stable order."""
        state = {name: p.data for name, p in self.named_parameters()}
        for name, bn in self.batch_norms():
            state[name + ".running_mean"] = bn.running_mean
            state[name + ".running_var"] = bn.running_var
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = self.state_dict()
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={missing[:5]} unexpected={unexpected[:5]}")
        for name, arr in state.items():
            if tuple(arr.shape) != tuple(own[name].shape):
                raise ValueError(f"{name}: shape {tuple(arr.shape)} != {tuple(own[name].shape)}")
        dtype = get_default_dtype()
        params = dict(self.named_parameters())
        for name, p in params.items():
            p.data = np.array(state[name], dtype=dtype)
        for name, bn in self.batch_norms():
            bn.running_mean = np.array(state[name + ".running_mean"], dtype=dtype)
            bn.running_var = np.array(state[name + ".running_var"], dtype=dtype)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, value in self._children():
            if isinstance(value, Module):
                value.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def kaiming_uniform(fan_in: int, shape: tuple, rng: np.random.Generator, slope: float = 0.2) -> np.ndarray:
    gain = math.sqrt(2.0 / (1.0 + slope * slope))
    bound = gain * math.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, bias: bool = True):
        self.c_in, self.c_out = c_in, c_out
        self.weight = Tensor(kaiming_uniform(c_in, (c_in, c_out), rng), requires_grad=True)
        self.bias = Tensor(np.zeros(c_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = x @ self.weight
        if self.bias is not None:
            out = out + self.bias
        return out
