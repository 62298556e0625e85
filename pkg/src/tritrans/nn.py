"""Minimal module system over the tensor engine."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .tensor import Tensor, ops


def Parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float32), requires_grad=True, name=name)


class Module:
    """Parameters and submodules are discovered from instance attributes
    (including lists of modules) in assignment order."""

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def _children(self) -> Iterator[tuple[str, object]]:
        for key, val in vars(self).items():
            if isinstance(val, (Module, Tensor)):
                yield key, val
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, (Module, Tensor)):
                        yield f"{key}.{i}", item

    def named_parameters(self, prefix: str = "", _seen: set | None = None) -> Iterator[tuple[str, Tensor]]:
        seen = set() if _seen is None else _seen
        for key, val in self._children():
            full = f"{prefix}{key}"
            if id(val) in seen:
                continue
            seen.add(id(val))
            if isinstance(val, Tensor):
                if val.requires_grad:
                    yield full, val
            else:
                yield from val.named_parameters(full + ".", seen)

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise KeyError(f"state mismatch: missing={missing[:5]} unexpected={extra[:5]}")
        for k, p in own.items():
            if state[k].shape != p.shape:
                raise ValueError(f"shape mismatch for {k}: checkpoint {state[k].shape} vs model {p.shape}")
            p.data = state[k].astype(p.dtype).copy()


class Conv2d(Module):
    """Kernel drawn from N(0, 2/fan_in); bias zero."""

    def __init__(self, c_in: int, c_out: int, kernel: int = 3, stride: int = 1,
                 padding: int | None = None, bias: bool = True, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = c_in * kernel * kernel
        self.weight = Parameter(rng.normal(0.0, math.sqrt(2.0 / fan_in), (c_out, c_in, kernel, kernel)))
        self.bias = Parameter(np.zeros(c_out)) if bias else None
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class ConvReLU(Conv2d):
    """3x3 same-padded convolution followed by ReLU."""

    def forward(self, x: Tensor) -> Tensor:
        return ops.relu(super().forward(x))


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, bias: bool = True, std: float | None = None,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        std = math.sqrt(1.0 / d_in) if std is None else std
        self.weight = Parameter(rng.normal(0.0, std, (d_in, d_out)))
        self.bias = Parameter(np.zeros(d_out)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-6):
        self.weight = Parameter(np.ones(d))
        self.bias = Parameter(np.zeros(d))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.weight, self.bias, eps=self.eps)
