"""Central-difference gradient oracle."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .core import Tensor


class NonFiniteEvaluation(ArithmeticError):
    def __init__(self, tensor_index: int, coord: tuple[int, ...]):
        super().__init__(f"non-finite evaluation at input {tensor_index}, coordinate {coord}")
        self.tensor_index = tensor_index
        self.coord = coord


def grad_check(
    f: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-4,
    n_samples: int | None = 100,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between autodiff and central differences.

    ``f`` rebuilds the graph from ``inputs`` (whose ``.data`` is perturbed in
    place) and returns a scalar Tensor. Error per coordinate is
    ``|analytic - numeric| / max(1, |numeric|)``. With ``n_samples=None`` every
    coordinate is checked; otherwise that many coordinates are drawn uniformly
    over the union of inputs.
    """
    rng = rng or np.random.default_rng(0)
    for t in inputs:
        t.grad = None
        t.requires_grad = True
    loss = f()
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    coords: list[tuple[int, int]] = []
    sizes = [t.data.size for t in inputs]
    if n_samples is None or n_samples >= sum(sizes):
        coords = [(k, i) for k, n in enumerate(sizes) for i in range(n)]
    else:
        flat = rng.choice(sum(sizes), size=n_samples, replace=False)
        offsets = np.cumsum([0] + sizes)
        for j in np.sort(flat):
            k = int(np.searchsorted(offsets, j, side="right") - 1)
            coords.append((k, int(j - offsets[k])))

    worst = 0.0
    for k, i in coords:
        arr = inputs[k].data.reshape(-1)
        orig = arr[i]
        arr[i] = orig + h
        fp = f().item()
        arr[i] = orig - h
        fm = f().item()
        arr[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteEvaluation(k, np.unravel_index(i, inputs[k].shape))
        numeric = (fp - fm) / (2 * h)
        err = abs(analytic[k].reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
        worst = max(worst, float(err))
    return worst
