"""Transition layers and progressive upsampling fusion of the top-k levels."""

from __future__ import annotations

import numpy as np

from .nn import ConvReLU, Module
from .tensor import ShapeError, Tensor, ops


class UFM(Module):
    """reduce(cat(conv(up2x(high)), low))."""

    def __init__(self, ct: int, rng: np.random.Generator | None = None):
        self.conv = ConvReLU(ct, ct, 3, rng=rng)
        self.reduce = ConvReLU(2 * ct, ct, 3, rng=rng)

    def forward(self, high: Tensor, low: Tensor) -> Tensor:
        h, w = high.shape[-2:]
        if low.shape[-2:] != (2 * h, 2 * w):
            raise ShapeError("ufm", high.shape, low.shape, detail="low must be exactly 2x high")
        up = self.conv(ops.upsample2x(high))
        return self.reduce(ops.concat([up, low], axis=1))


class ScaleAdjust(Module):
    """Bring k purified levels to C_t channels and the finest selected resolution.

    Level j (counted from the finest selected level, 0-based) is fused
    through j UFM applications, one parameter set per application.
    """

    def __init__(self, level_channels, ct: int, rng: np.random.Generator | None = None):
        k = len(level_channels)
        if k not in (2, 3, 4):
            raise ValueError(f"k must be 2, 3 or 4, got {k}")
        self.k = k
        self.transitions = [ConvReLU(c, ct, 3, rng=rng) for c in level_channels]
        # chains[j] holds the j UFMs used by level j, coarse-to-fine
        self.chains = [[UFM(ct, rng=rng) for _ in range(j)] for j in range(k)]

    def transition(self, feats: list[Tensor]) -> list[Tensor]:
        return [t(f) for t, f in zip(self.transitions, feats)]

    def align(self, trans: list[Tensor]) -> list[Tensor]:
        """trans ordered finest-first; returns aligned maps in the same order."""
        if len(trans) != self.k:
            raise ValueError(f"expected {self.k} levels, got {len(trans)}")
        out = [trans[0]]
        for j in range(1, self.k):
            x = trans[j]
            for ufm, lower in zip(self.chains[j], reversed(trans[:j])):
                x = ufm(x, lower)
            out.append(x)
        return out

    def forward(self, feats: list[Tensor]) -> list[Tensor]:
        return self.align(self.transition(feats))
