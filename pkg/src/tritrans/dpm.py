"""Depth purification: CBAM-style channel then spatial gating of depth features."""

from __future__ import annotations

import numpy as np

from .nn import Conv2d, ConvReLU, Linear, Module
from .tensor import ShapeError, Tensor, ops


class ChannelAttention(Module):
    """sigmoid(mlp(avgpool(x)) + mlp(maxpool(x))) with one shared bottleneck MLP."""

    def __init__(self, channels: int, reduction: int = 4, rng: np.random.Generator | None = None):
        if channels < reduction:
            raise ValueError(f"channel attention needs channels >= reduction ({channels} < {reduction})")
        hidden = channels // reduction
        self.fc1 = Linear(channels, hidden, rng=rng)
        self.fc2 = Linear(hidden, channels, rng=rng)

    def mlp(self, v: Tensor) -> Tensor:
        return self.fc2(ops.relu(self.fc1(v)))

    def forward(self, x: Tensor) -> Tensor:
        B, C = x.shape[:2]
        avg = ops.reshape(ops.global_avg_pool(x), (B, C))
        mx = ops.reshape(ops.global_max_pool(x), (B, C))
        logits = ops.add(self.mlp(avg), self.mlp(mx))
        return ops.sigmoid(ops.reshape(logits, (B, C, 1, 1)))


class SpatialAttention(Module):
    """sigmoid(conv7x7([mean_c(x); max_c(x)]))."""

    def __init__(self, kernel: int = 7, rng: np.random.Generator | None = None):
        self.conv = Conv2d(2, 1, kernel, padding=kernel // 2, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        pooled = ops.concat([ops.mean(x, axis=1, keepdims=True), ops.amax(x, axis=1, keepdims=True)], axis=1)
        return ops.sigmoid(self.conv(pooled))


class DepthPurification(Module):
    """F_r = f_d * SA(f_d * CA(cat_conv([f_d, f_r]))) + f_r."""

    def __init__(self, channels: int, reduction: int = 4, rng: np.random.Generator | None = None):
        self.fuse = ConvReLU(2 * channels, channels, 3, rng=rng)
        self.ca = ChannelAttention(channels, reduction, rng=rng)
        self.sa = SpatialAttention(rng=rng)
        # test hook: replace both masks by ones
        self.pin_masks = False

    def forward(self, f_r: Tensor, f_d: Tensor) -> Tensor:
        if f_r.shape != f_d.shape:
            raise ShapeError("purify", f_r.shape, f_d.shape, detail="modalities must match")
        if self.pin_masks:
            ones_c = np.ones(f_d.shape[:2] + (1, 1), dtype=f_d.dtype)
            ones_s = np.ones((f_d.shape[0], 1) + f_d.shape[2:], dtype=f_d.dtype)
            return ops.add(ops.mul(ops.mul(f_d, ones_c), ones_s), f_r)
        ca = self.ca(self.fuse(ops.concat([f_d, f_r], axis=1)))
        gated = ops.mul(f_d, ca)
        return ops.add(ops.mul(f_d, self.sa(gated)), f_r)


class AddFusion(Module):
    """Ablation baseline: plain elementwise sum of the two modalities."""

    def forward(self, f_r: Tensor, f_d: Tensor) -> Tensor:
        if f_r.shape != f_d.shape:
            raise ShapeError("add_fusion", f_r.shape, f_d.shape)
        return ops.add(f_r, f_d)
