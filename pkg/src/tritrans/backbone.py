"""Five-stage residual CNN encoder, one instance per modality."""

from __future__ import annotations

import numpy as np

from .nn import Conv2d, ConvReLU, Module
from .tensor import ShapeError, Tensor, ops


class Stage(Module):
    """Strided 3x3 conv + ReLU, then a 3x3 conv with identity shortcut."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        self.down = ConvReLU(c_in, c_out, 3, stride=2, rng=rng)
        self.conv = Conv2d(c_out, c_out, 3, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        h = self.down(x)
        return ops.relu(ops.add(self.conv(h), h))


class Backbone(Module):
    def __init__(self, channels, in_channels: int = 3, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stem = ConvReLU(in_channels, channels[0], 3, stride=2, rng=rng)
        self.stages = [Stage(channels[i - 1], channels[i], rng) for i in range(1, len(channels))]

    def forward(self, image: Tensor) -> list[Tensor]:
        """Return feature maps f_1..f_5 at strides 2, 4, 8, 16, 32."""
        H, W = image.shape[-2:]
        if H % 32 or W % 32:
            raise ShapeError("backbone", image.shape, detail="spatial size must be divisible by 32")
        feats = [self.stem(image)]
        for stage in self.stages:
            feats.append(stage(feats[-1]))
        return feats
