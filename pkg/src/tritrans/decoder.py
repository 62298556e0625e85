"""Three-stream (or single-stream) decoder with deep supervision."""

from __future__ import annotations

import numpy as np

from .nn import Conv2d, ConvReLU, Module
from .tensor import ShapeError, Tensor, ops


def _upsample_to(x: Tensor, hw: tuple[int, int], op: str) -> Tensor:
    """Repeated 2x upsampling until ``x`` reaches ``hw``."""
    while x.shape[-2:] != tuple(hw):
        h, w = x.shape[-2:]
        if 2 * h > hw[0] or 2 * w > hw[1]:
            raise ShapeError(op, x.shape, hw, detail="resolution chain broken")
        x = ops.upsample2x(x)
    return x


class StreamDecoder(Module):
    def __init__(self, ch1: int, ch2: int, ct: int, rng: np.random.Generator):
        self.low1 = ConvReLU(ch1, ct, 3, rng=rng)
        self.low2 = ConvReLU(ch2, ct, 3, rng=rng)
        self.cat2 = ConvReLU(2 * ct, ct, 3, rng=rng)
        self.cat1 = ConvReLU(2 * ct, ct, 3, rng=rng)
        self.head_conv = ConvReLU(ct, ct, 3, rng=rng)
        self.head_out = Conv2d(ct, 1, 3, rng=rng)

    def decode(self, f: Tensor, fr2: Tensor, fr1: Tensor) -> Tensor:
        r2, r1 = self.low2(fr2), self.low1(fr1)
        x = self.cat2(ops.concat([_upsample_to(f, r2.shape[-2:], "decode_stream"), r2], axis=1))
        up = ops.upsample2x(x)
        if up.shape[-2:] != r1.shape[-2:]:
            raise ShapeError("decode_stream", up.shape, r1.shape, detail="resolution chain broken")
        return self.cat1(ops.concat([up, r1], axis=1))

    def side_output(self, f2: Tensor, out_hw: tuple[int, int]) -> Tensor:
        """Logits at the input resolution."""
        x = self.head_conv(ops.upsample2x(f2))
        return self.head_out(ops.resize_bilinear(x, out_hw))

    def forward(self, f: Tensor, fr2: Tensor, fr1: Tensor, out_hw: tuple[int, int]) -> Tensor:
        return self.side_output(self.decode(f, fr2, fr1), out_hw)


def fuse_final(side_logits: list[Tensor]) -> tuple[Tensor, Tensor]:
    """Sum stream logits left to right, then apply one sigmoid."""
    total = side_logits[0]
    for s in side_logits[1:]:
        total = ops.add(total, s)
    return total, ops.sigmoid(total)


class Decoder(Module):
    def __init__(self, k: int, ch1: int, ch2: int, ct: int, mode: str = "three",
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.k = k
        self.mode = mode
        if mode == "three":
            self.streams = [StreamDecoder(ch1, ch2, ct, rng) for _ in range(k)]
        elif mode == "single":
            self.merge = ConvReLU(k * ct, ct, 3, rng=rng)
            self.streams = [StreamDecoder(ch1, ch2, ct, rng)]
        else:
            raise ValueError(f"unknown decoder mode {mode!r}")

    def forward(self, enhanced: list[Tensor], fr2: Tensor, fr1: Tensor,
                out_hw: tuple[int, int]) -> tuple[Tensor, list[Tensor]]:
        """Return (final logits, side logits); side list is empty in single mode."""
        if len(enhanced) != self.k:
            raise ValueError(f"decoder expects {self.k} streams, got {len(enhanced)}")
        if self.mode == "single":
            merged = self.merge(ops.concat(enhanced, axis=1))
            return self.streams[0](merged, fr2, fr1, out_hw), []
        sides = [dec(f, fr2, fr1, out_hw) for dec, f in zip(self.streams, enhanced)]
        final, _ = fuse_final(sides)
        return final, sides
