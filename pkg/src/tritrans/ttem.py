"""Shared-weight transformer enhancement of the aligned levels."""

from __future__ import annotations

import math

import numpy as np

from .nn import Conv2d, ConvReLU, LayerNorm, Linear, Module, Parameter
from .tensor import ShapeError, Tensor, ops


class MultiHeadSelfAttention(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.heads = heads
        self.q = Linear(dim, dim, std=0.02, rng=rng)
        self.k = Linear(dim, dim, std=0.02, rng=rng)
        self.v = Linear(dim, dim, std=0.02, rng=rng)
        self.out = Linear(dim, dim, std=0.02, rng=rng)
        self.last_attention: np.ndarray | None = None

    def _split(self, x: Tensor) -> Tensor:
        B, N, D = x.shape
        return ops.permute(ops.reshape(x, (B, N, self.heads, D // self.heads)), (0, 2, 1, 3))

    def forward(self, x: Tensor) -> Tensor:
        B, N, D = x.shape
        q, k, v = self._split(self.q(x)), self._split(self.k(x)), self._split(self.v(x))
        scores = ops.mul(ops.matmul(q, ops.transpose(k)), 1.0 / math.sqrt(D // self.heads))
        attn = ops.softmax(scores)
        self.last_attention = attn.data
        ctx = ops.reshape(ops.permute(ops.matmul(attn, v), (0, 2, 1, 3)), (B, N, D))
        return self.out(ctx)


class MLP(Module):
    def __init__(self, dim: int, ratio: int, rng: np.random.Generator):
        self.fc1 = Linear(dim, ratio * dim, std=0.02, rng=rng)
        self.fc2 = Linear(ratio * dim, dim, std=0.02, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(ops.gelu(self.fc1(x)))


class EncoderLayer(Module):
    """Pre-norm block: z' = MSA(LN(z)) + z; z = MLP(LN(z')) + z'."""

    def __init__(self, dim: int, heads: int, mlp_ratio: int, rng: np.random.Generator):
        self.ln1 = LayerNorm(dim)
        self.attn = MultiHeadSelfAttention(dim, heads, rng)
        self.ln2 = LayerNorm(dim)
        self.mlp = MLP(dim, mlp_ratio, rng)

    def forward(self, z: Tensor) -> Tensor:
        z = ops.add(self.attn(self.ln1(z)), z)
        return ops.add(self.mlp(self.ln2(z)), z)


class TTEM(Module):
    """One tokenizer + encoder stack + back-projection shared by all k streams.

    Tokens are the row-major flattening of the H x W grid (token p sits at
    row p // W, column p % W).
    """

    def __init__(self, ct: int, dim: int, layers: int, heads: int, tokens: int,
                 mlp_ratio: int = 4, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.tokens = tokens
        self.proj = Linear(ct, dim, std=0.02, rng=rng)
        self.pos = Parameter(np.zeros((tokens, dim)))
        self.blocks = [EncoderLayer(dim, heads, mlp_ratio, rng) for _ in range(layers)]
        self.back = Conv2d(dim, ct, 1, rng=rng)
        self.fuse = ConvReLU(2 * ct, ct, 3, rng=rng)
        # test hook: skip the positional table
        self.use_pos = True

    def embed(self, f: Tensor) -> Tensor:
        B, C, H, W = f.shape
        if H * W != self.tokens:
            raise ShapeError("ttem.embed", f.shape, detail=f"expected N={self.tokens} tokens, got {H * W}")
        seq = ops.permute(ops.reshape(f, (B, C, H * W)), (0, 2, 1))
        z = self.proj(seq)
        return ops.add(z, self.pos) if self.use_pos else z

    def encode(self, z: Tensor) -> Tensor:
        for block in self.blocks:
            z = block(z)
        return z

    def unembed(self, z: Tensor, hw: tuple[int, int]) -> Tensor:
        B, N, D = z.shape
        grid = ops.reshape(ops.permute(z, (0, 2, 1)), (B, D) + tuple(hw))
        return self.back(grid)

    def enhance_one(self, f: Tensor) -> Tensor:
        z = self.encode(self.embed(f))
        return self.fuse(ops.concat([self.unembed(z, f.shape[-2:]), f], axis=1))

    def forward(self, levels: list[Tensor]) -> list[Tensor]:
        ref = levels[0].shape
        for lv in levels[1:]:
            if lv.shape != ref:
                raise ShapeError("ttem.enhance", *(lv.shape for lv in levels), detail="levels must share one shape")
        return [self.enhance_one(f) for f in levels]

    def attention_maps(self) -> list[np.ndarray]:
        return [b.attn.last_attention for b in self.blocks]
