"""Pixel-position-aware loss: boundary-weighted BCE plus weighted IoU."""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, ops


def weight_map(gt, window: int = 31, gain: float = 5.0) -> np.ndarray:
    """1 + gain * |boxmean(G) - G|; zero padding counts toward the window."""
    g = gt if isinstance(gt, Tensor) else Tensor(np.asarray(gt))
    pooled = ops.avg_pool2d(g, window, stride=1, padding=window // 2).data
    return 1.0 + gain * np.abs(pooled - g.data)


def _check_binary(gt: np.ndarray) -> None:
    if not np.all((gt == 0) | (gt == 1)):
        raise ValueError("ground truth must be binary (0/1)")


def ppa_loss(logits: Tensor, gt, window: int = 31, gain: float = 5.0, smooth: float = 1.0) -> Tensor:
    """Batch mean of weighted BCE + weighted IoU for [B,1,H,W] logits."""
    g = np.asarray(gt.data if isinstance(gt, Tensor) else gt, dtype=logits.dtype)
    if g.shape != logits.shape:
        raise ShapeError("ppa_loss", logits.shape, g.shape)
    _check_binary(g)
    w = weight_map(Tensor(g), window, gain).astype(logits.dtype)
    axes = (2, 3)
    bce = ops.bce_with_logits(logits, g)
    wbce = ops.div(ops.sum(ops.mul(bce, w), axis=axes), w.sum(axis=axes))
    p = ops.sigmoid(logits)
    inter = ops.sum(ops.mul(ops.mul(p, g), w), axis=axes)
    union = ops.sum(ops.mul(ops.sub(ops.add(p, g), ops.mul(p, g)), w), axis=axes)
    wiou = ops.sub(1.0, ops.div(ops.add(inter, smooth), ops.add(union, smooth)))
    return ops.mean(ops.add(wbce, wiou))


def total_loss(final_logits: Tensor, side_logits: list[Tensor], gt, **kw) -> Tensor:
    """ppa(final) + sum of ppa(side_i), unweighted."""
    total = ppa_loss(final_logits, gt, **kw)
    for s in side_logits:
        total = ops.add(total, ppa_loss(s, gt, **kw))
    return total
