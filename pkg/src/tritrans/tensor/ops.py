"""Differentiable primitives.

Conventions: images are ``[B, C, H, W]``, token sequences ``[B, N, D]``,
convolution kernels ``[C_out, C_in, kh, kw]``. Every op returns a new
Tensor; inputs are never modified.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import special

from .core import ShapeError, Tensor, as_tensor


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _pair(a: Tensor, b) -> tuple[Tensor, Tensor]:
    if not isinstance(a, Tensor):
        a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    return a, b


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return Tensor._make(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast("sub", a, b)
    sa, sb = a.shape, b.shape
    return Tensor._make(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast("mul", a, b)
    ad, bd = a.data, b.data

    def backward(g):
        return (_unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, bd.shape) if b.requires_grad else None)

    return Tensor._make(ad * bd, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def backward(g):
        return (_unbroadcast(g / bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None)

    return Tensor._make(out, (a, b), backward, "div")


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor._make(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    out = special.expit(x.data).astype(x.dtype, copy=False)
    return Tensor._make(out, (x,), lambda g: (g * out * (1 - out),), "sigmoid")


def gelu(x: Tensor) -> Tensor:
    """Exact (erf) GELU."""
    xd = x.data
    cdf = 0.5 * (1.0 + special.erf(xd / math.sqrt(2.0)))
    out = (xd * cdf).astype(x.dtype, copy=False)

    def backward(g):
        pdf = np.exp(-0.5 * xd * xd) / math.sqrt(2.0 * math.pi)
        return ((g * (cdf + xd * pdf)).astype(x.dtype, copy=False),)

    return Tensor._make(out, (x,), backward, "gelu")


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return Tensor._make(out, (x,), backward, "softmax")


def layer_norm(x: Tensor, weight: Tensor | None = None, bias: Tensor | None = None, eps: float = 1e-6) -> Tensor:
    """Normalize over the last axis, then apply optional scale and shift."""
    d = x.shape[-1]
    for t, nm in ((weight, "weight"), (bias, "bias")):
        if t is not None and t.shape != (d,):
            raise ShapeError("layer_norm", x.shape, t.shape, detail=f"{nm} must be ({d},)")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat
    if weight is not None:
        out = out * weight.data
    if bias is not None:
        out = out + bias.data
    lead = tuple(range(xd.ndim - 1))

    def backward(g):
        gx = g * weight.data if weight is not None else g
        gx = inv * (gx - gx.mean(axis=-1, keepdims=True)
                    - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        grads = [gx]
        if weight is not None:
            grads.append((g * xhat).sum(axis=lead))
        if bias is not None:
            grads.append(g.sum(axis=lead))
        return grads

    parents = [x] + [t for t in (weight, bias) if t is not None]
    return Tensor._make(out.astype(x.dtype, copy=False), parents, backward, "layer_norm")


def bce_with_logits(logits: Tensor, target) -> Tensor:
    """Elementwise binary cross-entropy of sigmoid(logits) against target.

    Uses max(x,0) - x*t + log1p(exp(-|x|)); target receives no gradient.
    """
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=logits.dtype)
    if t.shape != logits.shape:
        raise ShapeError("bce_with_logits", logits.shape, t.shape)
    x = logits.data
    out = np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))

    def backward(g):
        return (g * (special.expit(x) - t).astype(x.dtype, copy=False),)

    return Tensor._make(out.astype(x.dtype, copy=False), (logits,), backward, "bce_with_logits")


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, shape) from None
    src = x.shape
    return Tensor._make(out, (x,), lambda g: (g.reshape(src),), "reshape")


def permute(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError("permute", x.shape, detail=f"bad axes {axes}")
    inv = tuple(np.argsort(axes))
    return Tensor._make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "permute")


def transpose(x: Tensor, a: int = -2, b: int = -1) -> Tensor:
    axes = list(range(x.ndim))
    axes[a], axes[b] = axes[b], axes[a]
    return permute(x, axes)


def concat(tensors, axis: int = 1) -> Tensor:
    """Concatenate along ``axis`` (channel axis by default)."""
    tensors = list(tensors)
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError("concat", *(t.shape for t in tensors), detail=f"axis={axis}")
    sizes = [t.shape[ax] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=ax)
    return Tensor._make(out, tensors, lambda g: tuple(np.split(g, splits, axis=ax)), "concat")


def expand_channels(x: Tensor, n: int) -> Tensor:
    """Repeat a single-channel map ``n`` times along axis 1."""
    if x.shape[1] != 1:
        raise ShapeError("expand_channels", x.shape, detail="expected one channel")
    return concat([x] * n, axis=1)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)
    src = x.shape

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, src).copy(),)

    return Tensor._make(np.asarray(out), (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, x.ndim)
    n = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum(x, axis=axes, keepdims=keepdims), 1.0 / n)


def amax(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Max along one axis; gradient goes to the first maximal index."""
    ax = axis % x.ndim
    idx = np.argmax(x.data, axis=ax)
    idx_k = np.expand_dims(idx, ax)
    out = np.take_along_axis(x.data, idx_k, axis=ax)
    if not keepdims:
        out = np.squeeze(out, ax)
    src = x.shape

    def backward(g):
        gx = np.zeros(src, dtype=g.dtype)
        gk = g if keepdims else np.expand_dims(g, ax)
        np.put_along_axis(gx, idx_k, gk, axis=ax)
        return (gx,)

    return Tensor._make(out, (x,), backward, "amax")


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product with broadcasting over leading axes."""
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    ad, bd = a.data, b.data

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._make(ad @ bd, (a, b), backward, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map over the last axis; ``weight`` is ``[D_in, D_out]``."""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError("linear", x.shape, weight.shape)
    y = matmul(x, weight)
    return add(y, bias) if bias is not None else y


# ---------------------------------------------------------------------------
# convolution and pooling
# ---------------------------------------------------------------------------

def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError("conv2d", x.shape, weight.shape, detail="expected [B,C,H,W] and [O,C,kh,kw]")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError("conv2d", weight.shape, bias.shape, detail="bias must be [O]")
    B, C, H, W = x.shape
    O, _, kh, kw = weight.shape
    s, p = stride, padding
    Ho = (H + 2 * p - kh) // s + 1
    Wo = (W + 2 * p - kw) // s + 1
    if Ho <= 0 or Wo <= 0:
        raise ShapeError("conv2d", x.shape, weight.shape, detail=f"kernel larger than padded input (pad={p})")
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::s, ::s][:, :, :Ho, :Wo]
    wd = weight.data
    # [B,Ho,Wo,O]
    out = np.tensordot(win, wd, axes=([1, 4, 5], [1, 2, 3]))
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    if bias is not None:
        out += bias.data.reshape(1, O, 1, 1)

    def backward(g):
        gw = gb = gx = None
        if weight.requires_grad:
            gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        if x.requires_grad:
            gcol = np.tensordot(g, wd, axes=([1], [0]))  # [B,Ho,Wo,C,kh,kw]
            gcol = gcol.transpose(0, 3, 4, 5, 1, 2)  # [B,C,kh,kw,Ho,Wo]
            gxp = np.zeros(xp.shape, dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + s * Ho:s, j:j + s * Wo:s] += gcol[:, :, i, j]
            gx = gxp[:, :, p:p + H, p:p + W] if p else gxp
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._make(out, parents, backward, "conv2d")


def max_pool2d(x: Tensor, kernel: int, stride: int | None = None) -> Tensor:
    """Spatial max pooling (no padding); ties go to the first row-major index."""
    stride = stride or kernel
    B, C, H, W = x.shape
    Ho, Wo = (H - kernel) // stride + 1, (W - kernel) // stride + 1
    if Ho <= 0 or Wo <= 0:
        raise ShapeError("max_pool2d", x.shape, detail=f"kernel {kernel} too large")
    win = sliding_window_view(x.data, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :Ho, :Wo]
    flat = win.reshape(B, C, Ho, Wo, kernel * kernel)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        di, dj = np.divmod(idx, kernel)
        rows = np.arange(Ho).reshape(1, 1, Ho, 1) * stride + di
        cols = np.arange(Wo).reshape(1, 1, 1, Wo) * stride + dj
        bi = np.arange(B).reshape(B, 1, 1, 1)
        ci = np.arange(C).reshape(1, C, 1, 1)
        np.add.at(gx, (bi, ci, rows, cols), g)
        return (gx,)

    return Tensor._make(np.ascontiguousarray(out), (x,), backward, "max_pool2d")


@lru_cache(maxsize=256)
def _box_matrix(n_in: int, kernel: int, stride: int, padding: int) -> np.ndarray:
    """Rows select each (zero-padded) pooling window along one axis."""
    n_out = (n_in + 2 * padding - kernel) // stride + 1
    m = np.zeros((n_out, n_in))
    for o in range(n_out):
        lo = o * stride - padding
        m[o, max(lo, 0):min(lo + kernel, n_in)] = 1.0
    m.setflags(write=False)
    return m


def avg_pool2d(x: Tensor, kernel: int, stride: int | None = None, padding: int = 0) -> Tensor:
    """Spatial mean pooling; zero padding counts toward the window size."""
    stride = stride or kernel
    H, W = x.shape[-2:]
    if (H + 2 * padding - kernel) < 0 or (W + 2 * padding - kernel) < 0:
        raise ShapeError("avg_pool2d", x.shape, detail=f"kernel {kernel} larger than padded input")
    mh = _box_matrix(H, kernel, stride, padding).astype(x.dtype)
    mw = _box_matrix(W, kernel, stride, padding).astype(x.dtype)
    scale = 1.0 / (kernel * kernel)
    out = (mh @ x.data @ mw.T) * scale

    def backward(g):
        return ((mh.T @ g @ mw) * scale,)

    return Tensor._make(out.astype(x.dtype, copy=False), (x,), backward, "avg_pool2d")


def global_avg_pool(x: Tensor) -> Tensor:
    """[B,C,H,W] -> [B,C,1,1]."""
    return mean(x, axis=(2, 3), keepdims=True)


def global_max_pool(x: Tensor) -> Tensor:
    """[B,C,H,W] -> [B,C,1,1]."""
    B, C, H, W = x.shape
    return reshape(amax(reshape(x, (B, C, H * W)), axis=-1, keepdims=True), (B, C, 1, 1))


# ---------------------------------------------------------------------------
# interpolation
# ---------------------------------------------------------------------------

@lru_cache(maxsize=256)
def bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    """1-D linear interpolation weights, half-pixel (align_corners=False) centres.

    Source coordinates below zero are clamped, as are indices past the end,
    so each row sums to one.
    """
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for o in range(n_out):
        src = max((o + 0.5) * scale - 0.5, 0.0)
        i0 = min(int(math.floor(src)), n_in - 1)
        i1 = min(i0 + 1, n_in - 1)
        lam = src - i0
        m[o, i0] += 1.0 - lam
        m[o, i1] += lam
    m.setflags(write=False)
    return m


def resize_bilinear(x: Tensor, size: tuple[int, int]) -> Tensor:
    H, W = x.shape[-2:]
    h, w = size
    if (h, w) == (H, W):
        return x
    mh = bilinear_matrix(H, h).astype(x.dtype)
    mw = bilinear_matrix(W, w).astype(x.dtype)
    out = mh @ x.data @ mw.T

    def backward(g):
        return (mh.T @ g @ mw,)

    return Tensor._make(out, (x,), backward, "resize_bilinear")


def upsample2x(x: Tensor) -> Tensor:
    H, W = x.shape[-2:]
    return resize_bilinear(x, (2 * H, 2 * W))
