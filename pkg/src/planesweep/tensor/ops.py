"""Differentiable ops used by the depth-inference network.

Layout conventions: 2D maps are ``[C, H, W]``, volumes are ``[C, D, H, W]``.
There is no batch axis; one sample is processed at a time.
"""

from __future__ import annotations

from itertools import product
from math import prod
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .. import kernels
from .core import Tensor, as_tensor, make_result


# -- convolution ----------------------------------------------------------------

def _check_conv(x: np.ndarray, k: np.ndarray, stride: int, in_channels_axis: int):
    nd = x.ndim - 1
    if k.ndim != nd + 2:
        raise ValueError(f"kernel must have {nd + 2} dims for a {nd}-d input, got {k.shape}")
    if k.shape[in_channels_axis] != x.shape[0]:
        raise ValueError(f"kernel expects {k.shape[in_channels_axis]} input channels, "
                         f"input has {x.shape[0]}")
    if any(s % 2 == 0 for s in k.shape[2:]):
        raise ValueError(f"kernel extents must be odd, got {k.shape[2:]}")
    if not isinstance(stride, (int, np.integer)) or stride <= 0:
        raise ValueError(f"stride must be a positive int, got {stride!r}")


def _windows(xp: np.ndarray, ksize, out_sp, stride) -> np.ndarray:
    """Strided view [C, *ksize, *out_sp] over a padded input."""
    st = xp.strides
    shape = (xp.shape[0], *ksize, *out_sp)
    strides = (st[0], *st[1:], *(s * stride for s in st[1:]))
    return as_strided(xp, shape, strides, writeable=False)


def _im2col(x: np.ndarray, ksize, stride):
    pads = [k // 2 for k in ksize]
    xp = np.pad(x, [(0, 0)] + [(p, p) for p in pads])
    out_sp = tuple(n // stride for n in x.shape[1:])
    cols = _windows(xp, ksize, out_sp, stride).reshape(x.shape[0] * prod(ksize), prod(out_sp))
    return cols, out_sp


def _col2im(dcols: np.ndarray, in_shape, ksize, stride, out_sp) -> np.ndarray:
    """Adjoint of ``_im2col``: scatter-add columns back onto the input grid."""
    C = in_shape[0]
    pads = [k // 2 for k in ksize]
    padded = (C, *(n + 2 * p for n, p in zip(in_shape[1:], pads)))
    gp = np.zeros(padded, dtype=dcols.dtype)
    dcols = dcols.reshape(C, *ksize, *out_sp)
    for offs in product(*(range(k) for k in ksize)):
        dst = (slice(None),) + tuple(slice(o, o + stride * n, stride) for o, n in zip(offs, out_sp))
        gp[dst] += dcols[(slice(None),) + offs]
    crop = (slice(None),) + tuple(slice(p, p + n) for p, n in zip(pads, in_shape[1:]))
    return gp[crop]


def _conv_forward(x, k, stride):
    cols, out_sp = _im2col(x, k.shape[2:], stride)
    out = (k.reshape(k.shape[0], -1) @ cols).reshape(k.shape[0], *out_sp)
    return out, cols


def _check_divisible(shape, stride):
    if any(n % stride for n in shape):
        raise ValueError(f"spatial extents {tuple(shape)} must be divisible by stride {stride}")


def conv(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None, stride: int = 1) -> Tensor:
    """Zero same-padded strided convolution over any number of spatial axes.

    ``x`` is ``[C, *S]`` and ``kernel`` is ``[Cout, C, *K]`` with odd extents.
    Output spatial extents are ``S // stride`` (S must divide evenly).
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    _check_conv(x.data, kernel.data, stride, 1)
    _check_divisible(x.shape[1:], stride)
    out, cols = _conv_forward(x.data, kernel.data, stride)
    nd = x.ndim - 1
    if bias is not None:
        out += bias.data.reshape((-1,) + (1,) * nd)
    ksize = kernel.shape[2:]
    out_sp = out.shape[1:]
    cout = kernel.shape[0]

    def bw(g):
        g2 = g.reshape(cout, -1)
        gk = (g2 @ cols.T).reshape(kernel.shape) if kernel.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = kernel.data.reshape(cout, -1).T @ g2
            gx = _col2im(dcols, x.shape, ksize, stride, out_sp)
        gb = g2.sum(axis=1) if bias is not None and bias.requires_grad else None
        return gx, gk, gb

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return make_result(out, inputs, bw, f"conv{nd}d")


def conv2d(x, kernel, bias=None, stride=1) -> Tensor:
    if as_tensor(x).ndim != 3:
        raise ValueError(f"conv2d expects [C, H, W], got shape {as_tensor(x).shape}")
    return conv(x, kernel, bias, stride)


def conv3d(x, kernel, bias=None, stride=1) -> Tensor:
    if as_tensor(x).ndim != 4:
        raise ValueError(f"conv3d expects [C, D, H, W], got shape {as_tensor(x).shape}")
    return conv(x, kernel, bias, stride)


def transposed_conv(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None,
                    stride: int = 2) -> Tensor:
    """Adjoint of :func:`conv` with the same kernel.

    ``kernel`` is ``[Cin, Cout, *K]``: read as a convolution kernel it maps
    ``Cout`` channels to ``Cin``; this op maps ``Cin`` back to ``Cout`` and
    multiplies the spatial extents by ``stride``.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    _check_conv(x.data, kernel.data, stride, 0)
    ksize = kernel.shape[2:]
    cin, cout = kernel.shape[:2]
    nd = x.ndim - 1
    out_shape = (cout, *(n * stride for n in x.shape[1:]))
    dcols = kernel.data.reshape(cin, -1).T @ x.data.reshape(cin, -1)
    out = _col2im(dcols, out_shape, ksize, stride, x.shape[1:])
    if bias is not None:
        out = out + bias.data.reshape((-1,) + (1,) * nd)

    def bw(g):
        gx = gk = gb = None
        if x.requires_grad:
            gx, _ = _conv_forward(g, kernel.data, stride)
        if kernel.requires_grad:
            cols, _ = _im2col(g, ksize, stride)
            gk = (x.data.reshape(cin, -1) @ cols.T).reshape(kernel.shape)
        if bias is not None and bias.requires_grad:
            gb = g.reshape(cout, -1).sum(axis=1)
        return gx, gk, gb

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return make_result(out, inputs, bw, f"transposed_conv{nd}d")


# -- normalization and activations ---------------------------------------------

def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, mode: str = "train",
               running_mean: Optional[np.ndarray] = None,
               running_var: Optional[np.ndarray] = None,
               momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel normalization over every non-channel axis.

    ``train`` uses batch statistics and updates the running arrays in place;
    ``eval`` uses the running statistics; ``frozen`` applies only the affine
    ``gamma * x + beta``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    nd = x.ndim - 1
    bshape = (-1,) + (1,) * nd
    axes = tuple(range(1, x.ndim))
    g_ = gamma.data.reshape(bshape)
    b_ = beta.data.reshape(bshape)

    if mode == "frozen":
        out = g_ * x.data + b_
        return make_result(out, (x, gamma, beta),
                           lambda g: (g * g_, (g * x.data).sum(axis=axes), g.sum(axis=axes)),
                           "batch_norm")

    if mode == "train":
        n = prod(x.shape[1:])
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if running_mean is not None:
            running_mean *= 1.0 - momentum
            running_mean += momentum * mean
        if running_var is not None:
            unbiased = var * (n / (n - 1)) if n > 1 else var
            running_var *= 1.0 - momentum
            running_var += momentum * unbiased
    elif mode == "eval":
        if running_mean is None or running_var is None:
            raise ValueError("eval mode needs running statistics")
        mean, var = running_mean, running_var
    else:
        raise ValueError(f"unknown batch_norm mode {mode!r}")

    inv = (1.0 / np.sqrt(var + eps)).astype(x.dtype).reshape(bshape)
    xhat = (x.data - mean.astype(x.dtype).reshape(bshape)) * inv
    out = g_ * xhat + b_

    def bw(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * g_
        if mode == "train":
            m = prod(x.shape[1:])
            dx = inv / m * (m * dxhat - dxhat.sum(axis=axes, keepdims=True)
                            - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True))
        else:
            dx = dxhat * inv
        return dx, dgamma, dbeta

    return make_result(out, (x, gamma, beta), bw, "batch_norm")


def relu(x: Tensor) -> Tensor:
    """max(0, x); the subgradient at 0 is taken as 0."""
    mask = x.data > 0
    return make_result(np.where(mask, x.data, 0).astype(x.dtype), (x,),
                       lambda g: (g * mask,), "relu")


def softmax_axis(x: Tensor, axis: int = 0) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)
    return make_result(y, (x,), bw, "softmax")


# -- sampling -------------------------------------------------------------------

def bilinear_sample(feature: Tensor, coords) -> Tensor:
    """Bilinearly sample ``feature[C, H, W]`` at pixel coordinates.

    ``coords`` is ``[2, *S]`` holding (x, y) = (column, row) with integer
    values at pixel centres. Neighbours outside the map contribute zero, so a
    sample far outside reads 0 and passes no gradient. The output is
    ``[C, *S]``; gradients flow to both the feature values and the coords.
    """
    feature = as_tensor(feature)
    coords = as_tensor(coords, np.float64)
    if feature.ndim != 3:
        raise ValueError(f"feature map must be [C, H, W], got {feature.shape}")
    if coords.shape[0] != 2:
        raise ValueError(f"coords must be [2, ...], got {coords.shape}")
    if not np.all(np.isfinite(coords.data)):
        raise ValueError("coordinates must be finite")
    sample_shape = coords.shape[1:]
    x = np.ascontiguousarray(coords.data[0].reshape(-1), dtype=np.float64)
    y = np.ascontiguousarray(coords.data[1].reshape(-1), dtype=np.float64)
    img = np.ascontiguousarray(feature.data)
    out = kernels.bilinear_forward(img, x, y)

    def bw(g):
        g = np.ascontiguousarray(g.reshape(feature.shape[0], -1))
        gimg, gx, gy = kernels.bilinear_backward(img, x, y, g, coords.requires_grad)
        gc = None
        if coords.requires_grad:
            gc = np.stack([gx, gy]).reshape(coords.shape).astype(coords.dtype)
        return (gimg if feature.requires_grad else None), gc

    return make_result(out.reshape(feature.shape[0], *sample_shape), (feature, coords), bw,
                       "bilinear_sample")


# -- multi-view cost metrics ----------------------------------------------------

def _stack_same_shape(volumes: Sequence[Tensor]) -> np.ndarray:
    if len(volumes) < 1:
        raise ValueError("need at least one volume")
    shape = volumes[0].shape
    for i, v in enumerate(volumes):
        if v.shape != shape:
            raise ValueError(f"volume {i} has shape {v.shape}, expected {shape}")
    return np.stack([v.data for v in volumes])


def _ordered_sum(stacked: np.ndarray) -> np.ndarray:
    # summing sorted values makes the result independent of input order, bit for bit
    return np.sort(stacked, axis=0).sum(axis=0)


def _ordered_mean(stacked: np.ndarray) -> np.ndarray:
    # offsetting by the minimum makes the mean of identical inputs exact
    low = stacked.min(axis=0)
    return (low + _ordered_sum(stacked - low) / stacked.shape[0]).astype(stacked.dtype)


def mean_across(volumes: Sequence[Tensor]) -> Tensor:
    """Elementwise mean of same-shape tensors (the mean cost metric)."""
    volumes = [as_tensor(v) for v in volumes]
    stacked = _stack_same_shape(volumes)
    n = len(volumes)
    out = _ordered_mean(stacked)
    return make_result(out, volumes,
                       lambda g: tuple(g / n for _ in volumes), "mean_across")


def variance_across(volumes: Sequence[Tensor]) -> Tensor:
    """Elementwise population variance ``sum_i (V_i - mean)^2 / N``."""
    volumes = [as_tensor(v) for v in volumes]
    stacked = _stack_same_shape(volumes)
    n = len(volumes)
    mean = _ordered_mean(stacked)
    dev = stacked - mean
    out = (_ordered_sum(dev * dev) / n).astype(stacked.dtype)

    def bw(g):
        return tuple(g * (2.0 / n) * dev[i] for i in range(n))
    return make_result(out, volumes, bw, "variance_across")


# -- depth regression and loss --------------------------------------------------

def expectation_along_depth(prob: Tensor, depths) -> Tensor:
    """Probability-weighted mean depth per pixel (soft argmin).

    ``prob`` is ``[D, H, W]``. The weights are divided by their sum, so a
    distribution that sums to 1 only approximately still yields a value
    inside ``[min(depths), max(depths)]``.
    """
    prob = as_tensor(prob)
    d = np.asarray(depths, dtype=prob.dtype)
    if prob.ndim != 3 or prob.shape[0] != d.shape[0]:
        raise ValueError(f"prob {prob.shape} does not match {d.shape[0]} depth hypotheses")
    total = prob.data.sum(axis=0)
    weighted = np.tensordot(d, prob.data, axes=(0, 0))
    est = weighted / total
    out = np.clip(est, d.min(), d.max())

    def bw(g):
        return ((g / total)[None] * (d[:, None, None] - est[None]),)
    return make_result(out, (prob,), bw, "expectation_along_depth")


def masked_l1(pred: Tensor, gt, mask) -> Tensor:
    """Mean absolute error over pixels where ``mask`` is nonzero."""
    pred = as_tensor(pred)
    gt = gt.data if isinstance(gt, Tensor) else np.asarray(gt)
    m = (mask.data if isinstance(mask, Tensor) else np.asarray(mask)) != 0
    if gt.shape != pred.shape or m.shape != pred.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape}, gt {gt.shape}, mask {m.shape}")
    n = int(m.sum())
    if n == 0:
        raise ValueError("mask has no valid pixels")
    diff = pred.data - gt.astype(pred.dtype)
    loss = np.abs(diff[m]).sum() / n

    def bw(g):
        return (g * np.where(m, np.sign(diff), 0).astype(pred.dtype) / n,)
    return make_result(np.asarray(loss, dtype=pred.dtype), (pred,), bw, "masked_l1")
