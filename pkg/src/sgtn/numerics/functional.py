"""Normalisation layers, convolutions and other fused ops with hand-written backward."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, as_tensor

__all__ = [
    "normalize",
    "layer_norm",
    "axial_instance_norm",
    "batch_norm",
    "linear",
    "conv2d",
    "deconv2d_s2",
    "conv_output_size",
]


def normalize(x, axes, eps: float) -> Tensor:
    """Zero-mean, unit-variance standardisation over ``axes`` (no affine)."""
    x = as_tensor(x)
    axes = tuple(a % x.ndim for a in np.atleast_1d(axes))
    mu = x.data.mean(axis=axes, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def backward(g):
        gm = g.mean(axis=axes, keepdims=True)
        gx = (g * xhat).mean(axis=axes, keepdims=True)
        x._accum(inv * (g - gm - xhat * gx))

    return Tensor._make(xhat, (x,), backward, "normalize")


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Per-token normalisation over the channel (last) axis, then affine."""
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ShapeError("layer_norm needs a non-empty channel dimension")
    return normalize(x, -1, eps) * gamma + beta


def axial_instance_norm(x, axis: str, eps: float = 1e-5) -> Tensor:
    """Instance norm inside 1-D attention windows of an ``(..., h, w, c)`` map.

    ``axis="column"`` standardises each (column, channel) vector of ``h``
    values, ``axis="row"`` each (row, channel) vector of ``w`` values. No
    learnable affine.
    """
    x = as_tensor(x)
    if x.ndim < 3:
        raise ShapeError(f"axial_instance_norm expects (..., h, w, c), got {x.shape}")
    if axis == "column":
        return normalize(x, -3, eps)
    if axis == "row":
        return normalize(x, -2, eps)
    raise ValueError(f"axis must be 'row' or 'column', got {axis!r}")


def batch_norm(x, gamma, beta, running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.9, eps: float = 1e-5) -> Tensor:
    """Per-channel normalisation of a channel-last tensor.

    In training mode the batch statistics are used and the running buffers
    are updated in place as ``running = momentum * running + (1 - momentum) * batch``.
    """
    x = as_tensor(x)
    axes = tuple(range(x.ndim - 1))
    if training:
        n = int(np.prod([x.shape[a] for a in axes]))
        out = normalize(x, axes, eps)
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu
        running_var *= momentum
        running_var += (1.0 - momentum) * var * (n / max(n - 1, 1))
    else:
        scale = (1.0 / np.sqrt(running_var + eps)).astype(x.dtype)
        shift = (-running_mean * scale).astype(x.dtype)
        out = x * scale + shift
    return out * gamma + beta


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as (in, out)."""
    out = as_tensor(x) @ weight
    return out if bias is None else out + bias


def conv_output_size(n: int, k: int, stride: int, pad: int, dilation: int = 1) -> int:
    return (n + 2 * pad - dilation * (k - 1) - 1) // stride + 1


def conv2d(x, kernel, stride: int = 1, pad: int | None = None, dilation: int = 1) -> Tensor:
    """2-D cross-correlation of a channel-last map.

    ``x`` is ``(h, w, c_in)`` or ``(b, h, w, c_in)``; ``kernel`` is
    ``(c_out, c_in, k, k)``. ``pad`` defaults to the shape-preserving
    ``dilation * (k // 2)``.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4:
        raise ShapeError(f"conv2d expects (b, h, w, c), got {x.shape}")
    c_out, c_in, k, k2 = kernel.shape
    if k != k2:
        raise ShapeError("conv2d kernels must be square")
    if xd.shape[-1] != c_in:
        raise ShapeError(f"conv2d channel mismatch: input has {xd.shape[-1]}, kernel expects {c_in}")
    if pad is None:
        pad = dilation * (k // 2)
    b, h, w, _ = xd.shape
    ho = conv_output_size(h, k, stride, pad, dilation)
    wo = conv_output_size(w, k, stride, pad, dilation)
    if ho < 1 or wo < 1:
        raise ShapeError("conv2d output would be empty")
    span = dilation * (k - 1) + 1
    xp = np.pad(xd, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else xd
    # (b, ho, wo, c_in, k, k)
    win = sliding_window_view(xp, (span, span), axis=(1, 2))
    win = win[:, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride, :, ::dilation, ::dilation]
    cols = win.reshape(b * ho * wo, c_in * k * k)
    kmat = kernel.data.reshape(c_out, c_in * k * k)
    out = (cols @ kmat.T).reshape(b, ho, wo, c_out)
    if squeeze:
        out = out[0]

    def backward(g):
        g2 = (g[None] if squeeze else g).reshape(b * ho * wo, c_out)
        if kernel.requires_grad:
            kernel._accum((g2.T @ cols).reshape(kernel.shape))
        if x.requires_grad:
            dcols = (g2 @ kmat).reshape(b, ho, wo, c_in, k, k)
            dxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    r0, c0 = i * dilation, j * dilation
                    dxp[:, r0 : r0 + stride * (ho - 1) + 1 : stride,
                        c0 : c0 + stride * (wo - 1) + 1 : stride, :] += dcols[..., i, j]
            dx = dxp[:, pad : pad + h, pad : pad + w, :] if pad else dxp
            x._accum(dx[0] if squeeze else dx)

    return Tensor._make(out, (x, kernel), backward, "conv2d")


def deconv2d_s2(x, kernel) -> Tensor:
    """Transposed convolution with a 2x2 kernel and stride 2 (exact 2x upsampling).

    ``kernel`` is ``(c_in, c_out, 2, 2)``; ``out[2i+p, 2j+q, o] = sum_c x[i, j, c] * kernel[c, o, p, q]``.
    Each output pixel receives exactly one input pixel, so the op is a
    per-pixel matmul followed by a depth-to-space rearrangement.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    c_in, c_out, kh, kw = kernel.shape
    if (kh, kw) != (2, 2):
        raise ShapeError("deconv2d_s2 needs a 2x2 kernel")
    if x.shape[-1] != c_in:
        raise ShapeError(f"deconv2d_s2 channel mismatch: {x.shape[-1]} vs {c_in}")
    lead = x.shape[:-3]
    h, w = x.shape[-3], x.shape[-2]
    kmat = kernel.reshape(c_in, c_out * 4)
    y = (x @ kmat).reshape(lead + (h, w, c_out, 2, 2))
    nd = len(lead)
    perm = tuple(range(nd)) + (nd, nd + 3, nd + 1, nd + 4, nd + 2)
    return y.transpose(perm).reshape(lead + (2 * h, 2 * w, c_out))
