"""Multi-head self-attention over windows, shifted windows, rows and columns.

All variants share :func:`multi_head_qkv_attention`; they differ only in how
the ``(b, h, w, c)`` feature map is cut into token groups and which additive
bias (relative position, shift mask) is applied to the logits.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np

from .numerics import ops
from .numerics.nn import Linear, Module, Parameter, trunc_normal
from .numerics.tensor import ShapeError, Tensor, as_tensor

__all__ = [
    "AttentionConfig",
    "MultiHeadAttention",
    "WindowAttention",
    "AxialAttention",
    "multi_head_qkv_attention",
    "wmsa",
    "swmsa",
    "axial_msa",
    "window_partition",
    "window_reverse",
    "shift_mask",
    "relative_position_index",
    "effective_window",
    "count_macs",
    "MASK_NEG",
]

MASK_NEG = -1e9


@dataclass(frozen=True)
class AttentionConfig:
    dim: int
    heads: int
    window: int | None = None
    shift: int = 0
    scale_qk: bool = True
    axis: str | None = None

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.window is not None and not 0 <= self.shift < self.window:
            raise ValueError(f"shift {self.shift} outside [0, {self.window})")
        if self.axis not in (None, "row", "column"):
            raise ValueError(f"axis must be 'row' or 'column', got {self.axis!r}")

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads


# ---------------------------------------------------------------------------
# multiply-add accounting for the score (Q K^T) and apply (S V) products

class _MacCounter:
    def __init__(self):
        self.active = []

    def add(self, score: int, apply: int) -> None:
        for tally in self.active:
            tally["score"] += score
            tally["apply"] += apply


_macs = _MacCounter()


@contextlib.contextmanager
def count_macs():
    """Tally multiply-adds of the attention score and apply products.

    >>> with count_macs() as tally:
    ...     pass
    >>> tally
    {'score': 0, 'apply': 0}
    """
    tally = {"score": 0, "apply": 0}
    _macs.active.append(tally)
    try:
        yield tally
    finally:
        _macs.active.remove(tally)


class MultiHeadAttention(Module):
    """Fused QKV projection, per-head attention, output projection."""

    def __init__(self, rng, dim: int, heads: int):
        self.qkv = Linear(rng, dim, 3 * dim)
        self.proj = Linear(rng, dim, dim)
        self.heads = heads


def multi_head_qkv_attention(tokens, cfg: AttentionConfig, params: MultiHeadAttention,
                             mask=None, return_weights: bool = False):
    """Attention inside each token group.

    ``tokens`` is ``(g, n, c)``; ``mask`` is an additive logit bias
    broadcastable to ``(g, heads, n, n)``. Returns ``(g, n, c)`` and, when
    asked, the post-softmax weights ``(g, heads, n, n)``.
    """
    tokens = as_tensor(tokens)
    if tokens.ndim != 3:
        raise ShapeError(f"tokens must be (groups, n, c), got {tokens.shape}")
    g, n, c = tokens.shape
    if c != cfg.dim:
        raise ShapeError(f"token width {c} != configured dim {cfg.dim}")
    if n < 1:
        raise ShapeError("attention needs at least one token")
    nh, d = cfg.heads, cfg.head_dim
    qkv = params.qkv(tokens).reshape(g, n, 3, nh, d).transpose(2, 0, 3, 1, 4)
    q, k, v = qkv[0], qkv[1], qkv[2]
    if cfg.scale_qk:
        q = q * (1.0 / np.sqrt(d))
    logits = q @ k.transpose(0, 1, 3, 2)
    if mask is not None:
        m = mask.data if isinstance(mask, Tensor) else np.asarray(mask)
        try:
            np.broadcast_shapes(m.shape, (g, nh, n, n))
        except ValueError:
            raise ShapeError(f"mask shape {m.shape} does not broadcast to {(g, nh, n, n)}") from None
        if m.shape[-2:] != (n, n):
            raise ShapeError(f"mask shape {m.shape} does not match {n} tokens")
        logits = logits + mask
    weights = ops.softmax_lastdim(logits)
    _macs.add(g * nh * n * n * d, g * nh * n * n * d)
    ctx = (weights @ v).transpose(0, 2, 1, 3).reshape(g, n, c)
    out = params.proj(ctx)
    return (out, weights) if return_weights else out


# ---------------------------------------------------------------------------
# window bookkeeping

def effective_window(h: int, w: int, window: int, shift: int) -> tuple:
    """Window side and shift actually used for an ``h x w`` map.

    Maps no larger than the window are attended as one window without a shift.
    """
    if min(h, w) <= window:
        return min(h, w), 0
    return window, shift


def window_partition(x, m: int):
    """``(b, H, W, c)`` -> ``(b * nW, m*m, c)``; H and W must be multiples of ``m``."""
    b, hh, ww, c = x.shape
    x = x.reshape(b, hh // m, m, ww // m, m, c).transpose(0, 1, 3, 2, 4, 5)
    return x.reshape(b * (hh // m) * (ww // m), m * m, c)


def window_reverse(windows, m: int, b: int, hh: int, ww: int):
    c = windows.shape[-1]
    x = windows.reshape(b, hh // m, ww // m, m, m, c).transpose(0, 1, 3, 2, 4, 5)
    return x.reshape(b, hh, ww, c)


def relative_position_index(m: int, table_side: int) -> np.ndarray:
    """Index into a ``(2*table_side-1)**2`` bias table for every token pair of an ``m x m`` window."""
    coords = np.stack(np.meshgrid(np.arange(m), np.arange(m), indexing="ij")).reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :] + (table_side - 1)
    return rel[0] * (2 * table_side - 1) + rel[1]


def shift_mask(hh: int, ww: int, m: int, s: int) -> np.ndarray:
    """Additive ``(nW, m*m, m*m)`` mask forbidding attention across wrapped segments."""
    region = np.zeros((hh, ww), dtype=np.int64)
    cuts = (slice(0, -m), slice(-m, -s), slice(-s, None))
    label = 0
    for rs in cuts:
        for cs in cuts:
            region[rs, cs] = label
            label += 1
    lab = region.reshape(hh // m, m, ww // m, m).transpose(0, 2, 1, 3).reshape(-1, m * m)
    return np.where(lab[:, :, None] != lab[:, None, :], MASK_NEG, 0.0)


class WindowAttention(MultiHeadAttention):
    """Window attention with a learned per-head relative position bias."""

    def __init__(self, rng, dim: int, heads: int, window: int):
        super().__init__(rng, dim, heads)
        self.window = window
        self.rel_bias = Parameter(trunc_normal(rng, ((2 * window - 1) ** 2, heads)))

    def position_bias(self, m: int) -> Tensor:
        idx = relative_position_index(m, self.window)
        return ops.take(self.rel_bias, idx, axis=0).transpose(2, 0, 1)  # (heads, n, n)


def _as_batched(x):
    x = as_tensor(x)
    if x.ndim == 3:
        return x.reshape((1,) + x.shape), True
    if x.ndim != 4:
        raise ShapeError(f"expected (h, w, c) or (b, h, w, c), got {x.shape}")
    return x, False


def _windowed(x, cfg: AttentionConfig, params: WindowAttention, shift: int | None):
    x, squeeze = _as_batched(x)
    b, h, w, c = x.shape
    m, s = effective_window(h, w, cfg.window, cfg.shift if shift is None else shift)
    ph, pw = (-h) % m, (-w) % m
    if ph or pw:
        x = ops.pad(x, ((0, 0), (0, ph), (0, pw), (0, 0)))
    hh, ww = h + ph, w + pw
    if s:
        x = ops.roll(x, (-s, -s), axis=(1, 2))
    win = window_partition(x, m)
    bias = params.position_bias(m) if isinstance(params, WindowAttention) else None
    if s:
        sm = shift_mask(hh, ww, m, s).astype(x.dtype)
        sm = np.tile(sm, (b, 1, 1))[:, None]  # (b*nW, 1, n, n)
        bias = sm if bias is None else bias + sm
    out = multi_head_qkv_attention(win, cfg, params, mask=bias)
    out = window_reverse(out, m, b, hh, ww)
    if s:
        out = ops.roll(out, (s, s), axis=(1, 2))
    if ph or pw:
        out = out[:, :h, :w, :]
    return out[0] if squeeze else out


def wmsa(x, cfg: AttentionConfig, params: WindowAttention):
    """Regular (non-shifted) window attention; extents padded to a window multiple then cropped."""
    return _windowed(x, cfg, params, shift=0)


def swmsa(x, cfg: AttentionConfig, params: WindowAttention):
    """Shifted-window attention via cyclic shift plus cross-segment masking."""
    return _windowed(x, cfg, params, shift=None)


class AxialAttention(MultiHeadAttention):
    """Attention along one spatial axis; no positional bias."""


def axial_msa(x, cfg: AttentionConfig, params: MultiHeadAttention):
    """Row-wise (``axis="row"``) or column-wise (``axis="column"``) attention."""
    x, squeeze = _as_batched(x)
    b, h, w, c = x.shape
    if cfg.axis == "row":
        out = multi_head_qkv_attention(x.reshape(b * h, w, c), cfg, params).reshape(b, h, w, c)
    elif cfg.axis == "column":
        cols = x.transpose(0, 2, 1, 3).reshape(b * w, h, c)
        out = multi_head_qkv_attention(cols, cfg, params).reshape(b, w, h, c).transpose(0, 2, 1, 3)
    else:
        raise ValueError("axial_msa needs cfg.axis in {'row', 'column'}")
    return out[0] if squeeze else out
