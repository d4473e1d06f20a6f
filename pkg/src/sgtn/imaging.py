"""Small raster helpers shared by the data, target and inference code."""
from __future__ import annotations

import numpy as np

__all__ = ["resize_bilinear", "max_pool_binary", "box_iou_xywh", "tight_box", "clip_box"]


def _axis_weights(n_in: int, n_out: int, start: float = 0.0, extent: float | None = None):
    """Source indices/weights for half-pixel-centred linear resampling."""
    extent = n_in if extent is None else extent
    pos = start + (np.arange(n_out) + 0.5) * (extent / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    i0 = np.floor(pos).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    t = pos - i0
    return i0, i1, t


def resize_bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of an ``(H, W, ...)`` array with half-pixel centres and edge clamping."""
    arr = np.asarray(arr, dtype=np.float64)
    h, w = arr.shape[:2]
    r0, r1, tr = _axis_weights(h, out_h)
    c0, c1, tc = _axis_weights(w, out_w)
    extra = (None,) * (arr.ndim - 2)
    tr = tr[(slice(None), None) + extra]
    tc = tc[(None, slice(None)) + extra]
    top = arr[r0][:, c0] * (1 - tc) + arr[r0][:, c1] * tc
    bot = arr[r1][:, c0] * (1 - tc) + arr[r1][:, c1] * tc
    return top * (1 - tr) + bot * tr


def max_pool_binary(mask: np.ndarray, stride: int) -> np.ndarray:
    """Non-overlapping ``stride x stride`` max pooling of a 2-D binary map."""
    h, w = mask.shape
    if h % stride or w % stride:
        raise ValueError(f"extents {(h, w)} not divisible by {stride}")
    return mask.reshape(h // stride, stride, w // stride, stride).any(axis=(1, 3))


def tight_box(mask: np.ndarray):
    """Tight ``(x, y, w, h)`` pixel box of a non-empty binary mask."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        return None
    return (float(cols[0]), float(rows[0]), float(cols[-1] - cols[0] + 1), float(rows[-1] - rows[0] + 1))


def clip_box(box, width: int, height: int):
    """Clip an ``(x, y, w, h)`` box to the image; returns ``None`` when nothing remains."""
    x0, y0 = max(box[0], 0.0), max(box[1], 0.0)
    x1, y1 = min(box[0] + box[2], float(width)), min(box[1] + box[3], float(height))
    if x1 <= x0 or y1 <= y0:
        return None
    return (x0, y0, x1 - x0, y1 - y0)


def box_iou_xywh(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of ``(n, 4)`` and ``(m, 4)`` box arrays in ``(x, y, w, h)``."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ax1, ay1 = a[:, 0] + a[:, 2], a[:, 1] + a[:, 3]
    bx1, by1 = b[:, 0] + b[:, 2], b[:, 1] + b[:, 3]
    iw = np.clip(np.minimum(ax1[:, None], bx1[None]) - np.maximum(a[:, None, 0], b[None, :, 0]), 0, None)
    ih = np.clip(np.minimum(ay1[:, None], by1[None]) - np.maximum(a[:, None, 1], b[None, :, 1]), 0, None)
    inter = iw * ih
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None] - inter
    return np.where(union > 0, inter / np.maximum(union, 1e-12), 0.0)
