"""Center-based proposals, RoI Align, box and mask heads, their losses, and mask fusion."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .imaging import clip_box
from .numerics import functional as F
from .numerics import ops
from .numerics.losses import BCE_CLAMP, LossValue, dice_loss, smooth_l1, weighted_bce
from .numerics.nn import Conv2d, ConvBNReLU, Linear, Module, ModuleList, Parameter
from .numerics.tensor import ShapeError, Tensor, as_tensor

__all__ = [
    "FEATURE_STRIDE", "BOX_ROI", "MASK_ROI", "MASK_SIZE",
    "ProposalSet", "MaskTriplet", "CenterHead", "BoxHead", "MaskHead",
    "gaussian_radius", "cbgm_targets", "cbgm_loss", "find_peaks", "cbgm_decode",
    "roi_align_matrix", "roi_align", "encode_deltas", "decode_deltas",
    "ciou_loss", "box_losses", "mask_targets", "mask_losses", "paste_and_fuse",
]

FEATURE_STRIDE = 4
SIZE_WEIGHT = 0.1  # size residuals are in pixels, an order larger than the other terms
BOX_ROI = 7
MASK_ROI = 14
MASK_SIZE = 28
DELTA_CLAMP = math.log(1000.0 / 16)


@dataclass
class ProposalSet:
    boxes: np.ndarray  # (n, 4) x, y, w, h
    scores: np.ndarray
    classes: np.ndarray

    @property
    def n(self) -> int:
        return len(self.scores)

    @classmethod
    def empty(cls) -> "ProposalSet":
        return cls(np.zeros((0, 4)), np.zeros(0), np.zeros(0, dtype=np.int64))


@dataclass
class MaskTriplet:
    """Box-local masks plus the crop origin ``(row, col)`` in the image."""

    M_s: np.ndarray
    M_c: np.ndarray
    M_i: np.ndarray
    origin: tuple

    def full(self, height: int, width: int) -> np.ndarray:
        out = np.zeros((height, width), dtype=bool)
        r, c = self.origin
        h, w = self.M_i.shape
        out[r : r + h, c : c + w] = self.M_i
        return out


# ---------------------------------------------------------------------------
# center-based candidate boxes

class CenterHead(Module):
    """Heatmap (one channel per class), size and offset sub-heads on the stride-4 feature."""

    def __init__(self, rng, c_in: int, num_classes: int, width: int = 32):
        self.heat1 = Conv2d(rng, c_in, width)
        self.heat2 = Conv2d(rng, width, num_classes, k=1)
        self.size1 = Conv2d(rng, c_in, width)
        self.size2 = Conv2d(rng, width, 2, k=1)
        self.off1 = Conv2d(rng, c_in, width)
        self.off2 = Conv2d(rng, width, 2, k=1)
        self.heat2.weight.data *= 0.1
        self.heat2.bias.data[...] = -2.19  # initial foreground probability ~0.1
        self.num_classes = num_classes

    def __call__(self, feat):
        return {
            "heatmap": self.heat2(ops.relu(self.heat1(feat))),
            "size": self.size2(ops.relu(self.size1(feat))),
            "offset": self.off2(ops.relu(self.off1(feat))),
        }


def gaussian_radius(height: float, width: float, min_overlap: float = 0.7) -> float:
    """Largest centre displacement keeping IoU >= ``min_overlap`` (CenterNet's three-case bound)."""
    a1, b1 = 1.0, height + width
    c1 = width * height * (1 - min_overlap) / (1 + min_overlap)
    r1 = (b1 + math.sqrt(b1 * b1 - 4 * a1 * c1)) / 2
    a2, b2 = 4.0, 2 * (height + width)
    c2 = (1 - min_overlap) * width * height
    r2 = (b2 + math.sqrt(b2 * b2 - 4 * a2 * c2)) / 2
    a3, b3 = 4 * min_overlap, -2 * min_overlap * (height + width)
    c3 = (min_overlap - 1) * width * height
    r3 = (b3 + math.sqrt(b3 * b3 - 4 * a3 * c3)) / 2
    return min(r1, r2, r3)


def _splat(heat: np.ndarray, cy: int, cx: int, radius: int) -> None:
    sigma = (2 * radius + 1) / 6.0
    ys, xs = np.ogrid[-radius : radius + 1, -radius : radius + 1]
    g = np.exp(-(xs * xs + ys * ys) / (2 * sigma * sigma))
    h, w = heat.shape
    top, bottom = min(cy, radius), min(h - cy, radius + 1)
    left, right = min(cx, radius), min(w - cx, radius + 1)
    region = heat[cy - top : cy + bottom, cx - left : cx + right]
    np.maximum(region, g[radius - top : radius + bottom, radius - left : radius + right], out=region)


def cbgm_targets(instances, feat_h: int, feat_w: int, num_classes: int, stride: int = FEATURE_STRIDE):
    """Gaussian-splatted centre heatmap plus size/offset regression targets at centre cells.

    Instance categories are 1-based; heatmap channel ``k`` holds category ``k + 1``.
    """
    heat = np.zeros((feat_h, feat_w, num_classes))
    cells, sizes, offsets = [], [], []
    for inst in instances:
        x, y, w, h = inst.bbox
        cx, cy = x + w / 2.0, y + h / 2.0
        col = min(int(cx // stride), feat_w - 1)
        row = min(int(cy // stride), feat_h - 1)
        r = max(0, int(gaussian_radius(h / stride, w / stride)))
        _splat(heat[..., inst.category - 1], row, col, r)
        cells.append((row, col))
        sizes.append((w, h))
        offsets.append((cx - stride * col, cy - stride * row))
    return {
        "heatmap": heat,
        "cells": np.asarray(cells, dtype=np.int64).reshape(-1, 2),
        "size": np.asarray(sizes, dtype=np.float64).reshape(-1, 2),
        "offset": np.asarray(offsets, dtype=np.float64).reshape(-1, 2),
    }


def _focal(prob, gt: np.ndarray, alpha: float = 2.0, beta: float = 4.0):
    p = ops.clip(prob, BCE_CLAMP, 1.0 - BCE_CLAMP)
    pos = (gt == 1.0).astype(p.dtype)
    neg = (1.0 - pos) * (1.0 - gt) ** beta
    pos_term = ops.log(p) * (1.0 - p) ** alpha * pos
    neg_term = ops.log(1.0 - p) * p ** alpha * neg
    n_pos = max(float(pos.sum()), 1.0)
    return -(pos_term.sum() + neg_term.sum()) * (1.0 / n_pos)


def cbgm_loss(raw_heads: dict, targets) -> LossValue:
    """Penalty-reduced focal loss on the heatmap plus L1 on size and offset at centre cells.

    ``raw_heads`` holds batched ``(b, h, w, ·)`` tensors; ``targets`` is a list of
    :func:`cbgm_targets` dicts, one per image.
    """
    heat_logits = raw_heads["heatmap"]
    if heat_logits.ndim == 3:
        raw_heads = {k: v.reshape((1,) + v.shape) for k, v in raw_heads.items()}
        heat_logits = raw_heads["heatmap"]
    if isinstance(targets, dict):
        targets = [targets]
    gt_heat = np.stack([t["heatmap"] for t in targets])
    focal = _focal(ops.sigmoid(heat_logits), gt_heat)
    b_idx = np.concatenate([np.full(len(t["cells"]), i) for i, t in enumerate(targets)]).astype(np.int64)
    cells = np.concatenate([t["cells"] for t in targets])
    if len(cells):
        n = float(len(cells))
        sel = (b_idx, cells[:, 0], cells[:, 1])
        size_l1 = ops.abs(raw_heads["size"][sel] - np.concatenate([t["size"] for t in targets])).sum() * (1.0 / n)
        off_l1 = ops.abs(raw_heads["offset"][sel] - np.concatenate([t["offset"] for t in targets])).sum() * (1.0 / n)
    else:
        size_l1 = (raw_heads["size"] * 0.0).sum()
        off_l1 = (raw_heads["offset"] * 0.0).sum()
    total = focal + SIZE_WEIGHT * size_l1 + off_l1
    return LossValue(total, {"focal": focal.item(), "size": SIZE_WEIGHT * size_l1.item(), "offset": off_l1.item()})


def find_peaks(heat: np.ndarray) -> np.ndarray:
    """Boolean map of 3x3 local maxima of each ``(h, w, k)`` channel.

    Among equal values the one with the smallest raster index wins: a cell
    must be strictly greater than earlier neighbours and no smaller than later ones.
    """
    h, w = heat.shape[:2]
    pad = np.pad(heat, ((1, 1), (1, 1), (0, 0)), constant_values=-np.inf)
    keep = np.ones(heat.shape, dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            nb = pad[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
            earlier = dy < 0 or (dy == 0 and dx < 0)
            keep &= (heat > nb) if earlier else (heat >= nb)
    return keep


def cbgm_decode(heat_prob: np.ndarray, size: np.ndarray, offset: np.ndarray, k_max: int = 100,
                score_thresh: float = 0.05, image_hw=None, stride: int = FEATURE_STRIDE) -> ProposalSet:
    """Peaks -> boxes. ``heat_prob`` is ``(h, w, k)`` sigmoid output; size/offset ``(h, w, 2)`` in pixels."""
    if k_max <= 0:
        raise ValueError(f"k_max must be positive, got {k_max}")
    fh, fw, _ = heat_prob.shape
    hh, ww = image_hw if image_hw is not None else (fh * stride, fw * stride)
    peaks = find_peaks(heat_prob) & (heat_prob >= score_thresh)
    ys, xs, ks = np.nonzero(peaks)  # raster (y, x, class) order = decode index
    if ys.size == 0:
        return ProposalSet.empty()
    scores = heat_prob[ys, xs, ks]
    order = np.lexsort((np.arange(ys.size), -scores))[:k_max]
    ys, xs, ks, scores = ys[order], xs[order], ks[order], scores[order]
    boxes, keep = [], []
    for i, (y, x) in enumerate(zip(ys, xs)):
        cx = stride * x + offset[y, x, 0]
        cy = stride * y + offset[y, x, 1]
        bw, bh = max(float(size[y, x, 0]), 1.0), max(float(size[y, x, 1]), 1.0)
        box = clip_box((cx - bw / 2, cy - bh / 2, bw, bh), ww, hh)
        if box is not None and box[2] >= 1.0 and box[3] >= 1.0:
            boxes.append(box)
            keep.append(i)
    keep = np.asarray(keep, dtype=np.int64)
    if keep.size == 0:
        return ProposalSet.empty()
    return ProposalSet(np.asarray(boxes, dtype=np.float64), scores[keep].astype(np.float64), ks[keep] + 1)


# ---------------------------------------------------------------------------
# RoI Align

def roi_align_matrix(boxes: np.ndarray, batch_index: np.ndarray, feat_h: int, feat_w: int,
                     out: int, stride: float = FEATURE_STRIDE, sampling: int = 2):
    """Sparse ``(R*out*out, B*feat_h*feat_w)`` bilinear-sampling operator.

    Boxes are image-pixel ``(x, y, w, h)``. Feature cell ``j`` is centred at
    ``(j + 0.5) * stride`` pixels. Each output bin averages ``sampling**2``
    bilinear samples; sample coordinates are clamped to the feature extent.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    r = len(boxes)
    frac = (np.arange(sampling) + 0.5) / sampling
    grid = (np.arange(out)[:, None] + frac[None, :]).reshape(-1)  # (out * sampling,)

    def axis(start, length, n):
        pos = start[:, None] / stride + grid[None, :] * (length[:, None] / stride / out) - 0.5
        pos = np.clip(pos, 0.0, n - 1)
        i0 = np.floor(pos).astype(np.int64)
        i1 = np.minimum(i0 + 1, n - 1)
        t = pos - i0
        return i0, i1, t  # (r, out * sampling)

    y0, y1, ty = axis(boxes[:, 1], boxes[:, 3], feat_h)
    x0, x1, tx = axis(boxes[:, 0], boxes[:, 2], feat_w)
    base = np.asarray(batch_index, dtype=np.int64)[:, None, None] * (feat_h * feat_w)
    rows_out = (np.arange(r)[:, None, None] * out * out
                + (np.arange(out * sampling) // sampling)[None, :, None] * out
                + (np.arange(out * sampling) // sampling)[None, None, :])
    rows, cols, vals = [], [], []
    for yi, wy in ((y0, 1.0 - ty), (y1, ty)):
        for xi, wx in ((x0, 1.0 - tx), (x1, tx)):
            cols.append((base + yi[:, :, None] * feat_w + xi[:, None, :]).reshape(-1))
            vals.append((wy[:, :, None] * wx[:, None, :]).reshape(-1) / (sampling * sampling))
            rows.append(rows_out.reshape(-1))
    shape = (r * out * out, int(np.max(batch_index, initial=0) + 1) * feat_h * feat_w)
    return sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape
    )


def roi_align(feat, boxes, out: int, batch_index=None, stride: float = FEATURE_STRIDE, sampling: int = 2):
    """Crop ``(R, out, out, c)`` features for ``boxes`` from an ``(h, w, c)`` or ``(b, h, w, c)`` map."""
    feat = as_tensor(feat)
    if feat.ndim == 3:
        feat = feat.reshape((1,) + feat.shape)
    b, fh, fw, c = feat.shape
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    if len(boxes) and (boxes[:, 2:] <= 0).any():
        raise ValueError("roi_align got a box with non-positive extent")
    batch_index = np.zeros(len(boxes), dtype=np.int64) if batch_index is None else np.asarray(batch_index)
    mat = roi_align_matrix(boxes, batch_index, fh, fw, out, stride, sampling)
    mat = sparse.csr_matrix((mat.data, mat.indices, mat.indptr), shape=(mat.shape[0], b * fh * fw))
    flat = ops.sparse_matmul(mat, feat.reshape(b * fh * fw, c))
    return flat.reshape(len(boxes), out, out, c)


# ---------------------------------------------------------------------------
# box branch

class BoxHead(Module):
    def __init__(self, rng, c_in: int, num_classes: int, roi: int = BOX_ROI, width: int = 256):
        self.fc1 = Linear(rng, roi * roi * c_in, width, std=math.sqrt(2.0 / (roi * roi * c_in)))
        self.fc2 = Linear(rng, width, width, std=math.sqrt(2.0 / width))
        self.cls = Linear(rng, width, num_classes + 1, std=0.01)
        self.reg = Linear(rng, width, 4, std=0.001)

    def __call__(self, roi_feat):
        n = roi_feat.shape[0]
        x = ops.relu(self.fc1(roi_feat.reshape(n, -1)))
        x = ops.relu(self.fc2(x))
        return self.cls(x), self.reg(x)


def encode_deltas(proposals: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """(dx, dy, log dw, log dh) of ``targets`` relative to ``proposals`` (both ``(n, 4)`` xywh)."""
    p = np.asarray(proposals, dtype=np.float64).reshape(-1, 4)
    g = np.asarray(targets, dtype=np.float64).reshape(-1, 4)
    pcx, pcy = p[:, 0] + p[:, 2] / 2, p[:, 1] + p[:, 3] / 2
    gcx, gcy = g[:, 0] + g[:, 2] / 2, g[:, 1] + g[:, 3] / 2
    return np.stack([(gcx - pcx) / p[:, 2], (gcy - pcy) / p[:, 3],
                     np.log(g[:, 2] / p[:, 2]), np.log(g[:, 3] / p[:, 3])], axis=1)


def decode_deltas(proposals, deltas):
    """Inverse of :func:`encode_deltas`; differentiable when ``deltas`` is a Tensor."""
    p = np.asarray(proposals, dtype=np.float64).reshape(-1, 4)
    pcx, pcy = p[:, 0] + p[:, 2] / 2, p[:, 1] + p[:, 3] / 2
    if isinstance(deltas, Tensor):
        dt = deltas.dtype
        cx = deltas[:, 0] * p[:, 2].astype(dt) + pcx.astype(dt)
        cy = deltas[:, 1] * p[:, 3].astype(dt) + pcy.astype(dt)
        w = ops.exp(ops.clip(deltas[:, 2], -DELTA_CLAMP, DELTA_CLAMP)) * p[:, 2].astype(dt)
        h = ops.exp(ops.clip(deltas[:, 3], -DELTA_CLAMP, DELTA_CLAMP)) * p[:, 3].astype(dt)
        return ops.stack([cx - w * 0.5, cy - h * 0.5, w, h], axis=1)
    d = np.asarray(deltas, dtype=np.float64).reshape(-1, 4)
    cx, cy = d[:, 0] * p[:, 2] + pcx, d[:, 1] * p[:, 3] + pcy
    w = np.exp(np.clip(d[:, 2], -DELTA_CLAMP, DELTA_CLAMP)) * p[:, 2]
    h = np.exp(np.clip(d[:, 3], -DELTA_CLAMP, DELTA_CLAMP)) * p[:, 3]
    return np.stack([cx - w / 2, cy - h / 2, w, h], axis=1)


def ciou_loss(pred, gt, detach_alpha: bool = True) -> Tensor:
    """Per-box complete-IoU loss ``1 - IoU + rho^2 / c^2 + alpha * v``; boxes are xywh.

    By default ``alpha`` is treated as a constant weight (no gradient), as is
    customary; ``detach_alpha=False`` differentiates the formula as written.
    """
    pred = as_tensor(pred)
    g = np.asarray(gt, dtype=pred.dtype).reshape(-1, 4)
    if (g[:, 2] <= 0).any() or (g[:, 3] <= 0).any():
        raise ValueError("ciou_loss: ground-truth box with zero area")
    px0, py0, pw, ph = pred[:, 0], pred[:, 1], pred[:, 2], pred[:, 3]
    px1, py1 = px0 + pw, py0 + ph
    gx0, gy0, gw, gh = g[:, 0], g[:, 1], g[:, 2], g[:, 3]
    gx1, gy1 = gx0 + gw, gy0 + gh
    iw = ops.relu(ops.minimum(px1, gx1) - ops.maximum(px0, gx0))
    ih = ops.relu(ops.minimum(py1, gy1) - ops.maximum(py0, gy0))
    inter = iw * ih
    union = pw * ph + gw * gh - inter
    iou = inter / union
    rho2 = (px0 + pw * 0.5 - (gx0 + gw / 2)) ** 2 + (py0 + ph * 0.5 - (gy0 + gh / 2)) ** 2
    cw = ops.maximum(px1, gx1) - ops.minimum(px0, gx0)
    ch = ops.maximum(py1, gy1) - ops.minimum(py0, gy0)
    c2 = cw * cw + ch * ch
    v = (ops.atan(gw / gh) - ops.atan(pw / ph)) ** 2 * (4.0 / math.pi ** 2)
    if detach_alpha:
        denom = (1.0 - iou.data) + v.data
        alpha = np.where(v.data > 0, v.data / np.where(denom > 0, denom, 1.0), 0.0).astype(pred.dtype)
    else:
        alpha = v / ((1.0 - iou) + v)
    return 1.0 - iou + rho2 / c2 + v * alpha


def box_losses(pred_deltas, proposals, gt_boxes, detach_alpha: bool = True) -> LossValue:
    """Smooth-L1 on deltas (summed over coordinates) plus CIoU on decoded boxes, each averaged over boxes."""
    pred_deltas = as_tensor(pred_deltas)
    proposals = np.asarray(proposals, dtype=np.float64).reshape(-1, 4)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    if (gt_boxes[:, 2:] <= 0).any():
        raise ValueError("box_losses: ground-truth box with zero area")
    n = max(len(proposals), 1)
    target = encode_deltas(proposals, gt_boxes)
    sl1 = smooth_l1(pred_deltas, target).sum() * (1.0 / n)
    ciou = ciou_loss(decode_deltas(proposals, pred_deltas), gt_boxes, detach_alpha).sum() * (1.0 / n)
    return LossValue(sl1 + ciou, {"smooth_l1": sl1.item(), "ciou": ciou.item()})


# ---------------------------------------------------------------------------
# mask branch

class MaskHead(Module):
    def __init__(self, rng, c_in: int, num_classes: int, width: int = 32):
        self.convs = ModuleList([ConvBNReLU(rng, c_in if i == 0 else width, width) for i in range(4)])
        self.up = Parameter(rng.normal(0.0, math.sqrt(1.0 / width), size=(width, width, 2, 2)))
        self.up_bias = Parameter(np.zeros(width))
        self.predict = Conv2d(rng, width, num_classes, k=1)

    def logits(self, roi_feat):
        x = roi_feat
        for conv in self.convs:
            x = conv(x)
        x = ops.relu(F.deconv2d_s2(x, self.up) + self.up_bias)
        return self.predict(x)

    def __call__(self, roi_feat):
        return ops.sigmoid(self.logits(roi_feat))


def mask_targets(gt_masks, boxes, size: int = MASK_SIZE) -> np.ndarray:
    """Crop-and-resize full-image GT masks into ``(R, size, size)`` binary targets."""
    out = np.zeros((len(boxes), size, size))
    for i, (m, box) in enumerate(zip(gt_masks, np.asarray(boxes).reshape(-1, 4))):
        mat = roi_align_matrix(box[None], np.zeros(1, dtype=np.int64), m.shape[0], m.shape[1], size, stride=1.0)
        out[i] = (mat @ m.reshape(-1).astype(np.float64)).reshape(size, size) >= 0.5
    return out


def mask_losses(probs, classes, targets) -> LossValue:
    """Unit-weight BCE plus per-instance Dice on each RoI's ground-truth class channel."""
    probs = as_tensor(probs)
    classes = np.asarray(classes, dtype=np.int64)
    r = len(classes)
    sel = probs[np.arange(r), :, :, classes - 1]  # (r, size, size)
    bce = weighted_bce(sel, targets).total
    dice = None
    for i in range(r):
        d = dice_loss(sel[i], targets[i]).total
        dice = d if dice is None else dice + d
    dice = dice * (1.0 / r)
    return LossValue(bce + dice, {"bce": bce.item(), "dice": dice.item()})


def _pixel_span(start: float, length: float, limit: int):
    """Pixels whose centres fall inside ``[start, start + length]``, clipped to ``[0, limit)``."""
    lo = max(int(math.ceil(start - 0.5)), 0)
    hi = min(int(math.floor(start + length - 0.5)) + 1, limit)
    return lo, hi


def paste_and_fuse(mask28, box, fg_map, height: int, width: int, fg_full=None,
                   threshold: float = 0.5) -> MaskTriplet:
    """Resize a box-local mask into the image and gate it with the cropped foreground map.

    ``fg_map`` is the stride-4 foreground probability map (or ``None`` to skip
    fusion); ``fg_full`` may pass its precomputed full-resolution upsampling.
    """
    from .imaging import resize_bilinear

    mask28 = np.asarray(mask28, dtype=np.float64)
    bx, by, bw, bh = (float(v) for v in box)
    c0, c1 = _pixel_span(bx, bw, width)
    r0, r1 = _pixel_span(by, bh, height)
    if c1 <= c0 or r1 <= r0:
        empty = np.zeros((0, 0))
        return MaskTriplet(empty, empty.astype(bool), empty.astype(bool), (0, 0))
    s = mask28.shape[0]
    # sample mask28 at each pixel centre, half-pixel convention on both grids
    v = np.clip((np.arange(r0, r1) + 0.5 - by) / bh * s - 0.5, 0, s - 1)
    u = np.clip((np.arange(c0, c1) + 0.5 - bx) / bw * mask28.shape[1] - 0.5, 0, mask28.shape[1] - 1)
    v0, u0 = np.floor(v).astype(int), np.floor(u).astype(int)
    v1, u1 = np.minimum(v0 + 1, s - 1), np.minimum(u0 + 1, mask28.shape[1] - 1)
    tv, tu = (v - v0)[:, None], (u - u0)[None, :]
    m_s = ((mask28[v0][:, u0] * (1 - tu) + mask28[v0][:, u1] * tu) * (1 - tv)
           + (mask28[v1][:, u0] * (1 - tu) + mask28[v1][:, u1] * tu) * tv)
    if fg_map is None and fg_full is None:
        m_c = np.ones_like(m_s, dtype=bool)
    else:
        if fg_full is None:
            fg_full = resize_bilinear(fg_map, height, width)
        m_c = fg_full[r0:r1, c0:c1] >= threshold
    m_i = (m_c * m_s) >= threshold
    return MaskTriplet(m_s, m_c, m_i, (r0, c0))
