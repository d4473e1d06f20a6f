"""Shape guidance: detail branch, fused shape feature, and foreground/edge/corner supervision."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imaging import max_pool_binary, resize_bilinear
from .numerics import ops
from .numerics.losses import LossValue, weighted_bce
from .numerics.nn import Conv2d, ConvBNReLU, Module, ModuleList
from .numerics.tensor import ShapeError, Tensor, as_tensor

__all__ = [
    "ShapeTargets",
    "ShapeGuidanceOutput",
    "ARFEM",
    "ShapeGuidanceModule",
    "downsample_image",
    "trace_boundary",
    "douglas_peucker_closed",
    "instance_shape_maps",
    "derive_shape_targets",
    "shape_weight_map",
    "sgm_loss",
    "EDGE_WEIGHT",
    "CORNER_WEIGHT",
]

EDGE_WEIGHT = 2.0
CORNER_WEIGHT = 4.0
DP_TOLERANCE = 1.5

_SQUARE = np.ones((3, 3), dtype=bool)


@dataclass
class ShapeTargets:
    fg: np.ndarray
    edge: np.ndarray
    corner: np.ndarray

    def stacked(self) -> np.ndarray:
        """``(h, w, 3)`` float map in channel order foreground, edge, corner."""
        return np.stack([self.fg, self.edge, self.corner], axis=-1).astype(np.float64)


@dataclass
class ShapeGuidanceOutput:
    guided_feature: Tensor
    logits: Tensor
    probabilities: Tensor

    @property
    def foreground(self) -> np.ndarray:
        return self.probabilities.data[..., 0]


def downsample_image(image: np.ndarray, factor: int = 4) -> np.ndarray:
    """Bilinear ``factor``-times downsampling of an ``(H, W, 3)`` or ``(B, H, W, 3)`` image."""
    image = np.asarray(image)
    if image.ndim == 4:
        return np.stack([downsample_image(im, factor) for im in image])
    h, w = image.shape[:2]
    return resize_bilinear(image, h // factor, w // factor)


class ARFEM(Module):
    """Multi-receptive-field shallow extractor.

    Three 3x3 conv-BN-ReLU layers with dilations 1, 2 and 4 are chained so
    their outputs see radii 1, 3 and 7; the three outputs are concatenated and
    fused by a 1x1 conv-BN-ReLU.
    """

    def __init__(self, rng, c_in: int = 3, c_out: int = 32, branch: int = 16, dilations=(1, 2, 4)):
        layers, c = [], c_in
        for d in dilations:
            layers.append(ConvBNReLU(rng, c, branch, 3, dilation=d))
            c = branch
        self.branches = ModuleList(layers)
        self.fuse = ConvBNReLU(rng, branch * len(dilations), c_out, k=1)
        self.out_channels = c_out

    def __call__(self, image_down4):
        taps, x = [], image_down4
        for layer in self.branches:
            x = layer(x)
            taps.append(x)
        return self.fuse(ops.concat(taps, axis=-1))


class ShapeGuidanceModule(Module):
    def __init__(self, rng, c_encoder: int, c_detail: int = 32, width: int = 32):
        self.refine = ModuleList(
            [ConvBNReLU(rng, c_encoder + c_detail if i == 0 else width, width) for i in range(4)]
        )
        self.head = ModuleList([ConvBNReLU(rng, width, width) for _ in range(2)])
        self.classifier = Conv2d(rng, width, 3, k=1)
        self.classifier.weight.data *= 0.1
        self.out_channels = width

    def __call__(self, encoder_feat, detail_feat) -> ShapeGuidanceOutput:
        encoder_feat, detail_feat = as_tensor(encoder_feat), as_tensor(detail_feat)
        if encoder_feat.shape[:-1] != detail_feat.shape[:-1]:
            raise ShapeError(
                f"encoder feature {encoder_feat.shape} and detail feature {detail_feat.shape} differ in extent"
            )
        x = ops.concat([encoder_feat, detail_feat], axis=-1)
        for layer in self.refine:
            x = layer(x)
        y = x
        for layer in self.head:
            y = layer(y)
        logits = self.classifier(y)
        return ShapeGuidanceOutput(x, logits, ops.sigmoid(logits))


def sgm_forward(encoder_feat, arfem_feat, params: ShapeGuidanceModule) -> ShapeGuidanceOutput:
    return params(encoder_feat, arfem_feat)


# ---------------------------------------------------------------------------
# ground-truth shape maps

# clockwise from north
_DIRS = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))
_DIR_INDEX = {d: i for i, d in enumerate(_DIRS)}


def trace_boundary(mask: np.ndarray) -> np.ndarray:
    """Moore-neighbour trace of the outer boundary of the component holding the first pixel.

    Returns an ``(n, 2)`` array of (row, col) pixel coordinates in clockwise order.
    """
    mask = np.asarray(mask, dtype=bool)
    nz = np.argwhere(mask)
    if nz.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    pad = np.pad(mask, 1)
    start = (int(nz[0, 0]) + 1, int(nz[0, 1]) + 1)
    pts = [start]
    p, back = start, 6  # entered from the west, which is background for the raster-first pixel
    second = None
    while True:
        for i in range(1, 9):
            k = (back + i) % 8
            q = (p[0] + _DIRS[k][0], p[1] + _DIRS[k][1])
            if pad[q]:
                break
        else:
            break  # isolated pixel
        checked = (p[0] + _DIRS[(k - 1) % 8][0], p[1] + _DIRS[(k - 1) % 8][1])
        if second is None:
            second = q
        elif p == start and q == second:
            pts.pop()
            break
        back = _DIR_INDEX[(checked[0] - q[0], checked[1] - q[1])]
        pts.append(q)
        p = q
    return np.asarray(pts, dtype=np.int64) - 1


def _dp_open(pts: np.ndarray, tol: float) -> list:
    """Indices of the Douglas-Peucker simplification of an open chain."""
    keep = [0, len(pts) - 1]
    stack = [(0, len(pts) - 1)]
    while stack:
        i, j = stack.pop()
        if j <= i + 1:
            continue
        a, b = pts[i].astype(float), pts[j].astype(float)
        seg = pts[i + 1 : j].astype(float)
        ab = b - a
        norm = np.hypot(*ab)
        if norm == 0:
            d = np.hypot(*(seg - a).T)
        else:
            d = np.abs(ab[0] * (seg[:, 1] - a[1]) - ab[1] * (seg[:, 0] - a[0])) / norm
        k = int(np.argmax(d))
        if d[k] > tol:
            m = i + 1 + k
            keep.append(m)
            stack.extend([(i, m), (m, j)])
    return sorted(set(keep))


def douglas_peucker_closed(pts: np.ndarray, tol: float = DP_TOLERANCE) -> np.ndarray:
    """Simplify a closed polygon: split at the point farthest from the first, simplify both halves."""
    pts = np.asarray(pts)
    if len(pts) <= 2:
        return pts
    far = int(np.argmax(np.hypot(*(pts - pts[0]).T)))
    ring = np.concatenate([pts, pts[:1]])
    first = _dp_open(ring[: far + 1], tol)
    second = [far + i for i in _dp_open(ring[far:], tol)]
    idx = sorted(set(first) | set(second))
    idx = [i for i in idx if i < len(pts)]
    return pts[idx]


def instance_shape_maps(mask: np.ndarray, dilate_corners: bool = True):
    """Foreground, edge and corner maps of one instance mask at its own resolution."""
    mask = np.asarray(mask, dtype=bool)
    fg = mask.copy()
    edge = mask & ~ndimage.binary_erosion(mask, structure=_SQUARE, border_value=0)
    corner = np.zeros_like(mask)
    labels, n = ndimage.label(mask, structure=_SQUARE)
    for comp in range(1, n + 1):
        verts = douglas_peucker_closed(trace_boundary(labels == comp))
        corner[verts[:, 0], verts[:, 1]] = True
    if dilate_corners:
        corner = ndimage.binary_dilation(corner, structure=_SQUARE)
    return fg, edge, corner


def derive_shape_targets(instances, height: int, width: int, stride: int = 4,
                         dilate_corners: bool = True) -> ShapeTargets:
    """Union of per-instance shape maps, max-pooled to ``stride``."""
    fg = np.zeros((height, width), dtype=bool)
    edge = np.zeros_like(fg)
    corner = np.zeros_like(fg)
    for inst in instances:
        f, e, c = instance_shape_maps(inst.mask, dilate_corners)
        fg |= f
        edge |= e
        corner |= c
    if stride > 1:
        fg, edge, corner = (max_pool_binary(m, stride) for m in (fg, edge, corner))
    return ShapeTargets(fg, edge, corner)


def shape_weight_map(targets: ShapeTargets) -> np.ndarray:
    """Per-pixel weight: 4 on corners, 2 on (non-corner) edges, 1 elsewhere."""
    w = np.ones(targets.fg.shape)
    w[targets.edge] = EDGE_WEIGHT
    w[targets.corner] = CORNER_WEIGHT
    return w


def sgm_loss(output, targets) -> LossValue:
    """Three weighted BCE terms sharing one edge/corner weight map.

    ``output`` is a :class:`ShapeGuidanceOutput` or a probability tensor of
    shape ``(..., h, w, 3)``; ``targets`` one ShapeTargets or a list (batch).
    """
    probs = output.probabilities if isinstance(output, ShapeGuidanceOutput) else as_tensor(output)
    if isinstance(targets, ShapeTargets):
        targets = [targets]
    t = np.stack([tg.stacked() for tg in targets])
    w = np.stack([shape_weight_map(tg) for tg in targets])
    if probs.ndim == 3:
        probs = probs.reshape((1,) + probs.shape)
    if probs.shape != t.shape:
        raise ShapeError(f"prediction {probs.shape} vs targets {t.shape}")
    parts = {}
    for ch, name in enumerate(("fg", "edge", "corner")):
        parts[name] = weighted_bce(probs[..., ch], t[..., ch], w).total
    total = parts["fg"] + parts["edge"] + parts["corner"]
    return LossValue(total, {k: v.item() for k, v in parts.items()})
