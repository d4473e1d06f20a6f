"""Procedural scenes of rectangles, L-shapes and ellipses on a textured background."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ..imaging import resize_bilinear
from ..records import InstanceRecord
from .pcg32 import PCG32

__all__ = ["SHAPE_CLASSES", "CATEGORIES", "SceneSpec", "Scene", "generate_scene", "render_shape",
           "PlacementWarning"]

SHAPE_CLASSES = ("rectangle", "L-shape", "ellipse")
CATEGORIES = {i + 1: name for i, name in enumerate(SHAPE_CLASSES)}
MAX_ATTEMPTS = 1000
SUPERSAMPLE = 4


class PlacementWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    extent: tuple = (64, 64)
    n_instances: tuple = (1, 4)
    shape_classes: tuple = SHAPE_CLASSES
    rotation: tuple = (-30.0, 30.0)
    overlap_max: float = 0.0
    size_range: tuple = (5.0, 12.0)  # half-extent in pixels at 64 px scale

    def __post_init__(self):
        h, w = self.extent
        if h % 32 or w % 32:
            raise ValueError(f"scene extent {self.extent} must be divisible by 32")
        unknown = set(self.shape_classes) - set(SHAPE_CLASSES)
        if unknown or not self.shape_classes:
            raise ValueError(f"unknown shape classes {sorted(unknown)}")
        lo, hi = self.n_instances
        if lo < 0 or hi < lo:
            raise ValueError(f"bad instance count range {self.n_instances}")


@dataclass
class Scene:
    image: np.ndarray  # uint8 (H, W, 3)
    instances: list = field(default_factory=list)
    warning: bool = False

    def __iter__(self):
        yield self.image
        yield self.instances


def render_shape(kind: str, cx: float, cy: float, a: float, b: float, theta: float,
                 ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Inside-test of a rotated shape at the given sample coordinates (pixel units)."""
    c, s = math.cos(theta), math.sin(theta)
    dx, dy = xs - cx, ys - cy
    u = c * dx + s * dy
    v = -s * dx + c * dy
    if kind == "rectangle":
        return (np.abs(u) <= a) & (np.abs(v) <= b)
    if kind == "ellipse":
        return (u / a) ** 2 + (v / b) ** 2 <= 1.0
    if kind == "L-shape":
        box = (np.abs(u) <= a) & (np.abs(v) <= b)
        notch = (u > -a + 0.9 * a) & (v < b - 0.9 * b)
        return box & ~notch
    raise ValueError(f"unknown shape {kind!r}")


def _texture(rng: PCG32, h: int, w: int) -> np.ndarray:
    grid = np.array([[rng.uniform(-1.0, 1.0) for _ in range(9)] for _ in range(9)])
    smooth = resize_bilinear(grid, h, w)
    fx, fy, ph = rng.uniform(0.05, 0.2), rng.uniform(0.05, 0.2), rng.uniform(0.0, 2 * math.pi)
    yy, xx = np.mgrid[0:h, 0:w]
    wave = np.sin(fx * xx + fy * yy + ph)
    return 0.06 * smooth + 0.03 * wave


def generate_scene(spec: SceneSpec) -> Scene:
    """Render one scene; a pure function of ``spec``."""
    rng = PCG32(spec.seed)
    h, w = spec.extent
    scale = min(h, w) / 64.0
    base = np.array([rng.uniform(0.15, 0.45) for _ in range(3)])
    image = np.clip(base[None, None, :] + _texture(rng, h, w)[..., None], 0.0, 1.0)

    n_target = rng.integers(spec.n_instances[0], spec.n_instances[1])
    yy, xx = np.mgrid[0:h, 0:w] + 0.5
    offs = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE
    sy = (np.arange(h)[:, None] + offs[None, :]).reshape(-1)
    sx = (np.arange(w)[:, None] + offs[None, :]).reshape(-1)
    syy, sxx = np.meshgrid(sy, sx, indexing="ij")

    placed = []
    attempts = 0
    while len(placed) < n_target and attempts < MAX_ATTEMPTS:
        attempts += 1
        kind = rng.choice(spec.shape_classes)
        a = rng.uniform(*spec.size_range) * scale
        b = rng.uniform(*spec.size_range) * scale
        theta = math.radians(rng.uniform(*spec.rotation))
        reach = math.hypot(a, b) + 1.0
        if 2 * reach >= min(h, w):
            continue
        cx = rng.uniform(reach, w - reach)
        cy = rng.uniform(reach, h - reach)
        mask = render_shape(kind, cx, cy, a, b, theta, yy, xx)
        if mask.sum() < 4:
            continue
        ok = True
        for other in placed:
            inter = np.logical_and(mask, other["mask"]).sum()
            if spec.overlap_max <= 0.0:
                ok = inter == 0
            else:
                ok = inter / np.logical_or(mask, other["mask"]).sum() <= spec.overlap_max
            if not ok:
                break
        if not ok:
            continue
        placed.append({"kind": kind, "mask": mask, "geom": (cx, cy, a, b, theta)})

    instances = []
    for item in placed:
        cover = render_shape(item["kind"], *item["geom"], syy, sxx)
        cover = cover.reshape(h, SUPERSAMPLE, w, SUPERSAMPLE).mean(axis=(1, 3))
        alpha = ndimage.gaussian_filter(cover, sigma=0.5, mode="constant")[..., None]
        color = np.array([rng.uniform(0.0, 1.0) for _ in range(3)])
        if np.abs(color - base).max() < 0.3:
            color = np.clip(base + np.where(base < 0.5, 0.45, -0.45), 0.0, 1.0)
        image = image * (1.0 - alpha) + color[None, None, :] * alpha
        category = SHAPE_CLASSES.index(item["kind"]) + 1
        instances.append(InstanceRecord.from_mask(category, item["mask"]))

    short = len(placed) < n_target
    if short:
        warnings.warn(f"scene seed {spec.seed}: placed {len(placed)} of {n_target} instances",
                      PlacementWarning, stacklevel=2)
    pixels = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    return Scene(pixels, instances, short)
