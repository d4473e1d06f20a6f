"""The LSwin backbone.

Each stage holds LSwin blocks; a block runs a shifted-window Swin pair and
an axial long-range-correlation (LRC) pair side by side on the same input and
mixes them as ``alpha * swin + beta * lrc``. Three feature fusion layers
lift the stride-32 output back to stride 4.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .attention import AttentionConfig, AxialAttention, WindowAttention, axial_msa, swmsa, wmsa
from .numerics import functional as F
from .numerics import ops
from .numerics.nn import ConvBNReLU, LayerNorm, Linear, Module, ModuleList, Parameter
from .numerics.tensor import ShapeError, as_tensor

__all__ = [
    "EncoderConfig",
    "DESK",
    "PAPER",
    "VARIANTS",
    "Mlp",
    "SwinBlock",
    "SwinPair",
    "LRCBlock",
    "LRCPair",
    "FusionGate",
    "LSwinBlock",
    "PatchEmbed",
    "PatchMerge",
    "FeatureFusionLayer",
    "LSwinEncoder",
    "patch_partition",
]

VARIANTS = ("lswin", "swin_only", "lrc_only")


@dataclass(frozen=True)
class EncoderConfig:
    embed_dim: int = 24
    depths: tuple = (1, 1, 2, 1)
    heads: tuple = (2, 2, 4, 8)
    window: int = 4
    variant: str = "lswin"
    mlp_ratio: int = 4
    scale_qk: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if len(self.depths) != 4 or len(self.heads) != 4:
            raise ValueError("depths and heads need one entry per stage (4)")
        for s, nh in enumerate(self.heads):
            if self.stage_dim(s) % nh:
                raise ValueError(f"stage {s + 1} width {self.stage_dim(s)} not divisible by {nh} heads")

    def stage_dim(self, s: int) -> int:
        """Channel width of stage ``s`` (0-based)."""
        return self.embed_dim * 2 ** s

    def with_variant(self, variant: str) -> "EncoderConfig":
        return replace(self, variant=variant)


DESK = EncoderConfig()
# depths count block pairs: Swin-S's [2, 2, 18, 2] blocks
PAPER = EncoderConfig(embed_dim=96, depths=(1, 1, 9, 1), heads=(3, 6, 12, 24), window=7)


class Mlp(Module):
    def __init__(self, rng, dim: int, ratio: int = 4):
        self.fc1 = Linear(rng, dim, dim * ratio)
        self.fc2 = Linear(rng, dim * ratio, dim)

    def __call__(self, x):
        return self.fc2(ops.gelu(self.fc1(x)))


class SwinBlock(Module):
    def __init__(self, rng, dim: int, heads: int, window: int, shift: int, scale_qk: bool = True, mlp_ratio: int = 4):
        self.cfg = AttentionConfig(dim, heads, window=window, shift=shift, scale_qk=scale_qk)
        self.norm1 = LayerNorm(dim)
        self.attn = WindowAttention(rng, dim, heads, window)
        self.norm2 = LayerNorm(dim)
        self.mlp = Mlp(rng, dim, mlp_ratio)

    def msa(self, x):
        fn = swmsa if self.cfg.shift else wmsa
        return fn(x, self.cfg, self.attn)

    def __call__(self, x):
        x = x + self.msa(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class SwinPair(Module):
    """W-MSA block followed by SW-MSA block."""

    def __init__(self, rng, dim, heads, window, scale_qk=True, mlp_ratio=4):
        self.regular = SwinBlock(rng, dim, heads, window, 0, scale_qk, mlp_ratio)
        self.shifted = SwinBlock(rng, dim, heads, window, window // 2, scale_qk, mlp_ratio)

    def __call__(self, x):
        return self.shifted(self.regular(x))


class LRCBlock(Module):
    """Axial attention block: instance norm before the MSA, layer norm before the MLP."""

    def __init__(self, rng, dim: int, heads: int, axis: str, scale_qk: bool = True, mlp_ratio: int = 4, eps: float = 1e-5):
        self.cfg = AttentionConfig(dim, heads, scale_qk=scale_qk, axis=axis)
        self.attn = AxialAttention(rng, dim, heads)
        self.norm2 = LayerNorm(dim)
        self.mlp = Mlp(rng, dim, mlp_ratio)
        self.eps = eps

    def __call__(self, x):
        x = x + axial_msa(F.axial_instance_norm(x, self.cfg.axis, self.eps), self.cfg, self.attn)
        return x + self.mlp(self.norm2(x))


class LRCPair(Module):
    """Column (V-MSA) block followed by row (H-MSA) block."""

    def __init__(self, rng, dim, heads, scale_qk=True, mlp_ratio=4):
        self.vertical = LRCBlock(rng, dim, heads, "column", scale_qk, mlp_ratio)
        self.horizontal = LRCBlock(rng, dim, heads, "row", scale_qk, mlp_ratio)

    def __call__(self, x):
        return self.horizontal(self.vertical(x))


class FusionGate(Module):
    def __init__(self, alpha: float = 1.0, beta: float = 0.0):
        self.alpha = Parameter(np.array(alpha))
        self.beta = Parameter(np.array(beta))


class LSwinBlock(Module):
    def __init__(self, rng, dim, heads, window, variant="lswin", scale_qk=True, mlp_ratio=4):
        self.swin = SwinPair(rng, dim, heads, window, scale_qk, mlp_ratio)
        self.lrc = LRCPair(rng, dim, heads, scale_qk, mlp_ratio)
        self.gate = FusionGate()
        if variant == "swin_only":
            self.gate.beta.freeze(0.0)
        elif variant == "lrc_only":
            self.gate.alpha.freeze(0.0)
            self.gate.beta.data[...] = 1.0

    def __call__(self, x):
        a, b = self.gate.alpha, self.gate.beta
        # a frozen zero gate contributes exactly nothing, so its path is skipped
        use_swin = a.trainable or a.data != 0
        use_lrc = b.trainable or b.data != 0
        out = None
        if use_swin:
            out = self.swin(x) * a
        if use_lrc:
            lr = self.lrc(x) * b
            out = lr if out is None else out + lr
        return out if out is not None else x * 0.0


def patch_partition(image, patch: int = 4):
    """``(b, H, W, 3)`` -> ``(b, H/p, W/p, p*p*3)`` non-overlapping patch vectors."""
    image = as_tensor(image)
    b, hh, ww, c = image.shape
    if hh % patch or ww % patch:
        raise ShapeError(f"image extents {(hh, ww)} not divisible by patch size {patch}")
    x = image.reshape(b, hh // patch, patch, ww // patch, patch, c).transpose(0, 1, 3, 2, 4, 5)
    return x.reshape(b, hh // patch, ww // patch, patch * patch * c)


class PatchEmbed(Module):
    def __init__(self, rng, embed_dim: int, patch: int = 4, in_ch: int = 3):
        self.proj = Linear(rng, patch * patch * in_ch, embed_dim)
        self.patch = patch

    def __call__(self, image):
        return self.proj(patch_partition(image, self.patch))


class PatchMerge(Module):
    """2x2 neighbourhood concat (4c) -> layer norm -> linear to 2c."""

    def __init__(self, rng, dim: int):
        self.norm = LayerNorm(4 * dim)
        self.reduce = Linear(rng, 4 * dim, 2 * dim, bias=False)

    @staticmethod
    def gather(x):
        x = as_tensor(x)
        b, h, w, c = x.shape
        if h % 2 or w % 2:
            raise ShapeError(f"patch merge needs even extents, got {(h, w)}")
        # channel order: (0,0), (1,0), (0,1), (1,1) offsets
        x = x.reshape(b, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 4, 2, 5)
        return x.reshape(b, h // 2, w // 2, 4 * c)

    def __call__(self, x):
        return self.reduce(self.norm(self.gather(x)))


class FeatureFusionLayer(Module):
    """Stride-2 transposed conv, lateral concat, two conv-BN-ReLU layers."""

    def __init__(self, rng, c_deep: int, c_lat: int, c_out: int | None = None):
        c_out = c_out or c_lat
        self.up = Parameter(rng.normal(0.0, np.sqrt(1.0 / c_deep), size=(c_deep, c_lat, 2, 2)))
        self.up_bias = Parameter(np.zeros(c_lat))
        self.conv1 = ConvBNReLU(rng, 2 * c_lat, c_out)
        self.conv2 = ConvBNReLU(rng, c_out, c_out)

    def __call__(self, deep, lateral):
        if (lateral.shape[-3], lateral.shape[-2]) != (2 * deep.shape[-3], 2 * deep.shape[-2]):
            raise ShapeError(
                f"lateral extents {lateral.shape[-3:-1]} must be twice deep extents {deep.shape[-3:-1]}"
            )
        up = F.deconv2d_s2(deep, self.up) + self.up_bias
        return self.conv2(self.conv1(ops.concat([up, lateral], axis=-1)))


class LSwinEncoder(Module):
    def __init__(self, rng, cfg: EncoderConfig = DESK):
        self.cfg = cfg
        self.embed = PatchEmbed(rng, cfg.embed_dim)
        stages, merges = [], []
        for s in range(4):
            dim = cfg.stage_dim(s)
            if s:
                merges.append(PatchMerge(rng, cfg.stage_dim(s - 1)))
            stages.append(ModuleList(
                [LSwinBlock(rng, dim, cfg.heads[s], cfg.window, cfg.variant, cfg.scale_qk, cfg.mlp_ratio)
                 for _ in range(cfg.depths[s])]
            ))
        self.stages = ModuleList(stages)
        self.merges = ModuleList(merges)
        self.fuse = ModuleList([
            FeatureFusionLayer(rng, cfg.stage_dim(3), cfg.stage_dim(2)),
            FeatureFusionLayer(rng, cfg.stage_dim(2), cfg.stage_dim(1)),
            FeatureFusionLayer(rng, cfg.stage_dim(1), cfg.stage_dim(0)),
        ])

    @property
    def out_channels(self) -> int:
        return self.cfg.embed_dim

    def gates(self):
        return [blk.gate for stage in self.stages for blk in stage]

    def __call__(self, image):
        """Return ``(stride4_feature, [stage1, stage2, stage3, stage4])``."""
        image = as_tensor(image)
        squeeze = image.ndim == 3
        if squeeze:
            image = image.reshape((1,) + image.shape)
        hh, ww = image.shape[1:3]
        if hh % 32 or ww % 32:
            raise ShapeError(f"image extents {(hh, ww)} must be divisible by 32")
        x = self.embed(image)
        feats = []
        for s, stage in enumerate(self.stages):
            if s:
                x = self.merges[s - 1](x)
            for blk in stage:
                x = blk(x)
            feats.append(x)
        y = feats[3]
        for ffl, lateral in zip(self.fuse, (feats[2], feats[1], feats[0])):
            y = ffl(y, lateral)
        if squeeze:
            return y[0], [f[0] for f in feats]
        return y, feats


def encoder_forward(image, cfg: EncoderConfig, params: LSwinEncoder):
    if params.cfg != cfg:
        raise ValueError("encoder parameters were built for a different config")
    return params(image)
