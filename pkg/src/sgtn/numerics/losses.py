"""Loss primitives returning :class:`LossValue`."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .tensor import Tensor, as_tensor

__all__ = ["LossValue", "weighted_bce", "dice_loss", "smooth_l1", "BCE_CLAMP"]

BCE_CLAMP = 1e-7


@dataclass
class LossValue:
    """A differentiable scalar plus a per-term breakdown of floats."""

    total: Tensor
    terms: dict = field(default_factory=dict)

    @property
    def scalar(self) -> float:
        return self.total.item()

    def __add__(self, other: "LossValue") -> "LossValue":
        terms = dict(self.terms)
        for k, v in other.terms.items():
            terms[k] = terms.get(k, 0.0) + v
        return LossValue(self.total + other.total, terms)

    def backward(self) -> None:
        self.total.backward()

    @classmethod
    def single(cls, name: str, value: Tensor) -> "LossValue":
        return cls(value, {name: value.item()})

    @classmethod
    def combine(cls, parts: dict) -> "LossValue":
        """Sum named LossValues, prefixing each breakdown key with the part name."""
        total = None
        terms = {}
        for name, part in parts.items():
            total = part.total if total is None else total + part.total
            for k, v in part.terms.items():
                terms[f"{name}.{k}" if k != name else name] = v
        return cls(total, terms)


def weighted_bce(pred, target, weight=None, reduction: str = "mean") -> LossValue:
    """Pixel-weighted binary cross-entropy on probabilities.

    ``reduction="mean"`` divides the weighted sum by ``sum(weight)`` so that
    re-weighting shifts emphasis without changing the loss scale;
    ``"sum"`` returns the raw weighted sum.
    """
    pred = as_tensor(pred)
    t = np.asarray(target, dtype=pred.dtype)
    w = np.ones_like(t) if weight is None else np.asarray(weight, dtype=pred.dtype)
    if pred.shape != t.shape or w.shape != t.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape}, target {t.shape}, weight {w.shape}")
    if (w < 0).any():
        raise ValueError("weighted_bce weights must be non-negative")
    p = ops.clip(pred, BCE_CLAMP, 1.0 - BCE_CLAMP)
    nll = -(ops.log(p) * t + ops.log(1.0 - p) * (1.0 - t))
    s = (nll * w).sum()
    if reduction == "sum":
        out = s
    elif reduction == "mean":
        out = s * (1.0 / max(float(w.sum()), np.finfo(np.float64).tiny))
    else:
        raise ValueError(f"unknown reduction {reduction!r}")
    return LossValue.single("bce", out)


def dice_loss(pred, target, eps: float = 1.0) -> LossValue:
    """Soft Dice: ``1 - (2 sum(p t) + eps) / (sum(p) + sum(t) + eps)``."""
    pred = as_tensor(pred)
    t = np.asarray(target, dtype=pred.dtype)
    if pred.shape != t.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape}, target {t.shape}")
    inter = (pred * t).sum()
    denom = pred.sum() + (float(t.sum()) + eps)
    out = 1.0 - (inter * 2.0 + eps) / denom
    return LossValue.single("dice", out)


def smooth_l1(pred, target, beta: float = 1.0) -> Tensor:
    """Element-wise Huber-style loss: ``0.5 x^2 / beta`` inside ``|x| < beta``, else ``|x| - beta / 2``."""
    pred = as_tensor(pred)
    diff = pred - np.asarray(target, dtype=pred.dtype)
    small = np.abs(diff.data) < beta
    return ops.where(small, diff * diff * (0.5 / beta), ops.abs(diff) - 0.5 * beta)
