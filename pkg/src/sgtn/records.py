from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import tight_box


@dataclass
class InstanceRecord:
    """One ground-truth or predicted instance.

    ``bbox`` is ``(x, y, w, h)`` in pixels, ``mask`` a full-image boolean
    array. ``score`` is set for predictions only.
    """

    category: int
    bbox: tuple
    mask: np.ndarray
    score: float | None = None

    @classmethod
    def from_mask(cls, category: int, mask: np.ndarray, score: float | None = None) -> "InstanceRecord":
        mask = np.asarray(mask, dtype=bool)
        box = tight_box(mask)
        if box is None:
            raise ValueError("instance mask is empty")
        return cls(int(category), box, mask, score)

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.mask))
