"""Uncompressed COCO-style run-length encoding (column-major, zero run first)."""
from __future__ import annotations

import numpy as np

__all__ = ["CorruptDataError", "rle_encode", "rle_decode", "rle_roundtrip", "rle_area"]


class CorruptDataError(ValueError):
    pass


def rle_encode(mask: np.ndarray) -> dict:
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    flat = mask.reshape(-1, order="F").astype(np.int8)
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    counts = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        counts = [0] + counts
    if not flat.size:
        counts = [0]
    return {"size": [int(h), int(w)], "counts": [int(c) for c in counts]}


def rle_decode(rle: dict) -> np.ndarray:
    try:
        h, w = (int(v) for v in rle["size"])
        counts = np.asarray(rle["counts"], dtype=np.int64)
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptDataError(f"malformed RLE record: {exc}") from None
    if (counts < 0).any():
        raise CorruptDataError("RLE counts must be non-negative")
    if int(counts.sum()) != h * w:
        raise CorruptDataError(f"RLE counts sum to {int(counts.sum())}, expected {h * w}")
    values = np.arange(counts.size) % 2 == 1
    flat = np.repeat(values, counts)
    return flat.reshape((h, w), order="F")


def rle_roundtrip(mask: np.ndarray) -> np.ndarray:
    return rle_decode(rle_encode(mask))


def rle_area(rle: dict) -> int:
    return int(sum(rle["counts"][1::2]))
