"""Per-image prediction documents: ``{"image_id", "instances": [{category, score, bbox, mask}]}``."""
from __future__ import annotations

import json
from pathlib import Path

from .records import InstanceRecord
from .synthdata.rle import rle_decode, rle_encode

__all__ = ["prediction_document", "write_predictions", "read_predictions"]


def prediction_document(image_id: int, instances) -> dict:
    return {
        "image_id": int(image_id),
        "instances": [
            {
                "category": int(p.category),
                "score": float(p.score),
                "bbox": [float(v) for v in p.bbox],
                "mask": rle_encode(p.mask),
            }
            for p in instances
        ],
    }


def write_predictions(directory, image_ids, predictions) -> list:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for image_id, preds in zip(image_ids, predictions):
        path = directory / f"{int(image_id):06d}.json"
        path.write_text(json.dumps(prediction_document(image_id, preds)), encoding="utf-8")
        paths.append(path)
    return paths


def read_predictions(directory, image_ids) -> list:
    """Per-image InstanceRecord lists aligned with ``image_ids``; a missing file means no detections."""
    directory = Path(directory)
    out = []
    for image_id in image_ids:
        path = directory / f"{int(image_id):06d}.json"
        if not path.is_file():
            out.append([])
            continue
        doc = json.loads(path.read_text(encoding="utf-8"))
        if doc.get("image_id") != image_id:
            raise ValueError(f"{path}: image_id {doc.get('image_id')} != {image_id}")
        out.append([
            InstanceRecord(int(r["category"]), tuple(r["bbox"]), rle_decode(r["mask"]), float(r["score"]))
            for r in doc["instances"]
        ])
    return out
