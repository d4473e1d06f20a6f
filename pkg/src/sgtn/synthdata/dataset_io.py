"""On-disk datasets: binary PPM images plus one ``annotations.json``."""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..imaging import tight_box
from ..records import InstanceRecord
from .rle import CorruptDataError, rle_decode, rle_encode
from .scenes import CATEGORIES, Scene, SceneSpec, generate_scene

__all__ = [
    "DatasetError", "Dataset", "read_ppm", "write_ppm", "write_dataset", "read_dataset",
    "validate_annotation", "generate_dataset", "scene_seed",
]

log = logging.getLogger(__name__)


class DatasetError(ValueError):
    """A dataset file could not be loaded; the message names the offending record."""


_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    pos, fields = 0, []
    for _ in range(4):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise DatasetError(f"{path}: truncated PPM header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P6":
        raise DatasetError(f"{path}: not a binary PPM (magic {fields[0]!r})")
    try:
        w, h, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise DatasetError(f"{path}: malformed PPM header {fields!r}") from None
    if maxval != 255 or w <= 0 or h <= 0:
        raise DatasetError(f"{path}: unsupported PPM header (w={w}, h={h}, maxval={maxval})")
    pos += 1  # single whitespace byte before the raster
    raster = data[pos : pos + w * h * 3]
    if len(raster) != w * h * 3:
        raise DatasetError(f"{path}: PPM raster has {len(raster)} bytes, expected {w * h * 3}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3).copy()


def write_ppm(path, image: np.ndarray) -> None:
    image = np.ascontiguousarray(image, dtype=np.uint8)
    h, w, c = image.shape
    if c != 3:
        raise ValueError("PPM images need 3 channels")
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + image.tobytes())


@dataclass
class Dataset:
    images: list  # uint8 arrays
    instances: list  # list of InstanceRecord lists, aligned with images
    ids: list
    files: list
    categories: dict = field(default_factory=lambda: dict(CATEGORIES))
    warnings: list = field(default_factory=list)

    def __len__(self):
        return len(self.images)


def validate_annotation(ann_id: int, mask: np.ndarray, bbox) -> list:
    """Warnings for an annotation whose bbox disagrees with its mask's tight box by more than 1 px."""
    tight = tight_box(mask)
    if tight is None:
        return [f"annotation {ann_id}: empty mask"]
    diff = np.abs(np.asarray(tight) - np.asarray(bbox, dtype=np.float64)).max()
    if diff > 1.0:
        return [f"annotation {ann_id}: bbox {list(bbox)} differs from mask tight box {list(tight)} by {diff:g} px"]
    return []


def write_dataset(root, scenes, categories=None) -> Path:
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    categories = categories or CATEGORIES
    doc = {
        "images": [],
        "categories": [{"id": int(k), "name": v} for k, v in sorted(categories.items())],
        "annotations": [],
    }
    for i, scene in enumerate(scenes):
        image, instances = (scene.image, scene.instances) if isinstance(scene, Scene) else scene
        name = f"{i:06d}.ppm"
        write_ppm(root / "images" / name, image)
        doc["images"].append({"id": i, "file": f"images/{name}", "height": int(image.shape[0]),
                              "width": int(image.shape[1])})
        for inst in instances:
            doc["annotations"].append({
                "image_id": i,
                "category_id": int(inst.category),
                "bbox": [float(v) for v in inst.bbox],
                "rle": rle_encode(inst.mask),
            })
    (root / "annotations.json").write_text(json.dumps(doc), encoding="utf-8")
    return root


def read_dataset(root) -> Dataset:
    root = Path(root)
    ann_path = root / "annotations.json"
    if not ann_path.is_file():
        raise DatasetError(f"missing {ann_path}")
    try:
        doc = json.loads(ann_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{ann_path}: invalid JSON ({exc})") from None
    for key in ("images", "categories", "annotations"):
        if key not in doc:
            raise DatasetError(f"{ann_path}: missing top-level field {key!r}")
    images, ids, files, index, shapes = [], [], [], {}, {}
    for rec in doc["images"]:
        path = root / rec["file"]
        if not path.is_file():
            raise DatasetError(f"image {rec['id']}: missing file {path}")
        img = read_ppm(path)
        if img.shape[:2] != (rec["height"], rec["width"]):
            raise DatasetError(f"image {rec['id']}: header size {img.shape[:2]} != annotated "
                               f"{(rec['height'], rec['width'])}")
        index[rec["id"]] = len(images)
        shapes[rec["id"]] = img.shape[:2]
        images.append(img)
        ids.append(rec["id"])
        files.append(rec["file"])
    instances = [[] for _ in images]
    warn = []
    for k, ann in enumerate(doc["annotations"]):
        if ann["image_id"] not in index:
            raise DatasetError(f"annotation {k}: unknown image_id {ann['image_id']}")
        try:
            mask = rle_decode(ann["rle"])
        except CorruptDataError as exc:
            raise DatasetError(f"annotation {k} (image {ann['image_id']}): {exc}") from None
        if mask.shape != shapes[ann["image_id"]]:
            raise DatasetError(f"annotation {k}: RLE size {mask.shape} != image size {shapes[ann['image_id']]}")
        warn.extend(validate_annotation(k, mask, ann["bbox"]))
        if not mask.any():
            continue
        instances[index[ann["image_id"]]].append(
            InstanceRecord(int(ann["category_id"]), tuple(float(v) for v in ann["bbox"]), mask)
        )
    for msg in warn:
        log.warning(msg)
    categories = {int(c["id"]): c["name"] for c in doc["categories"]}
    return Dataset(images, instances, ids, files, categories, warn)


def scene_seed(seed: int, index: int) -> int:
    return seed * 1_000_003 + index


def generate_dataset(seed: int, count: int, **spec_kwargs) -> list:
    """``count`` scenes with per-scene seeds derived from ``seed``."""
    return [generate_scene(SceneSpec(seed=scene_seed(seed, i), **spec_kwargs)) for i in range(count)]
