"""Synthetic scenes, RLE masks and dataset files."""
from ..records import InstanceRecord
from .dataset_io import (Dataset, DatasetError, generate_dataset, read_dataset, read_ppm,
                         scene_seed, validate_annotation, write_dataset, write_ppm)
from .pcg32 import PCG32
from .rle import CorruptDataError, rle_area, rle_decode, rle_encode, rle_roundtrip
from .scenes import CATEGORIES, SHAPE_CLASSES, PlacementWarning, Scene, SceneSpec, generate_scene

__all__ = [
    "InstanceRecord", "Dataset", "DatasetError", "generate_dataset", "read_dataset", "read_ppm",
    "scene_seed", "validate_annotation", "write_dataset", "write_ppm", "PCG32", "CorruptDataError",
    "rle_area", "rle_decode", "rle_encode", "rle_roundtrip", "CATEGORIES", "SHAPE_CLASSES",
    "PlacementWarning", "Scene", "SceneSpec", "generate_scene",
]
