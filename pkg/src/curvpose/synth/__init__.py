"""Synthetic scene generation: textured targets wrapped on cylinders,
rendered over varied backgrounds with exact ground truth."""

from .io import (
    DatasetFormatError,
    dataset_count,
    iter_dataset,
    load_image,
    read_ground_truth,
    write_ground_truth,
    read_manifest,
    save_image,
    split_dataset,
    write_dataset,
)
from .render import CameraInsideCylinderError, label_bbox, render_scene
from .scenes import (
    FlatBackground,
    GroundTruth,
    NoiseBackground,
    PanoramaBackground,
    SceneDistribution,
    SceneGenerationError,
    generate_scene,
    generate_scenes,
)
from .targets import make_target_library, procedural_target

__all__ = [
    "CameraInsideCylinderError",
    "DatasetFormatError",
    "FlatBackground",
    "GroundTruth",
    "NoiseBackground",
    "PanoramaBackground",
    "SceneDistribution",
    "SceneGenerationError",
    "dataset_count",
    "generate_scene",
    "generate_scenes",
    "iter_dataset",
    "label_bbox",
    "load_image",
    "make_target_library",
    "procedural_target",
    "read_ground_truth",
    "write_ground_truth",
    "read_manifest",
    "render_scene",
    "save_image",
    "split_dataset",
    "write_dataset",
]
