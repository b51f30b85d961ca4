"""Dataset layout on disk.

    dataset/
      manifest.json
      images/00000.png ...
      truth/00000.json ...

Readers stream one sample at a time so a thousand-image dataset never has
to fit in memory at once.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from ..geometry import CameraIntrinsics
from .scenes import GroundTruth

SCHEMA_VERSION = 1


class DatasetFormatError(ValueError):
    """Dataset directory is missing pieces or has inconsistent records."""


def save_image(path, image: np.ndarray):
    Image.fromarray(np.asarray(image)).save(path)


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def _truth_to_json(truth: GroundTruth) -> dict:
    K = truth.intrinsics
    x, y, w, h = truth.bbox
    return {
        "schema_version": SCHEMA_VERSION,
        "target_id": truth.target_id,
        "relative_position": [float(v) for v in truth.position],
        "relative_rotation_euler": [float(v) for v in truth.rotation_euler],
        "diameter": float(truth.diameter),
        "label_width": float(truth.label_width),
        "label_height": float(truth.label_height),
        "intrinsics": {
            "fx": K.fx,
            "fy": K.fy,
            "s": K.s,
            "cx": K.cx,
            "cy": K.cy,
            "width": K.width,
            "height": K.height,
        },
        "bbox": {"x": float(x), "y": float(y), "w": float(w), "h": float(h)},
    }


def _truth_from_json(data: dict) -> GroundTruth:
    try:
        ki = data["intrinsics"]
        bb = data["bbox"]
        return GroundTruth(
            target_id=data["target_id"],
            position=np.array(data["relative_position"], dtype=float),
            rotation_euler=np.array(data["relative_rotation_euler"], dtype=float),
            diameter=float(data["diameter"]),
            label_width=float(data["label_width"]),
            label_height=float(data["label_height"]),
            intrinsics=CameraIntrinsics(
                fx=float(ki["fx"]),
                fy=float(ki["fy"]),
                s=float(ki["s"]),
                cx=float(ki["cx"]),
                cy=float(ki["cy"]),
                width=int(ki["width"]),
                height=int(ki["height"]),
            ),
            bbox=(float(bb["x"]), float(bb["y"]), float(bb["w"]), float(bb["h"])),
        )
    except KeyError as e:
        raise DatasetFormatError(f"ground truth record missing key {e}") from e


def read_ground_truth(path) -> GroundTruth:
    with open(path) as f:
        return _truth_from_json(json.load(f))


def write_ground_truth(path, truth: GroundTruth):
    with open(path, "w") as f:
        json.dump(_truth_to_json(truth), f, indent=1, sort_keys=True)
        f.write("\n")


def write_dataset(root, scenes, extra_manifest: dict | None = None) -> dict:
    """Write (image, truth) pairs from an iterable; returns the manifest."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "truth").mkdir(parents=True, exist_ok=True)
    target_ids = []
    count = 0
    for i, (image, truth) in enumerate(scenes):
        save_image(root / "images" / f"{i:05d}.png", image)
        write_ground_truth(root / "truth" / f"{i:05d}.json", truth)
        if truth.target_id not in target_ids:
            target_ids.append(truth.target_id)
        count += 1
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "count": count,
        "target_ids": target_ids,
    }
    if extra_manifest:
        manifest.update(extra_manifest)
    with open(root / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1)
    return manifest


def read_manifest(root) -> dict:
    path = Path(root) / "manifest.json"
    if not path.exists():
        raise DatasetFormatError(f"no manifest.json under {root}")
    with open(path) as f:
        manifest = json.load(f)
    if "count" not in manifest:
        raise DatasetFormatError("manifest has no count")
    return manifest


def dataset_count(root) -> int:
    return int(read_manifest(root)["count"])


def iter_dataset(root, indices=None):
    """Yield (index, image, truth), loading one sample at a time."""
    root = Path(root)
    n = dataset_count(root)
    if indices is None:
        indices = range(n)
    for i in indices:
        if not 0 <= i < n:
            raise IndexError(f"sample {i} outside dataset of {n}")
        img_path = root / "images" / f"{i:05d}.png"
        truth_path = root / "truth" / f"{i:05d}.json"
        if not img_path.exists() or not truth_path.exists():
            raise DatasetFormatError(f"sample {i} files missing under {root}")
        yield i, load_image(img_path), read_ground_truth(truth_path)


def split_dataset(count: int) -> tuple:
    """First 90% of sample indices for training, the rest for validation."""
    if count < 10:
        raise ValueError(f"need at least 10 samples to split, got {count}")
    cut = int(count * 0.9)
    return list(range(cut)), list(range(cut, count))
