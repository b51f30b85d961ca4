"""Scale-invariant keypoint detection, description, and matching."""

from .matching import Match, match_descriptors, match_knn, ratio_filter
from .sift import (
    Keypoint,
    ScaleSpace,
    SiftParams,
    build_scale_space,
    compute_descriptors,
    detect_and_describe,
    detect_keypoints,
)

__all__ = [
    "Keypoint",
    "Match",
    "ScaleSpace",
    "SiftParams",
    "build_scale_space",
    "compute_descriptors",
    "detect_and_describe",
    "detect_keypoints",
    "match_descriptors",
    "match_knn",
    "ratio_filter",
]
