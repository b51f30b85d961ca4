"""End-to-end estimation: find which target is in the scene, where its
label is, how curved it is, and the full 6D pose.

The stages are deliberately separable so evaluation can swap ground truth
in for any prefix of the chain: detection can be bypassed with a known
box, and the curvature regression can be bypassed with a known diameter.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .curvnet import CurvNet, predict_curvature
from .features import SiftParams, detect_and_describe, match_descriptors
from .geometry import CameraIntrinsics, CylinderModel, RigidPose, label_points_to_cylinder
from .imaging import resize_bilinear, to_float
from .pose import Correspondence, PoseNotFoundError, RansacParams, ransac_pnp
from .synth.io import iter_dataset


class DetectionFailedError(RuntimeError):
    """No target collected enough feature votes in the scene."""


@dataclass(frozen=True)
class TargetFeatures:
    """Precomputed keypoints of one flat target image.

    uv holds the keypoint positions converted to label units, ready to be
    wrapped onto a cylinder of whatever diameter the scene calls for.
    """

    target_id: str
    image: np.ndarray
    label_width: float
    label_height: float
    keypoints: list
    descriptors: np.ndarray
    uv: np.ndarray


def build_target_features(
    target_id: str, image: np.ndarray, sift: SiftParams = SiftParams()
) -> TargetFeatures:
    th, tw = image.shape[:2]
    label_width = tw / th
    keypoints, descriptors = detect_and_describe(image, sift)
    uv = np.array([[kp.x / tw * label_width, kp.y / th * 1.0] for kp in keypoints])
    uv = uv.reshape(-1, 2)
    return TargetFeatures(
        target_id=target_id,
        image=image,
        label_width=label_width,
        label_height=1.0,
        keypoints=keypoints,
        descriptors=descriptors,
        uv=uv,
    )


def load_target_library(images: dict, sift: SiftParams = SiftParams()) -> list:
    """TargetFeatures for every (id, image) in library order."""
    return [build_target_features(tid, img, sift) for tid, img in images.items()]


@dataclass(frozen=True)
class Detection:
    target_id: str
    bbox: tuple
    votes: dict
    matches: list
    scene_keypoints: list


def _match_bbox(scene_keypoints, matches, width: int, height: int) -> tuple:
    xs = np.array([scene_keypoints[m.query].x for m in matches])
    ys = np.array([scene_keypoints[m.query].y for m in matches])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    mx, my = 0.10 * (x1 - x0), 0.10 * (y1 - y0)
    x0, x1 = max(x0 - mx, 0.0), min(x1 + mx, width - 1.0)
    y0, y1 = max(y0 - my, 0.0), min(y1 + my, height - 1.0)
    return (x0, y0, x1 - x0, y1 - y0)


def detect_and_classify(
    scene: np.ndarray,
    library: list,
    min_votes: int = 8,
    sift: SiftParams = SiftParams(),
    ratio: float = 0.8,
):
    """Vote for the pictured target by counting ratio-test survivors.

    Returns a Detection for the winner, or None when no target reaches
    min_votes.  Ties go to the earlier target in library order.  The
    default ratio here is stricter than the pose stage's: votes and the
    box hull are only as clean as the matches, and a loose ratio lets
    background keypoints pair with every target in the library.
    """
    scene_kps, scene_desc = detect_and_describe(scene, sift)
    votes = {}
    per_target = {}
    for tf in library:
        ms = match_descriptors(scene_desc, tf.descriptors, ratio) if len(scene_desc) else []
        votes[tf.target_id] = len(ms)
        per_target[tf.target_id] = ms
    if not votes:
        return None
    winner = max(votes, key=votes.get)
    if votes[winner] < min_votes:
        return None
    h, w = scene.shape[:2]
    return Detection(
        target_id=winner,
        bbox=_match_bbox(scene_kps, per_target[winner], w, h),
        votes=votes,
        matches=per_target[winner],
        scene_keypoints=scene_kps,
    )


def clamp_diameter(diameter: float, label_width: float) -> float:
    """Smallest geometrically valid diameter wins over a wild prediction."""
    floor = label_width / math.pi * (1 + 1e-9)
    return max(float(diameter), floor)


@dataclass(frozen=True)
class PoseResult:
    target_id: str
    pose: RigidPose
    diameter: float  # raw regression output (or the supplied value)
    diameter_used: float  # clamped value the 3D mapping used
    bbox: tuple
    num_matches: int
    num_inliers: int
    reprojection_error: float


def _expand_bbox(bbox, width, height, frac=0.12):
    x, y, w, h = bbox
    x0 = max(int(math.floor(x - frac * w)), 0)
    y0 = max(int(math.floor(y - frac * h)), 0)
    x1 = min(int(math.ceil(x + w + frac * w)) + 1, width)
    y1 = min(int(math.ceil(y + h + frac * h)) + 1, height)
    return x0, y0, x1, y1


def crop_bbox(image: np.ndarray, bbox) -> np.ndarray:
    """Integer crop of a float box, clipped to the image."""
    x, y, w, h = bbox
    h_img, w_img = image.shape[:2]
    x0 = max(int(math.floor(x)), 0)
    y0 = max(int(math.floor(y)), 0)
    x1 = min(int(math.ceil(x + w)) + 1, w_img)
    y1 = min(int(math.ceil(y + h)) + 1, h_img)
    if x1 - x0 < 2 or y1 - y0 < 2:
        raise ValueError(f"bbox {bbox} leaves no usable crop")
    return image[y0:y1, x0:x1]


def build_regression_set(root, input_size: int, indices=None):
    """Label-box crops and diameters from a dataset, net-ready.

    Crops get the exact resize that predict_curvature applies at inference
    time, so training and deployment see the same distribution.
    """
    xs, ys = [], []
    for _, image, truth in iter_dataset(root, indices):
        crop = to_float(crop_bbox(image, truth.bbox))
        xs.append(resize_bilinear(crop, input_size, input_size))
        ys.append(truth.diameter)
    if not xs:
        raise ValueError("dataset yielded no samples")
    return np.stack(xs), np.asarray(ys, dtype=float)


def _correspondences(target: TargetFeatures, scene_pixels: np.ndarray, matches, diameter_used):
    cyl = CylinderModel(
        diameter=diameter_used, label_width=target.label_width, label_height=target.label_height
    )
    uv = target.uv[[m.train for m in matches]]
    pts = label_points_to_cylinder(uv, cyl)
    return [Correspondence(p, px) for p, px in zip(pts, scene_pixels)]


def run_estimation(
    scene: np.ndarray,
    library: list,
    K: CameraIntrinsics,
    net: CurvNet | None = None,
    *,
    target_id: str | None = None,
    bbox: tuple | None = None,
    diameter: float | None = None,
    min_votes: int = 8,
    sift: SiftParams = SiftParams(),
    ratio: float = 0.95,
    detect_ratio: float = 0.8,
    ransac: RansacParams = RansacParams(),
    use_full_image: bool = False,
    rng: np.random.Generator | None = None,
) -> PoseResult:
    """Full estimation with optional ground-truth injection.

    With target_id/bbox/diameter all None this is the deployed path:
    detect, regress curvature from the detected box, match the flat
    target against the box crop, solve the pose.  Supplying bbox (and
    target_id) skips detection; supplying diameter skips the regression.
    Raises DetectionFailedError or PoseNotFoundError when a stage cannot
    proceed.
    """
    by_id = {tf.target_id: tf for tf in library}
    if rng is None:
        rng = np.random.default_rng(12345)

    if target_id is None:
        detection = detect_and_classify(scene, library, min_votes, sift, detect_ratio)
        if detection is None:
            raise DetectionFailedError("no target reached the vote threshold")
        target_id = detection.target_id
        bbox = detection.bbox if bbox is None else bbox
    if target_id not in by_id:
        raise KeyError(f"unknown target {target_id!r}")
    target = by_id[target_id]

    if diameter is None:
        if net is None:
            raise ValueError("need a curvature net when no diameter is given")
        if bbox is None:
            raise ValueError("need a bbox (or detection) to crop for the curvature net")
        raw = predict_curvature(net, crop_bbox(scene, bbox))
    else:
        raw = float(diameter)
    used = clamp_diameter(raw, target.label_width)

    # pose-stage matching runs on the (expanded) box crop so the flat
    # target competes only against what is actually near the label
    if bbox is not None and not use_full_image:
        h_img, w_img = scene.shape[:2]
        x0, y0, x1, y1 = _expand_bbox(bbox, w_img, h_img)
        region = scene[y0:y1, x0:x1]
        offset = np.array([x0, y0], dtype=float)
        if min(region.shape[:2]) < 16:
            region, offset = scene, np.zeros(2)
    else:
        region, offset = scene, np.zeros(2)
    kps, desc = detect_and_describe(region, sift)
    matches = match_descriptors(desc, target.descriptors, ratio)
    scene_pixels = np.array([[kps[m.query].x, kps[m.query].y] for m in matches]).reshape(-1, 2)
    scene_pixels = scene_pixels + offset

    if len(matches) < 6:
        raise PoseNotFoundError(f"only {len(matches)} matches for target {target_id}")
    corr = _correspondences(target, scene_pixels, matches, used)
    est = ransac_pnp(K, corr, ransac, rng)
    return PoseResult(
        target_id=target_id,
        pose=est.pose,
        diameter=raw,
        diameter_used=used,
        bbox=tuple(bbox) if bbox is not None else (0.0, 0.0, float(scene.shape[1] - 1), float(scene.shape[0] - 1)),
        num_matches=len(matches),
        num_inliers=est.num_inliers,
        reprojection_error=est.reprojection_error,
    )


def rotation_error(q1: np.ndarray, q2: np.ndarray) -> float:
    """Geodesic angle between two unit quaternions, radians.

    Same value as 2*arccos(|<q1,q2>|) but computed through atan2 of the
    chord lengths, which stays exact where acos loses digits (equal and
    opposite quaternions).
    """
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    for q in (q1, q2):
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            raise ValueError(f"quaternion is not unit length: {q}")
    if float(np.dot(q1, q2)) < 0.0:
        q2 = -q2
    return 4.0 * math.atan2(np.linalg.norm(q1 - q2), np.linalg.norm(q1 + q2))


def translation_error(t1: np.ndarray, t2: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(t1, dtype=float) - np.asarray(t2, dtype=float)))


def iou(box_a: tuple, box_b: tuple) -> float:
    """Intersection over union of (x, y, w, h) boxes."""
    ax, ay, aw, ah = box_a
    bx, by, bw, bh = box_b
    ix0, iy0 = max(ax, bx), max(ay, by)
    ix1, iy1 = min(ax + aw, bx + bw), min(ay + ah, by + bh)
    iw, ih = max(ix1 - ix0, 0.0), max(iy1 - iy0, 0.0)
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


@dataclass(frozen=True)
class EvalRecord:
    sample: int
    success: bool
    iou: float
    time_s: float
    diameter_err: float
    rotation_err_rad: float
    translation_err: float


TIERS = ("full", "gtbbox", "gtall")


def evaluate(
    root,
    library: list,
    net: CurvNet | None = None,
    tier: str = "full",
    indices=None,
    min_votes: int = 8,
    sift: SiftParams = SiftParams(),
    ransac: RansacParams = RansacParams(),
    seed: int = 0,
    log=None,
) -> list:
    """Score every requested dataset sample under one ablation tier.

    full: detection, regression, and pose all run.
    gtbbox: the true box and target id are given; regression and pose run.
    gtall: box, id, and diameter are given; only the pose stage runs.

    success means the detection stage produced the right target with a box
    overlapping the truth at IoU >= 0.5 (trivially true for the gt tiers);
    pose-stage failures leave the error columns as NaN instead.
    """
    if tier not in TIERS:
        raise ValueError(f"tier must be one of {TIERS}, got {tier!r}")
    records = []
    for i, image, truth in iter_dataset(root, indices):
        K = truth.intrinsics
        kwargs = {}
        if tier in ("gtbbox", "gtall"):
            kwargs["target_id"] = truth.target_id
            kwargs["bbox"] = truth.bbox
        if tier == "gtall":
            kwargs["diameter"] = truth.diameter
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))

        start = time.monotonic()
        result = None
        failure = None
        try:
            result = run_estimation(
                image, library, K, net,
                min_votes=min_votes, sift=sift, ransac=ransac, rng=rng, **kwargs,
            )
        except (DetectionFailedError, PoseNotFoundError) as e:
            failure = e
        elapsed = time.monotonic() - start

        nan = float("nan")
        if tier == "full":
            if result is not None:
                box_iou = iou(result.bbox, truth.bbox)
                success = result.target_id == truth.target_id and box_iou >= 0.5
            else:
                box_iou, success = 0.0, False
        else:
            box_iou, success = 1.0, True
        if result is not None:
            truth_pose = truth.pose()
            rec = EvalRecord(
                sample=i,
                success=success,
                iou=box_iou,
                time_s=elapsed,
                diameter_err=abs(result.diameter - truth.diameter),
                rotation_err_rad=rotation_error(result.pose.rotation, truth_pose.rotation),
                translation_err=translation_error(result.pose.translation, truth_pose.translation),
            )
        else:
            rec = EvalRecord(i, success, box_iou, elapsed, nan, nan, nan)
        records.append(rec)
        if log is not None:
            detail = f"{failure}" if failure is not None else (
                f"iou {rec.iou:.2f}, rot {rec.rotation_err_rad:.3f} rad"
            )
            log(f"sample {i}: {'ok' if success else 'FAIL'} ({detail})")
    return records


def write_eval_csv(path, records: list):
    import csv

    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            ["sample", "success", "iou", "time_s", "diameter_err", "rotation_err_rad", "translation_err"]
        )
        for r in records:
            w.writerow(
                [
                    r.sample,
                    int(r.success),
                    f"{r.iou:.6f}",
                    f"{r.time_s:.6f}",
                    f"{r.diameter_err:.6f}",
                    f"{r.rotation_err_rad:.6f}",
                    f"{r.translation_err:.6f}",
                ]
            )


def summarize(records: list) -> dict:
    """Aggregate metrics as mean/std pairs.

    Error columns are aggregated over the samples whose pose stage ran;
    iou and time cover every record.
    """
    n = len(records)
    if n == 0:
        return {"count": 0}
    ok = [r for r in records if r.success]
    posed = [r for r in records if not math.isnan(r.rotation_err_rad)]

    def stats(vals):
        vals = list(vals)
        if not vals:
            return float("nan"), float("nan")
        return float(np.mean(vals)), float(np.std(vals))

    out = {
        "count": n,
        "success_rate": len(ok) / n,
        "pose_rate": len(posed) / n,
    }
    for name, vals in [
        ("iou", (r.iou for r in records)),
        ("time_s", (r.time_s for r in records)),
        ("diameter_err", (r.diameter_err for r in posed)),
        ("rotation_err_rad", (r.rotation_err_rad for r in posed)),
        ("translation_err", (r.translation_err for r in posed)),
    ]:
        m, s = stats(vals)
        out[f"mean_{name}"] = m
        out[f"std_{name}"] = s
    return out
