"""Command line interface.

Five subcommands cover the whole workflow: generate a dataset, train the
curvature net on it, run the estimator on one image, evaluate a dataset,
and inspect an image's keypoints.  Exit codes: 0 on success, 2 when no
target is detected, 3 when no pose fits, 4 for configuration or I/O
problems.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .curvnet import ModelFormatError, TrainConfig, build_net, load_net, save_net, train, write_history_csv
from .features import detect_and_describe
from .geometry import (
    CameraIntrinsics,
    CylinderModel,
    default_intrinsics,
    label_points_to_cylinder,
    quaternion_to_euler,
    transform_points,
)
from .imaging import to_float
from .pipeline import (
    DetectionFailedError,
    PoseNotFoundError,
    build_regression_set,
    evaluate,
    load_target_library,
    run_estimation,
    summarize,
    write_eval_csv,
)
from .synth import (
    DatasetFormatError,
    SceneDistribution,
    generate_scenes,
    load_image,
    save_image,
    write_dataset,
)
from .synth.io import dataset_count, read_ground_truth, split_dataset

EXIT_OK = 0
EXIT_NO_DETECTION = 2
EXIT_NO_POSE = 3
EXIT_CONFIG = 4

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


class CliError(RuntimeError):
    """Anything wrong with arguments, files, or formats."""


def _load_target_dir(path) -> dict:
    p = Path(path)
    if not p.is_dir():
        raise CliError(f"target directory not found: {p}")
    files = sorted(f for f in p.iterdir() if f.suffix.lower() in _IMAGE_SUFFIXES)
    if not files:
        raise CliError(f"no target images in {p}")
    return {f.stem: load_image(f) for f in files}


def _parse_size(text: str) -> tuple:
    try:
        w, h = text.lower().split("x")
        w, h = int(w), int(h)
    except ValueError as e:
        raise CliError(f"size must look like 640x480, got {text!r}") from e
    if w < 32 or h < 32:
        raise CliError(f"size {w}x{h} is too small")
    return w, h


def _intrinsics_for(args, width: int, height: int) -> CameraIntrinsics:
    if getattr(args, "intrinsics", None) is None:
        return default_intrinsics(width, height)
    with open(args.intrinsics) as f:
        d = json.load(f)
    try:
        return CameraIntrinsics(
            fx=float(d["fx"]), fy=float(d["fy"]), s=float(d.get("s", 0.0)),
            cx=float(d["cx"]), cy=float(d["cy"]),
            width=int(d.get("width", width)), height=int(d.get("height", height)),
        )
    except KeyError as e:
        raise CliError(f"intrinsics file is missing {e}") from e


def _cmd_generate(args) -> int:
    targets = _load_target_dir(args.targets)
    w, h = _parse_size(args.size)
    K = default_intrinsics(w, h)
    dist = SceneDistribution()
    if args.backgrounds is not None:
        bdir = Path(args.backgrounds)
        if not bdir.is_dir():
            raise CliError(f"background directory not found: {bdir}")
        panos = tuple(
            to_float(load_image(f))
            for f in sorted(bdir.iterdir())
            if f.suffix.lower() in _IMAGE_SUFFIXES
        )
        if not panos:
            raise CliError(f"no background images in {bdir}")
        dist = SceneDistribution(panoramas=panos)
    scenes = generate_scenes(targets, K, dist, args.seed, args.count)
    manifest = write_dataset(
        args.out, scenes, extra_manifest={"seed": args.seed, "size": [w, h]}
    )
    print(f"wrote {manifest['count']} scenes to {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    net = build_net(args.variant, seed=args.seed)
    n = dataset_count(args.dataset)
    train_idx, val_idx = split_dataset(n)
    size = net.config.input_size
    tx, ty = build_regression_set(args.dataset, size, train_idx)
    vx, vy = build_regression_set(args.dataset, size, val_idx)
    cfg = TrainConfig(loss=args.loss, huber_delta=args.delta)
    history = train(net, tx, ty, vx, vy, cfg, seed=args.seed,
                    log=lambda m: print(m, file=sys.stderr))
    save_net(args.out, net)
    write_history_csv(str(args.out) + ".history.csv", history)
    best = min(history, key=lambda hh: hh.val_huber)
    print(f"trained {len(history)} epochs; best val huber {best.val_huber:.4f} "
          f"at epoch {best.epoch}; model saved to {args.out}")
    return EXIT_OK


def _wireframe_overlay(image: np.ndarray, result, library_entry, K) -> np.ndarray:
    """Copy of the image with the estimated label grid drawn on top."""
    from PIL import Image, ImageDraw

    cyl = CylinderModel(
        diameter=result.diameter_used,
        label_width=library_entry.label_width,
        label_height=library_entry.label_height,
    )
    out = Image.fromarray(image.copy())
    draw = ImageDraw.Draw(out)
    w = cyl.label_width
    lines = []
    for f in np.linspace(0.0, 1.0, 5):
        lines.append(np.stack([np.linspace(0, w, 48), np.full(48, f)], axis=1))
        lines.append(np.stack([np.full(48, f * w), np.linspace(0, 1, 48)], axis=1))
    for uv in lines:
        cam = transform_points(result.pose, label_points_to_cylinder(uv, cyl))
        vis = cam[:, 2] > 1e-6
        px = np.stack(
            [K.fx * cam[:, 0] / cam[:, 2] + K.s * cam[:, 1] / cam[:, 2] + K.cx,
             K.fy * cam[:, 1] / cam[:, 2] + K.cy],
            axis=1,
        )
        for i in range(len(uv) - 1):
            if vis[i] and vis[i + 1]:
                draw.line(
                    [tuple(px[i]), tuple(px[i + 1])], fill=(40, 255, 70), width=2
                )
    return np.asarray(out)


def _cmd_run(args) -> int:
    image = load_image(args.image)
    library = load_target_library(_load_target_dir(args.targets))
    net = load_net(args.model) if args.model is not None else None
    if net is None and args.diameter is None:
        raise CliError("need --model or --diameter")
    h, w = image.shape[:2]
    K = _intrinsics_for(args, w, h)

    kwargs = {}
    if args.gt_bbox is not None:
        truth = read_ground_truth(args.gt_bbox)
        kwargs["target_id"] = truth.target_id
        kwargs["bbox"] = truth.bbox
    if args.diameter is not None:
        kwargs["diameter"] = args.diameter

    result = run_estimation(image, library, K, net, **kwargs)
    pose = result.pose
    payload = {
        "target_id": result.target_id,
        "quaternion": [float(v) for v in pose.rotation],
        "translation": [float(v) for v in pose.translation],
        "euler": [float(v) for v in quaternion_to_euler(pose.rotation)],
        "diameter": result.diameter,
        "inliers": result.num_inliers,
        "reprojection_error": result.reprojection_error,
    }
    text = json.dumps(payload, indent=2)
    if args.out is not None:
        Path(args.out).write_text(text + "\n")
    print(text)
    if args.overlay is not None:
        entry = next(tf for tf in library if tf.target_id == result.target_id)
        save_image(args.overlay, _wireframe_overlay(image, result, entry, K))
    return EXIT_OK


def _cmd_eval(args) -> int:
    library = load_target_library(_load_target_dir(args.targets))
    net = load_net(args.model) if args.model is not None else None
    if args.ablation in ("full", "gtbbox") and net is None:
        raise CliError(f"--model is required for the {args.ablation} tier")
    records = evaluate(
        args.dataset, library, net, tier=args.ablation, seed=args.seed,
        log=lambda m: print(m, file=sys.stderr),
    )
    write_eval_csv(args.out, records)
    s = summarize(records)
    print(f"samples {s['count']}, success rate {s['success_rate']:.3f}")
    for name in ("iou", "time_s", "diameter_err", "rotation_err_rad", "translation_err"):
        m, sd = s[f"mean_{name}"], s[f"std_{name}"]
        if math.isnan(m):
            print(f"{name}: n/a")
        else:
            print(f"{name}: {m:.4f} +/- {sd:.4f}")
    return EXIT_OK


def _cmd_inspect(args) -> int:
    image = load_image(args.image)
    keypoints, descriptors = detect_and_describe(image)
    payload = {
        "count": len(keypoints),
        "descriptor_length": int(descriptors.shape[1]) if len(keypoints) else 0,
        "keypoints": [
            {
                "x": kp.x, "y": kp.y, "scale": kp.scale,
                "orientation": kp.orientation, "response": kp.response,
                "octave": kp.octave,
            }
            for kp in keypoints
        ],
    }
    text = json.dumps(payload, indent=2)
    if args.out is not None:
        Path(args.out).write_text(text + "\n")
        print(f"{len(keypoints)} keypoints written to {args.out}")
    else:
        print(text)
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curvpose",
        description="Pose and curvature estimation for labels on cylinders.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="render a synthetic dataset")
    g.add_argument("--targets", required=True, help="directory of flat target images")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--out", required=True, help="dataset directory to create")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--size", default="640x480", help="image size WxH")
    g.add_argument("--backgrounds", default=None, help="directory of panorama images")
    g.set_defaults(func=_cmd_generate)

    t = sub.add_parser("train", help="fit the curvature net on a dataset")
    t.add_argument("--dataset", required=True)
    t.add_argument("--variant", choices=("small", "large"), default="small")
    t.add_argument("--loss", choices=("huber", "mse"), default="huber")
    t.add_argument("--delta", type=float, default=0.4, help="huber threshold")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True, help="model file to write")
    t.set_defaults(func=_cmd_train)

    r = sub.add_parser("run", help="estimate pose and curvature on one image")
    r.add_argument("--image", required=True)
    r.add_argument("--targets", required=True)
    r.add_argument("--model", default=None)
    r.add_argument("--gt-bbox", default=None, help="ground-truth json to bypass detection")
    r.add_argument("--diameter", type=float, default=None, help="bypass the curvature net")
    r.add_argument("--intrinsics", default=None, help="json with fx, fy, s, cx, cy")
    r.add_argument("--out", default=None, help="write the pose json here")
    r.add_argument("--overlay", default=None, help="write a wireframe overlay png here")
    r.set_defaults(func=_cmd_run)

    e = sub.add_parser("eval", help="score a dataset")
    e.add_argument("--dataset", required=True)
    e.add_argument("--targets", required=True)
    e.add_argument("--model", default=None)
    e.add_argument("--ablation", choices=("full", "gtbbox", "gtall"), default="full")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True, help="csv file to write")
    e.set_defaults(func=_cmd_eval)

    i = sub.add_parser("inspect", help="dump an image's keypoints")
    i.add_argument("--image", required=True)
    i.add_argument("--out", default=None, help="json file to write")
    i.set_defaults(func=_cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 0 for --help and 2 for bad usage; bad usage is a
        # configuration problem under this tool's exit-code contract
        return EXIT_OK if e.code in (0, None) else EXIT_CONFIG
    try:
        return args.func(args)
    except DetectionFailedError as e:
        print(f"no detection: {e}", file=sys.stderr)
        return EXIT_NO_DETECTION
    except PoseNotFoundError as e:
        print(f"no pose: {e}", file=sys.stderr)
        return EXIT_NO_POSE
    except (CliError, DatasetFormatError, ModelFormatError, OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
