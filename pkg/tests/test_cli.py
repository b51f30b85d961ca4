"""Command line behavior: exit codes, file outputs, determinism.

Everything drives main() directly with argv lists; no subprocesses, so
coverage and debuggers see straight through.
"""

import json

import numpy as np
import pytest

from curvpose.cli import EXIT_CONFIG, EXIT_NO_DETECTION, EXIT_NO_POSE, EXIT_OK, main
from curvpose.geometry import default_intrinsics
from curvpose.synth import (
    SceneDistribution,
    generate_scene,
    load_image,
    make_target_library,
    save_image,
)
from curvpose.synth.io import read_ground_truth, read_manifest
from curvpose.synth.scenes import scene_rng

K = default_intrinsics(640, 480)


@pytest.fixture(scope="module")
def target_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("targets")
    for tid, img in make_target_library(3).items():
        save_image(d / f"{tid}.png", img)
    return d


@pytest.fixture(scope="module")
def scene_files(tmp_path_factory, target_dir):
    d = tmp_path_factory.mktemp("scene")
    img, truth = generate_scene(
        "t01", load_image(target_dir / "t01.png"), K, SceneDistribution(), scene_rng(100, 1)
    )
    save_image(d / "scene.png", img)
    from curvpose.synth import write_ground_truth

    write_ground_truth(d / "truth.json", truth)
    return d / "scene.png", d / "truth.json", truth


class TestGenerate:
    def test_writes_dataset(self, target_dir, tmp_path):
        out = tmp_path / "ds"
        code = main([
            "generate", "--targets", str(target_dir), "--count", "2",
            "--out", str(out), "--seed", "9", "--size", "320x240",
        ])
        assert code == EXIT_OK
        m = read_manifest(out)
        assert m["count"] == 2 and m["seed"] == 9
        assert (out / "images" / "00001.png").exists()

    def test_determinism(self, target_dir, tmp_path, capsys):
        args = ["generate", "--targets", str(target_dir), "--count", "2", "--size", "320x240"]
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(args + ["--out", str(a), "--seed", "4"]) == EXIT_OK
        assert main(args + ["--out", str(b), "--seed", "4"]) == EXIT_OK
        img_a = (a / "images" / "00000.png").read_bytes()
        img_b = (b / "images" / "00000.png").read_bytes()
        assert img_a == img_b
        assert (a / "truth" / "00000.json").read_text() == (b / "truth" / "00000.json").read_text()

    def test_missing_target_dir(self, tmp_path):
        code = main([
            "generate", "--targets", str(tmp_path / "nope"), "--count", "1",
            "--out", str(tmp_path / "ds"), "--seed", "0",
        ])
        assert code == EXIT_CONFIG

    def test_bad_size(self, target_dir, tmp_path):
        code = main([
            "generate", "--targets", str(target_dir), "--count", "1",
            "--out", str(tmp_path / "ds"), "--seed", "0", "--size", "large",
        ])
        assert code == EXIT_CONFIG

    def test_panorama_backgrounds(self, target_dir, tmp_path):
        bdir = tmp_path / "bg"
        bdir.mkdir()
        rng = np.random.default_rng(0)
        save_image(bdir / "pano.png", rng.integers(0, 256, (64, 128, 3)).astype(np.uint8))
        code = main([
            "generate", "--targets", str(target_dir), "--count", "1",
            "--out", str(tmp_path / "ds"), "--seed", "2", "--size", "320x240",
            "--backgrounds", str(bdir),
        ])
        assert code == EXIT_OK


class TestRun:
    def test_pose_json(self, target_dir, scene_files, tmp_path, capsys):
        scene_png, truth_json, truth = scene_files
        out = tmp_path / "pose.json"
        code = main([
            "run", "--image", str(scene_png), "--targets", str(target_dir),
            "--diameter", str(truth.diameter), "--out", str(out),
        ])
        assert code == EXIT_OK
        data = json.loads(out.read_text())
        assert data["target_id"] == "t01"
        assert set(data) == {
            "target_id", "quaternion", "translation", "euler",
            "diameter", "inliers", "reprojection_error",
        }
        assert len(data["quaternion"]) == 4
        assert len(data["translation"]) == 3 and len(data["euler"]) == 3
        assert data["diameter"] == pytest.approx(truth.diameter)
        assert data["inliers"] >= 8
        # stdout carries the same payload
        assert json.loads(capsys.readouterr().out)["target_id"] == "t01"

    def test_gt_bbox_and_overlay(self, target_dir, scene_files, tmp_path):
        scene_png, truth_json, truth = scene_files
        overlay = tmp_path / "overlay.png"
        code = main([
            "run", "--image", str(scene_png), "--targets", str(target_dir),
            "--diameter", str(truth.diameter), "--gt-bbox", str(truth_json),
            "--out", str(tmp_path / "pose.json"), "--overlay", str(overlay),
        ])
        assert code == EXIT_OK
        over = load_image(overlay)
        base = load_image(scene_png)
        assert over.shape == base.shape
        assert not np.array_equal(over, base)

    def test_no_detection_exit_code(self, target_dir, tmp_path):
        blank = tmp_path / "blank.png"
        save_image(blank, np.full((480, 640, 3), 128, dtype=np.uint8))
        code = main([
            "run", "--image", str(blank), "--targets", str(target_dir),
            "--diameter", "1.5",
        ])
        assert code == EXIT_NO_DETECTION

    def test_no_pose_exit_code(self, target_dir, scene_files, tmp_path):
        scene_png, truth_json, truth = scene_files
        blank = tmp_path / "blank.png"
        save_image(blank, np.full((480, 640, 3), 128, dtype=np.uint8))
        code = main([
            "run", "--image", str(blank), "--targets", str(target_dir),
            "--diameter", "1.5", "--gt-bbox", str(truth_json),
        ])
        assert code == EXIT_NO_POSE

    def test_needs_model_or_diameter(self, target_dir, scene_files):
        scene_png, _, _ = scene_files
        code = main(["run", "--image", str(scene_png), "--targets", str(target_dir)])
        assert code == EXIT_CONFIG

    def test_intrinsics_file(self, target_dir, scene_files, tmp_path):
        scene_png, _, truth = scene_files
        intr = tmp_path / "intr.json"
        intr.write_text(json.dumps({
            "fx": K.fx, "fy": K.fy, "s": 0.0, "cx": K.cx, "cy": K.cy,
            "width": 640, "height": 480,
        }))
        code = main([
            "run", "--image", str(scene_png), "--targets", str(target_dir),
            "--diameter", str(truth.diameter), "--intrinsics", str(intr),
            "--out", str(tmp_path / "pose.json"),
        ])
        assert code == EXIT_OK


@pytest.fixture(scope="module")
def eval_dataset(target_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("eval") / "ds"
    assert main([
        "generate", "--targets", str(target_dir), "--count", "2",
        "--out", str(out), "--seed", "55",
    ]) == EXIT_OK
    return out


class TestEval:

    def test_gtall_eval_csv(self, target_dir, eval_dataset, tmp_path, capsys):
        out = tmp_path / "r.csv"
        code = main([
            "eval", "--dataset", str(eval_dataset), "--targets", str(target_dir),
            "--ablation", "gtall", "--out", str(out),
        ])
        assert code == EXIT_OK
        lines = out.read_text().strip().splitlines()
        assert lines[0].startswith("sample,success,iou,")
        assert len(lines) == 3
        assert "success rate" in capsys.readouterr().out

    def test_full_tier_needs_model(self, target_dir, eval_dataset, tmp_path):
        code = main([
            "eval", "--dataset", str(eval_dataset), "--targets", str(target_dir),
            "--ablation", "full", "--out", str(tmp_path / "r.csv"),
        ])
        assert code == EXIT_CONFIG

    def test_missing_dataset(self, target_dir, tmp_path):
        code = main([
            "eval", "--dataset", str(tmp_path / "nope"), "--targets", str(target_dir),
            "--ablation", "gtall", "--out", str(tmp_path / "r.csv"),
        ])
        assert code == EXIT_CONFIG


class TestInspect:
    def test_keypoint_dump(self, target_dir, tmp_path):
        out = tmp_path / "kp.json"
        code = main(["inspect", "--image", str(target_dir / "t00.png"), "--out", str(out)])
        assert code == EXIT_OK
        data = json.loads(out.read_text())
        assert data["count"] > 50
        assert data["count"] == len(data["keypoints"])
        assert data["descriptor_length"] == 128
        kp = data["keypoints"][0]
        assert set(kp) == {"x", "y", "scale", "orientation", "response", "octave"}

    def test_missing_image(self, tmp_path):
        assert main(["inspect", "--image", str(tmp_path / "no.png")]) == EXIT_CONFIG


class TestParsing:
    def test_no_command_is_config_error(self):
        assert main([]) == EXIT_CONFIG

    def test_unknown_command(self):
        assert main(["frobnicate"]) == EXIT_CONFIG

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == EXIT_OK
        assert "generate" in capsys.readouterr().out
