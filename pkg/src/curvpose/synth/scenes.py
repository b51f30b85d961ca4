"""Scene sampling: random but reproducible cylinder poses seen by a fixed
camera, with every sample guaranteed fully visible and front-facing.

Randomness discipline: scene i of a run draws everything from a generator
seeded with SeedSequence([master_seed, i]), so scenes are independent of
each other and of how many scenes the run asks for.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import (
    CameraIntrinsics,
    CylinderModel,
    RigidPose,
    euler_to_quaternion,
    label_points_to_cylinder,
    matrix_to_quaternion,
    project_points,
    quaternion_to_euler,
    quaternion_to_matrix,
    transform_points,
)
from .render import label_bbox, render_scene


class SceneGenerationError(RuntimeError):
    """Rejection sampling failed to find a visible pose."""


@dataclass(frozen=True)
class FlatBackground:
    color: tuple

    def field(self, K: CameraIntrinsics) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.color, dtype=float), (K.height, K.width, 3)).copy()


def _hash01(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """Lattice hash to [0, 1): deterministic across platforms (uint32 mix)."""
    with np.errstate(over="ignore"):
        h = ix.astype(np.uint32) * np.uint32(374761393)
        h += iy.astype(np.uint32) * np.uint32(668265263)
        h += np.uint32((seed * 2246822519) & 0xFFFFFFFF)
        h ^= h >> np.uint32(13)
        h *= np.uint32(1274126177)
        h ^= h >> np.uint32(16)
    return h.astype(np.float64) / float(2**32)


@dataclass(frozen=True)
class NoiseBackground:
    """Soft value noise over the pixel grid, independent per channel."""

    seed: int
    cell: int = 32
    low: float = 0.1
    high: float = 0.9

    def field(self, K: CameraIntrinsics) -> np.ndarray:
        ys, xs = np.mgrid[0 : K.height, 0 : K.width]
        gx = xs / self.cell
        gy = ys / self.cell
        x0 = np.floor(gx).astype(np.int64)
        y0 = np.floor(gy).astype(np.int64)
        fx = gx - x0
        fy = gy - y0
        fx = fx * fx * (3 - 2 * fx)
        fy = fy * fy * (3 - 2 * fy)
        chans = []
        for c in range(3):
            s = self.seed * 3 + c
            a = _hash01(x0, y0, s)
            b = _hash01(x0 + 1, y0, s)
            d = _hash01(x0, y0 + 1, s)
            e = _hash01(x0 + 1, y0 + 1, s)
            chans.append(a * (1 - fx) * (1 - fy) + b * fx * (1 - fy) + d * (1 - fx) * fy + e * fx * fy)
        out = np.stack(chans, axis=2)
        return self.low + out * (self.high - self.low)


@dataclass(frozen=True)
class PanoramaBackground:
    """Equirectangular panorama sampled along each pixel ray."""

    image: np.ndarray

    def field(self, K: CameraIntrinsics) -> np.ndarray:
        from ..imaging import to_float
        from .render import _ray_directions, _sample_bilinear

        pano = to_float(self.image)
        d = _ray_directions(K)
        az = np.arctan2(d[:, 0], d[:, 2])
        el = np.arctan2(-d[:, 1], np.hypot(d[:, 0], d[:, 2]))
        ph, pw = pano.shape[:2]
        x = (az / (2 * math.pi) + 0.5) * (pw - 1)
        y = (0.5 - el / math.pi) * (ph - 1)
        return _sample_bilinear(pano, x, y).reshape(K.height, K.width, 3)


@dataclass(frozen=True)
class SceneDistribution:
    """Ranges the sampler draws from; lengths in HoI units, angles radians."""

    diameter_factor: tuple = (1.0, 2.0)  # diameter as a multiple of label width
    distance: tuple = (2.4, 4.2)  # camera to label-centre surface point
    aim_margin: float = 0.3  # keep the aim point this fraction away from frame edges
    spin_max: float = 0.45
    tilt_max: float = 0.3
    roll_max: float = 0.3
    min_facing: float = 0.12  # lower bound on cos(angle to the view ray) at the boundary
    edge_margin: float = 8.0  # px: the whole label stays this far inside the frame
    cylinder_height: float = 1.3
    max_attempts: int = 100
    noise_background_prob: float = 0.5
    panoramas: tuple = ()  # float (H, W, 3) equirectangular images
    panorama_prob: float = 0.5  # chance of a panorama when any are supplied


@dataclass(frozen=True)
class GroundTruth:
    """Everything the evaluation needs to score one rendered scene."""

    target_id: str
    position: np.ndarray
    rotation_euler: np.ndarray
    diameter: float
    label_width: float
    label_height: float
    intrinsics: CameraIntrinsics
    bbox: tuple

    def pose(self) -> RigidPose:
        return RigidPose(
            rotation=euler_to_quaternion(self.rotation_euler), translation=self.position
        )

    def cylinder(self) -> CylinderModel:
        return CylinderModel(
            diameter=self.diameter,
            label_width=self.label_width,
            label_height=self.label_height,
        )


def _facing_rotation(view_dir: np.ndarray) -> np.ndarray:
    """Rotation whose label-centre normal points back along the view ray.

    Columns are the cylinder axes in camera coordinates: the cylinder y
    axis goes along the view direction (so the label centre at -y faces
    the camera) and the cylinder z axis (the barrel axis) leans toward
    the camera's up, which is -y in image convention.
    """
    y_w = view_dir / np.linalg.norm(view_dir)
    up = np.array([0.0, -1.0, 0.0])
    z_w = up - (up @ y_w) * y_w
    nz = np.linalg.norm(z_w)
    if nz < 1e-9:
        # looking straight up or down: any perpendicular works
        z_w = np.array([1.0, 0.0, 0.0]) - y_w[0] * y_w
        nz = np.linalg.norm(z_w)
    z_w = z_w / nz
    x_w = np.cross(y_w, z_w)
    return np.stack([x_w, y_w, z_w], axis=1)


def _boundary_uv(cyl: CylinderModel, per_edge: int = 16) -> np.ndarray:
    s = np.linspace(0.0, 1.0, per_edge)
    w, h = cyl.label_width, cyl.label_height
    return np.concatenate(
        [
            np.stack([s * w, np.zeros_like(s)], axis=1),
            np.stack([s * w, np.full_like(s, h)], axis=1),
            np.stack([np.zeros_like(s), s * h], axis=1),
            np.stack([np.full_like(s, w), s * h], axis=1),
        ]
    )


def label_fully_visible(
    cyl: CylinderModel,
    pose: RigidPose,
    K: CameraIntrinsics,
    min_facing: float = 0.12,
    edge_margin: float = 8.0,
) -> bool:
    """True when every label boundary point is in front of the camera,
    inside the frame with margin, and facing the camera beyond grazing."""
    uv = _boundary_uv(cyl)
    surf = label_points_to_cylinder(uv, cyl)
    pts = transform_points(pose, surf)
    if np.any(pts[:, 2] <= 0.05):
        return False
    # outward surface normal, rotated to camera frame
    theta = (uv[:, 0] - cyl.label_width / 2.0) / cyl.radius
    n_cyl = np.stack([np.sin(theta), -np.cos(theta), np.zeros_like(theta)], axis=1)
    n_cam = n_cyl @ pose.matrix().T
    view = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    if np.any(np.einsum("ij,ij->i", n_cam, view) > -min_facing):
        return False
    pix = project_points(K, pts)
    if np.any(pix[:, 0] < edge_margin) or np.any(pix[:, 0] > K.width - 1 - edge_margin):
        return False
    if np.any(pix[:, 1] < edge_margin) or np.any(pix[:, 1] > K.height - 1 - edge_margin):
        return False
    return True


def _sample_pose(
    cyl: CylinderModel, K: CameraIntrinsics, dist: SceneDistribution, rng: np.random.Generator
) -> RigidPose:
    px = rng.uniform(dist.aim_margin * K.width, (1 - dist.aim_margin) * K.width)
    py = rng.uniform(dist.aim_margin * K.height, (1 - dist.aim_margin) * K.height)
    yn = (py - K.cy) / K.fy
    xn = (px - K.cx - K.s * yn) / K.fx
    view = np.array([xn, yn, 1.0])
    view /= np.linalg.norm(view)

    tilt = rng.uniform(-dist.tilt_max, dist.tilt_max)
    roll = rng.uniform(-dist.roll_max, dist.roll_max)
    spin = rng.uniform(-dist.spin_max, dist.spin_max)
    R = _facing_rotation(view) @ quaternion_to_matrix(
        euler_to_quaternion(np.array([tilt, roll, spin]))
    )

    distance = rng.uniform(*dist.distance)
    surface_point = distance * view
    # the label-centre surface point sits at (0, -r, 0) in the cylinder frame
    translation = surface_point - R @ np.array([0.0, -cyl.radius, 0.0])
    return RigidPose(rotation=matrix_to_quaternion(R), translation=translation)


def scene_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, index]))


def generate_scene(
    target_id: str,
    target: np.ndarray,
    K: CameraIntrinsics,
    dist: SceneDistribution,
    rng: np.random.Generator,
):
    """One rendered scene plus its ground truth.

    Pose candidates are rejected until the whole label is visible; the
    background and all pose parameters come from `rng`.
    """
    th, tw = target.shape[:2]
    label_width = tw / th
    for _ in range(dist.max_attempts):
        diameter = rng.uniform(*dist.diameter_factor) * label_width
        cyl = CylinderModel(diameter=diameter, label_width=label_width)
        pose = _sample_pose(cyl, K, dist, rng)
        if label_fully_visible(cyl, pose, K, dist.min_facing, dist.edge_margin):
            break
    else:
        raise SceneGenerationError(
            f"no visible pose found in {dist.max_attempts} attempts for target {target_id}"
        )

    if dist.panoramas and rng.uniform() < dist.panorama_prob:
        background = PanoramaBackground(dist.panoramas[int(rng.integers(len(dist.panoramas)))])
    elif rng.uniform() < dist.noise_background_prob:
        background = NoiseBackground(
            seed=int(rng.integers(0, 2**31)), cell=int(rng.integers(16, 56))
        )
    else:
        background = FlatBackground(color=tuple(rng.uniform(0.08, 0.92, size=3)))

    image = render_scene(
        target, cyl, pose, K, background.field(K), cylinder_height=dist.cylinder_height
    )
    truth = GroundTruth(
        target_id=target_id,
        position=pose.translation.copy(),
        rotation_euler=quaternion_to_euler(pose.rotation),
        diameter=diameter,
        label_width=label_width,
        label_height=1.0,
        intrinsics=K,
        bbox=label_bbox(cyl, pose, K),
    )
    return image, truth


def generate_scenes(
    library: dict,
    K: CameraIntrinsics,
    dist: SceneDistribution,
    master_seed: int,
    count: int,
):
    """Yield (image, truth) pairs; targets cycle in library order."""
    ids = list(library.keys())
    if not ids:
        raise ValueError("target library is empty")
    for i in range(count):
        tid = ids[i % len(ids)]
        yield generate_scene(tid, library[tid], K, dist, scene_rng(master_seed, i))
