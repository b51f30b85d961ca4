"""Pose recovery from 2D-3D correspondences.

Three stages, each usable on its own:

- pnp_dlt: direct linear transform on 6+ correspondences, with Hartley
  normalization for conditioning, followed by orthogonalization of the
  rotation block.
- refine_pose_lm: Levenberg-Marquardt on the reprojection error over a
  6-vector tangent (rotation vector delta, translation delta).  Steps are
  accepted only when they lower the cost, so the result is never worse
  than the input pose.
- ransac_pnp: robust loop over 6-point minimal samples with an adaptive
  iteration count, then a final fit and refinement on the inlier set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    CameraIntrinsics,
    RigidPose,
    matrix_to_quaternion,
    quaternion_multiply,
    rotation_vector_to_quaternion,
    transform_points,
)


class DegenerateGeometryError(ValueError):
    """Correspondence set does not determine a projection matrix."""


class PoseNotFoundError(RuntimeError):
    """No pose with enough inlier support exists for these matches."""


@dataclass(frozen=True)
class Correspondence:
    """A 3D point in the object frame paired with its observed pixel."""

    point: np.ndarray
    pixel: np.ndarray


@dataclass(frozen=True)
class RansacParams:
    threshold: float = 2.0
    confidence: float = 0.99
    max_iterations: int = 1000
    min_inliers: int | None = None  # default: max(8, 15% of the matches)
    refine: bool = True


@dataclass(frozen=True)
class PoseEstimate:
    pose: RigidPose
    inliers: np.ndarray
    reprojection_error: float

    @property
    def num_inliers(self) -> int:
        return int(len(self.inliers))


def _as_arrays(correspondences) -> tuple:
    pts = np.array([np.asarray(c.point, dtype=float) for c in correspondences])
    pix = np.array([np.asarray(c.pixel, dtype=float) for c in correspondences])
    return pts, pix


def _normalized_camera_coords(K: CameraIntrinsics, pixels: np.ndarray) -> np.ndarray:
    y = (pixels[:, 1] - K.cy) / K.fy
    x = (pixels[:, 0] - K.cx - K.s * y) / K.fx
    return np.stack([x, y], axis=1)


def _hartley_2d(pts: np.ndarray):
    c = pts.mean(axis=0)
    d = np.linalg.norm(pts - c, axis=1).mean()
    if d < 1e-12:
        raise DegenerateGeometryError("2D points are coincident")
    s = math.sqrt(2) / d
    T = np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1]])
    return (pts - c) * s, T

def _hartley_3d(pts: np.ndarray):
    c = pts.mean(axis=0)
    d = np.linalg.norm(pts - c, axis=1).mean()
    if d < 1e-12:
        raise DegenerateGeometryError("3D points are coincident")
    s = math.sqrt(3) / d
    T = np.eye(4)
    T[:3, :3] *= s
    T[:3, 3] = -s * c
    return (pts - c) * s, T


def _projection_dlt(K: CameraIntrinsics, points: np.ndarray, pixels: np.ndarray) -> np.ndarray:
    """Linear fit of a 3x4 projection in normalized camera coordinates.

    The result maps homogeneous object points to normalized image rays and
    is only defined up to scale; the sign is fixed so the 3x3 block has
    positive determinant.  Raises DegenerateGeometryError when the system
    does not isolate a single solution.
    """
    n = len(points)
    if n < 6:
        raise DegenerateGeometryError(f"need at least 6 correspondences, got {n}")

    xy = _normalized_camera_coords(K, pixels)
    xy_n, T2 = _hartley_2d(xy)
    pts_n, T3 = _hartley_3d(points)

    A = np.zeros((2 * n, 12))
    X = np.concatenate([pts_n, np.ones((n, 1))], axis=1)
    A[0::2, 0:4] = X
    A[0::2, 8:12] = -xy_n[:, [0]] * X
    A[1::2, 4:8] = X
    A[1::2, 8:12] = -xy_n[:, [1]] * X

    _, s, Vt = np.linalg.svd(A)
    # a second near-zero singular value means a solution family (coplanar
    # or otherwise degenerate sample)
    if s[0] < 1e-12 or s[-2] / s[0] < 1e-9:
        raise DegenerateGeometryError("correspondences are degenerate")
    M = Vt[-1].reshape(3, 4)
    M = np.linalg.inv(T2) @ M @ T3

    if np.linalg.det(M[:, :3]) < 0:
        M = -M
    return M


def _pose_from_projection(M: np.ndarray) -> RigidPose:
    """Nearest rigid pose to a normalized projection matrix."""
    U, sv, Vt = np.linalg.svd(M[:, :3])
    if sv[-1] / sv[0] < 1e-9:
        raise DegenerateGeometryError("rotation block is singular")
    R = U @ Vt
    scale = sv.mean()
    t = M[:, 3] / scale
    return RigidPose(rotation=matrix_to_quaternion(R), translation=t)


def _projection_pixel_errors(
    K: CameraIntrinsics, M: np.ndarray, points: np.ndarray, pixels: np.ndarray
) -> np.ndarray:
    """Per-point pixel distance under a raw projection matrix.

    Points that land behind the camera get infinite error.
    """
    Xh = np.concatenate([points, np.ones((len(points), 1))], axis=1)
    cam = Xh @ M.T
    z = cam[:, 2]
    ok = z > 1e-9
    zs = np.where(ok, z, 1.0)
    px = (K.fx * cam[:, 0] + K.s * cam[:, 1]) / zs + K.cx
    py = K.fy * cam[:, 1] / zs + K.cy
    d = np.hypot(px - pixels[:, 0], py - pixels[:, 1])
    return np.where(ok, d, np.inf)


def pnp_dlt(K: CameraIntrinsics, points: np.ndarray, pixels: np.ndarray) -> RigidPose:
    """Pose from 6 or more correspondences by the direct linear transform.

    Points must not be coplanar (the cylinder wrap guarantees that for a
    curved label).  Raises DegenerateGeometryError when the system does not
    isolate a single solution.  Forcing the linear fit onto the rigid
    manifold is only trustworthy with a well-spread point set; minimal
    samples should be handled through ransac_pnp.
    """
    points = np.asarray(points, dtype=float)
    pixels = np.asarray(pixels, dtype=float)
    M = _projection_dlt(K, points, pixels)
    return _pose_from_projection(M)


def reprojection_errors(
    K: CameraIntrinsics, pose: RigidPose, points: np.ndarray, pixels: np.ndarray
) -> np.ndarray:
    """Per-point pixel distance between projection and observation.

    Points that land behind the camera get infinite error.
    """
    cam = transform_points(pose, np.asarray(points, dtype=float))
    z = cam[:, 2]
    ok = z > 1e-9
    zs = np.where(ok, z, 1.0)
    px = (K.fx * cam[:, 0] + K.s * cam[:, 1]) / zs + K.cx
    py = K.fy * cam[:, 1] / zs + K.cy
    d = np.hypot(px - pixels[:, 0], py - pixels[:, 1])
    return np.where(ok, d, np.inf)


def pose_residuals(
    K: CameraIntrinsics, pose: RigidPose, points: np.ndarray, pixels: np.ndarray
) -> np.ndarray:
    """Stacked (2n,) reprojection residuals (u then v per point).

    Behind-camera points contribute a large constant so that a descent step
    never walks through the camera plane.
    """
    cam = transform_points(pose, np.asarray(points, dtype=float))
    z = cam[:, 2]
    ok = z > 1e-9
    zs = np.where(ok, z, 1.0)
    px = (K.fx * cam[:, 0] + K.s * cam[:, 1]) / zs + K.cx
    py = K.fy * cam[:, 1] / zs + K.cy
    r = np.stack([px - pixels[:, 0], py - pixels[:, 1]], axis=1)
    r[~ok] = 1e6
    return r.ravel()


def pose_jacobian(K: CameraIntrinsics, pose: RigidPose, points: np.ndarray) -> np.ndarray:
    """Jacobian of pose_residuals w.r.t. the 6-vector (rotation delta, dt).

    The rotation delta is a left-multiplied rotation vector: the perturbed
    pose maps p to R(delta) R p + t + dt.
    """
    points = np.asarray(points, dtype=float)
    cam = transform_points(pose, points)
    n = len(points)
    J = np.zeros((2 * n, 6))
    x, y, z = cam[:, 0], cam[:, 1], cam[:, 2]
    ok = z > 1e-9
    zs = np.where(ok, z, 1.0)

    # d(pixel)/d(camera point)
    du = np.stack([K.fx / zs, np.full(n, K.s) / zs, -(K.fx * x + K.s * y) / zs**2], axis=1)
    dv = np.stack([np.zeros(n), K.fy / zs, -K.fy * y / zs**2], axis=1)
    du[~ok] = 0.0
    dv[~ok] = 0.0

    # d(camera point)/d(rotation delta) = -[R p]x, and identity for dt
    rp = cam - pose.translation
    dc_dw = np.zeros((n, 3, 3))
    dc_dw[:, 0, 1] = rp[:, 2]
    dc_dw[:, 0, 2] = -rp[:, 1]
    dc_dw[:, 1, 0] = -rp[:, 2]
    dc_dw[:, 1, 2] = rp[:, 0]
    dc_dw[:, 2, 0] = rp[:, 1]
    dc_dw[:, 2, 1] = -rp[:, 0]

    J[0::2, :3] = np.einsum("nc,ncw->nw", du, dc_dw)
    J[1::2, :3] = np.einsum("nc,ncw->nw", dv, dc_dw)
    J[0::2, 3:] = du
    J[1::2, 3:] = dv
    return J


def _apply_step(pose: RigidPose, delta: np.ndarray) -> RigidPose:
    q = quaternion_multiply(rotation_vector_to_quaternion(delta[:3]), pose.rotation)
    return RigidPose(rotation=q, translation=pose.translation + delta[3:])


def refine_pose_lm(
    K: CameraIntrinsics,
    points: np.ndarray,
    pixels: np.ndarray,
    pose: RigidPose,
    max_iterations: int = 25,
) -> RigidPose:
    """Levenberg-Marquardt refinement of a pose against reprojection error."""
    points = np.asarray(points, dtype=float)
    pixels = np.asarray(pixels, dtype=float)
    cur = pose
    r = pose_residuals(K, cur, points, pixels)
    cost = float(r @ r)
    mu = 1e-3

    for _ in range(max_iterations):
        J = pose_jacobian(K, cur, points)
        g = J.T @ r
        H = J.T @ J
        stepped = False
        for _ in range(8):
            damped = H + mu * np.diag(np.maximum(np.diag(H), 1e-12))
            try:
                delta = np.linalg.solve(damped, -g)
            except np.linalg.LinAlgError:
                mu *= 10
                continue
            trial = _apply_step(cur, delta)
            r_t = pose_residuals(K, trial, points, pixels)
            c_t = float(r_t @ r_t)
            if c_t < cost:
                cur, r, cost = trial, r_t, c_t
                mu = max(mu * 0.3, 1e-12)
                stepped = True
                break
            mu *= 10
        if not stepped or np.linalg.norm(delta) < 1e-12:
            break
    return cur


def ransac_pnp(
    K: CameraIntrinsics,
    correspondences,
    params: RansacParams = RansacParams(),
    rng: np.random.Generator | None = None,
) -> PoseEstimate:
    """Robust pose estimation over noisy matches with gross outliers.

    Minimal 6-point samples give a raw projection matrix that is scored by
    inlier count at the pixel threshold; the iteration budget shrinks
    adaptively as better hypotheses appear.  Hypotheses are scored before
    snapping to the rigid manifold, because on a shallow label patch the
    linear fit from six points is fine as a projection but far from any
    rotation; the rigid extraction happens only on the winning inlier set,
    which is wide enough to condition it, followed by refine_pose_lm.
    Raises PoseNotFoundError when no hypothesis reaches the required inlier
    support.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    points, pixels = _as_arrays(correspondences)
    n = len(points)
    if n < 6:
        raise PoseNotFoundError(f"need at least 6 correspondences, got {n}")
    min_inliers = params.min_inliers
    if min_inliers is None:
        min_inliers = max(8, math.ceil(0.15 * n))

    best_mask = None
    best_M = None
    best_count = 0
    best_err = np.inf
    budget = params.max_iterations
    i = 0
    while i < budget:
        i += 1
        sample = rng.choice(n, size=6, replace=False)
        try:
            M = _projection_dlt(K, points[sample], pixels[sample])
        except DegenerateGeometryError:
            continue
        errors = _projection_pixel_errors(K, M, points, pixels)
        mask = errors < params.threshold
        count = int(mask.sum())
        if count > best_count or (
            count == best_count and count > 0 and float(errors[mask].sum()) < best_err
        ):
            best_mask = mask
            best_M = M
            best_count = count
            best_err = float(errors[mask].sum())
            w = count / n
            if w >= 1.0:
                break
            denom = math.log1p(-min(w**6, 1 - 1e-12))
            needed = math.log(max(1 - params.confidence, 1e-12)) / denom
            budget = min(params.max_iterations, max(i, int(math.ceil(needed))))

    if best_mask is None or best_count < min_inliers:
        raise PoseNotFoundError(
            f"best hypothesis has {best_count} inliers, need {min_inliers}"
        )

    idx = np.flatnonzero(best_mask)
    pose = None
    try:
        candidate = pnp_dlt(K, points[idx], pixels[idx])
        errors = reprojection_errors(K, candidate, points, pixels)
        if np.all(errors[idx] < 2.0 * params.threshold):
            pose = candidate
    except DegenerateGeometryError:
        pass
    if pose is None:
        # the full-set refit lost the consensus; fall back to the winning
        # hypothesis itself, squeezed onto the rigid manifold, and let the
        # refinement pull it back toward the inliers
        pose = _pose_from_projection(best_M)
    if params.refine:
        pose = refine_pose_lm(K, points[idx], pixels[idx], pose)
    errors = reprojection_errors(K, pose, points, pixels)
    final_mask = errors < params.threshold
    if int(final_mask.sum()) >= min_inliers:
        idx = np.flatnonzero(final_mask)
    rms = float(np.sqrt(np.mean(errors[idx] ** 2)))
    return PoseEstimate(pose=pose, inliers=idx, reprojection_error=rms)
