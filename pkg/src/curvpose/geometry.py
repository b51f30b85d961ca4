"""Camera model, rigid transforms, and the flat-label-to-cylinder mapping.

Conventions (fixed package-wide):

- Camera frame is right-handed: +x right, +y down in the image, +z forward.
  The camera sits at the origin and looks along +z, so a visible point has
  z > 0 and the projection formula needs no sign flips.
- Cylinder frame: the cylinder axis is z (up = +z), and the label is centered
  on the -y side of the barrel, so the label-center surface point is
  (0, -r, 0) and its outward normal is (0, -1, 0).
- All world-space lengths are in HoI units (label height = 1).
- Euler angles are intrinsic XYZ, radians.
- Quaternions are (w, x, y, z), unit norm, canonicalized so the first
  nonzero component is positive (deterministic serialization).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class InvalidModelError(ValueError):
    """Cylinder/label combination is geometrically impossible."""


class BehindCameraError(ValueError):
    """Attempted to project a point with z <= 0."""


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole projection parameters, all in pixels."""

    fx: float
    fy: float
    s: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width):
            raise ValueError(f"cx={self.cx} outside [0, {self.width})")
        if not (0 <= self.cy < self.height):
            raise ValueError(f"cy={self.cy} outside [0, {self.height})")

    def matrix(self) -> np.ndarray:
        """3x3 intrinsic matrix K."""
        return np.array(
            [
                [self.fx, self.s, self.cx],
                [0.0, self.fy, self.cy],
                [0.0, 0.0, 1.0],
            ]
        )

    def scaled(self, width: int, height: int) -> "CameraIntrinsics":
        """Intrinsics for the same camera at a different image resolution."""
        sx = width / self.width
        sy = height / self.height
        return CameraIntrinsics(
            fx=self.fx * sx,
            fy=self.fy * sy,
            s=self.s * sx,
            cx=self.cx * sx,
            cy=self.cy * sy,
            width=width,
            height=height,
        )


#: Intrinsics of the reference full-HD camera used for ground-truth records.
REFERENCE_INTRINSICS = CameraIntrinsics(
    fx=2670.0, fy=2250.0, s=0.0, cx=960.0, cy=540.0, width=1920, height=1080
)


def default_intrinsics(width: int = 640, height: int = 480) -> CameraIntrinsics:
    """Reference intrinsics scaled proportionally to the requested size."""
    return REFERENCE_INTRINSICS.scaled(width, height)


def _canonicalize_quaternion(q: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(q))
    if norm < 1e-12:
        raise ValueError("quaternion norm is zero")
    q = q / norm
    for c in q:
        if c != 0.0:
            return q if c > 0 else -q
    return q


@dataclass(frozen=True, eq=False)
class RigidPose:
    """Rigid transform: rotation (unit quaternion, wxyz) then translation.

    Maps points from the source frame into the destination frame as
    ``R @ p + t``.  Throughout the package the source is the cylinder frame
    and the destination the camera frame.
    """

    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=float).reshape(4)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "rotation", _canonicalize_quaternion(q))
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidPose":
        return RigidPose()

    def matrix(self) -> np.ndarray:
        """3x3 rotation matrix of the quaternion."""
        return quaternion_to_matrix(self.rotation)


@dataclass(frozen=True)
class CylinderModel:
    """Cylinder diameter and label extent, all in HoI units.

    With label height as the length unit, the diameter doubles as the
    curvature measure the regressor predicts.
    """

    diameter: float
    label_width: float
    label_height: float = 1.0

    def __post_init__(self):
        if self.diameter <= 0:
            raise InvalidModelError(f"diameter must be positive, got {self.diameter}")
        if self.label_width <= 0:
            raise InvalidModelError(f"label_width must be positive, got {self.label_width}")
        if self.label_height != 1.0:
            raise InvalidModelError(
                f"label_height defines the HoI unit and must be 1.0, got {self.label_height}"
            )
        if self.arc_angle > 2 * math.pi:
            raise InvalidModelError(
                f"label of width {self.label_width} self-overlaps on a cylinder of "
                f"diameter {self.diameter} (arc angle {self.arc_angle:.4f} > 2*pi)"
            )

    @property
    def radius(self) -> float:
        return self.diameter / 2.0

    @property
    def arc_angle(self) -> float:
        """Angle subtended by the label around the cylinder axis."""
        return self.label_width / (self.diameter / 2.0)


@dataclass(frozen=True)
class LabelPoint:
    """Position on the flat label: u from the left edge, v from the top, HoI units."""

    u: float
    v: float


def label_points_to_cylinder(uv: np.ndarray, cyl: CylinderModel) -> np.ndarray:
    """Map flat-label points (N, 2) onto the cylinder surface, returning (N, 3).

    The label is wrapped without stretch: u is arc length along the barrel,
    so the wrap angle is (u - W/2) / r and horizontal distances on the label
    are preserved as geodesic distances on the surface.
    """
    uv = np.asarray(uv, dtype=float)
    squeeze = uv.ndim == 1
    uv = np.atleast_2d(uv)
    u, v = uv[:, 0], uv[:, 1]
    if np.any(u < -1e-12) or np.any(u > cyl.label_width + 1e-12):
        raise ValueError("label point u outside [0, label_width]")
    if np.any(v < -1e-12) or np.any(v > cyl.label_height + 1e-12):
        raise ValueError("label point v outside [0, label_height]")
    r = cyl.radius
    theta = (u - cyl.label_width / 2.0) / r
    pts = np.stack(
        [r * np.sin(theta), -r * np.cos(theta), cyl.label_height / 2.0 - v], axis=1
    )
    return pts[0] if squeeze else pts


def label_to_cylinder(p: LabelPoint, cyl: CylinderModel) -> np.ndarray:
    """Map a single flat-label point onto the cylinder surface (3-vector)."""
    return label_points_to_cylinder(np.array([p.u, p.v]), cyl)


def project_points(K: CameraIntrinsics, pts: np.ndarray) -> np.ndarray:
    """Project camera-frame points (N, 3) to pixel coordinates (N, 2).

    Raises BehindCameraError if any point has z <= 0.
    """
    pts = np.asarray(pts, dtype=float)
    squeeze = pts.ndim == 1
    pts = np.atleast_2d(pts)
    z = pts[:, 2]
    if np.any(z <= 0):
        raise BehindCameraError("point behind camera (z <= 0)")
    px = (K.fx * pts[:, 0] + K.s * pts[:, 1]) / z + K.cx
    py = K.fy * pts[:, 1] / z + K.cy
    out = np.stack([px, py], axis=1)
    return out[0] if squeeze else out


def project_point(K: CameraIntrinsics, p_cam: np.ndarray) -> tuple[float, float]:
    """Project one camera-frame point to pixel coordinates."""
    px, py = project_points(K, np.asarray(p_cam, dtype=float))
    return float(px), float(py)


def quaternion_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a unit quaternion (w, x, y, z)."""
    w, x, y, z = np.asarray(q, dtype=float)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quaternion(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) of a rotation matrix, canonical sign."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        )
    elif R[1, 1] >= R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
        q = np.array(
            [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
        q = np.array(
            [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        )
    return _canonicalize_quaternion(q)


def quaternion_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a * b, both (w, x, y, z)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quaternion_conjugate(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([w, -x, -y, -z])


def rotation_vector_to_quaternion(omega: np.ndarray) -> np.ndarray:
    """Exponential map: rotation vector (axis * angle) to unit quaternion."""
    omega = np.asarray(omega, dtype=float)
    angle = float(np.linalg.norm(omega))
    if angle < 1e-12:
        # first-order expansion, exact enough below the threshold
        q = np.array([1.0, omega[0] / 2, omega[1] / 2, omega[2] / 2])
        return q / np.linalg.norm(q)
    axis = omega / angle
    half = angle / 2.0
    return np.concatenate([[math.cos(half)], math.sin(half) * axis])


def euler_to_quaternion(euler: np.ndarray) -> np.ndarray:
    """Intrinsic XYZ Euler angles (radians) to a canonical unit quaternion."""
    rx, ry, rz = np.asarray(euler, dtype=float)
    qx = np.array([math.cos(rx / 2), math.sin(rx / 2), 0.0, 0.0])
    qy = np.array([math.cos(ry / 2), 0.0, math.sin(ry / 2), 0.0])
    qz = np.array([math.cos(rz / 2), 0.0, 0.0, math.sin(rz / 2)])
    return _canonicalize_quaternion(quaternion_multiply(quaternion_multiply(qx, qy), qz))


def quaternion_to_euler(q: np.ndarray) -> np.ndarray:
    """Intrinsic XYZ Euler angles of a unit quaternion.

    At gimbal lock (|pitch| = pi/2) the roll/yaw split is degenerate; the
    canonical representative with yaw = 0 is returned.
    """
    R = quaternion_to_matrix(np.asarray(q, dtype=float))
    sy = float(np.clip(R[0, 2], -1.0, 1.0))
    ry = math.asin(sy)
    if abs(sy) < 1.0 - 1e-9:
        rx = math.atan2(-R[1, 2], R[2, 2])
        rz = math.atan2(-R[0, 1], R[0, 0])
    else:
        rx = math.atan2(R[1, 0], R[1, 1])
        rz = 0.0
    return np.array([rx, ry, rz])


def transform_point(pose: RigidPose, p: np.ndarray) -> np.ndarray:
    """Apply the rigid transform: R @ p + t."""
    return pose.matrix() @ np.asarray(p, dtype=float) + pose.translation


def transform_points(pose: RigidPose, pts: np.ndarray) -> np.ndarray:
    """Apply the rigid transform to points of shape (N, 3)."""
    pts = np.asarray(pts, dtype=float)
    return pts @ pose.matrix().T + pose.translation


def pose_inverse(pose: RigidPose) -> RigidPose:
    """Inverse transform: compose(pose, pose_inverse(pose)) is the identity."""
    q_inv = quaternion_conjugate(pose.rotation)
    R_inv = quaternion_to_matrix(q_inv)
    return RigidPose(rotation=q_inv, translation=-(R_inv @ pose.translation))


def pose_compose(a: RigidPose, b: RigidPose) -> RigidPose:
    """Composition: apply b first, then a."""
    q = quaternion_multiply(a.rotation, b.rotation)
    t = a.matrix() @ b.translation + a.translation
    return RigidPose(rotation=q, translation=t)
