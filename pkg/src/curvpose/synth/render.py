"""Unlit ray-cast renderer for a label wrapped on a solid capped cylinder.

One ray per integer pixel coordinate, no antialiasing and no lighting: the
pixel takes the texture color where the ray first hits the labelled part of
the barrel, the bare surface color elsewhere on the cylinder, and the
background otherwise.  Because the cylinder is convex and solid, the first
hit is always the visible one, which keeps rendered occlusion consistent
with the front-facing test used during scene sampling.
"""

from __future__ import annotations

import numpy as np

from ..geometry import CameraIntrinsics, CylinderModel, RigidPose, project_points, transform_points
from ..imaging import to_float, to_uint8


class CameraInsideCylinderError(ValueError):
    """The sampled pose places the camera inside the cylinder volume."""


def _ray_directions(K: CameraIntrinsics) -> np.ndarray:
    """Unnormalized camera-frame ray directions for every pixel, (H*W, 3)."""
    xs = np.arange(K.width, dtype=float)
    ys = np.arange(K.height, dtype=float)
    py, px = np.meshgrid(ys, xs, indexing="ij")
    yn = (py - K.cy) / K.fy
    xn = (px - K.cx - K.s * yn) / K.fx
    return np.stack([xn.ravel(), yn.ravel(), np.ones(xn.size)], axis=1)


def _sample_bilinear(tex: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    h, w = tex.shape[:2]
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.minimum(x.astype(int), w - 2) if w > 1 else np.zeros_like(x, dtype=int)
    y0 = np.minimum(y.astype(int), h - 2) if h > 1 else np.zeros_like(y, dtype=int)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    tl = tex[y0, x0]
    tr = tex[y0, x0 + 1]
    bl = tex[y0 + 1, x0]
    br = tex[y0 + 1, x0 + 1]
    return tl * (1 - fx) * (1 - fy) + tr * fx * (1 - fy) + bl * (1 - fx) * fy + br * fx * fy


def render_scene(
    target: np.ndarray,
    cyl: CylinderModel,
    pose: RigidPose,
    K: CameraIntrinsics,
    background: np.ndarray,
    cylinder_height: float = 1.3,
    surface_color=(0.72, 0.72, 0.70),
    with_mask: bool = False,
):
    """Render the scene to (H, W, 3) uint8.

    background is a precomputed (H, W, 3) float field in [0, 1].  With
    with_mask=True also returns a boolean (H, W) mask of pixels whose first
    hit lies on the labelled part of the barrel.
    """
    tex = to_float(target)
    bg = np.asarray(background, dtype=float)
    if bg.shape != (K.height, K.width, 3):
        raise ValueError(f"background must be ({K.height}, {K.width}, 3), got {bg.shape}")
    if cylinder_height < cyl.label_height:
        raise ValueError("cylinder shorter than its label")

    R = pose.matrix()
    c0 = pose.translation
    axis = R[:, 2]
    r = cyl.radius
    half_h = cylinder_height / 2.0

    # camera at the origin: reject poses that swallow it
    cam_axial = float(-c0 @ axis)
    cam_radial2 = float(np.sum((-c0 - cam_axial * axis) ** 2))
    if cam_radial2 < r * r and abs(cam_axial) < half_h:
        raise CameraInsideCylinderError("camera origin lies inside the cylinder")

    d = _ray_directions(K)
    n_pix = len(d)

    # barrel: |(t d - c0) - (((t d - c0) . a) a)|^2 = r^2
    d_a = d @ axis
    m = d - d_a[:, None] * axis
    w_vec = c0 - float(c0 @ axis) * axis
    A = np.einsum("ij,ij->i", m, m)
    B = -2.0 * (m @ w_vec)
    C = float(w_vec @ w_vec) - r * r
    disc = B * B - 4.0 * A * C
    hit_body = (disc > 0) & (A > 1e-14)
    sq = np.sqrt(np.where(hit_body, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(hit_body, (-B - sq) / (2 * A), np.inf)
        t2 = np.where(hit_body, (-B + sq) / (2 * A), np.inf)

    def _axial(t):
        return t * d_a - float(c0 @ axis)

    def _valid_body(t):
        return hit_body & (t > 1e-9) & (np.abs(_axial(t)) <= half_h)

    t_body = np.where(_valid_body(t1), t1, np.where(_valid_body(t2), t2, np.inf))

    # caps: rays meeting the two bounding disks
    t_cap = np.full(n_pix, np.inf)
    for sign in (-1.0, 1.0):
        plane_off = float(c0 @ axis) + sign * half_h
        with np.errstate(divide="ignore", invalid="ignore"):
            tc = plane_off / d_a
        pt = tc[:, None] * d - c0 - sign * half_h * axis
        ok = (np.abs(d_a) > 1e-14) & (tc > 1e-9) & (np.einsum("ij,ij->i", pt, pt) <= r * r)
        t_cap = np.where(ok & (tc < t_cap), tc, t_cap)

    t_hit = np.minimum(t_body, t_cap)
    hit = np.isfinite(t_hit)
    on_body = hit & (t_body <= t_cap)

    out = bg.reshape(n_pix, 3).copy()
    out[hit] = surface_color

    label_mask = np.zeros(n_pix, dtype=bool)
    idx = np.flatnonzero(on_body)
    if idx.size:
        p_cam = t_body[idx, None] * d[idx]
        p_cyl = (p_cam - c0) @ R
        theta = np.arctan2(p_cyl[:, 0], -p_cyl[:, 1])
        u = cyl.label_width / 2.0 + theta * r
        v = cyl.label_height / 2.0 - p_cyl[:, 2]
        on_label = (u >= 0) & (u <= cyl.label_width) & (v >= 0) & (v <= cyl.label_height)
        sel = idx[on_label]
        if sel.size:
            th, tw = tex.shape[:2]
            tx = u[on_label] / cyl.label_width * tw - 0.5
            ty = v[on_label] / cyl.label_height * th - 0.5
            out[sel] = _sample_bilinear(tex, tx, ty)
            label_mask[sel] = True

    img = to_uint8(out.reshape(K.height, K.width, 3))
    if with_mask:
        return img, label_mask.reshape(K.height, K.width)
    return img


def label_bbox(
    cyl: CylinderModel, pose: RigidPose, K: CameraIntrinsics, samples_per_edge: int = 64
) -> tuple:
    """Tight axis-aligned box (x, y, w, h) of the projected label boundary.

    The box is clipped to the image; the boundary is sampled densely enough
    that the curved edges cannot bulge past it by more than a fraction of a
    pixel at typical scales.
    """
    from ..geometry import label_points_to_cylinder

    s = np.linspace(0.0, 1.0, samples_per_edge)
    w, h = cyl.label_width, cyl.label_height
    edges = np.concatenate(
        [
            np.stack([s * w, np.zeros_like(s)], axis=1),
            np.stack([s * w, np.full_like(s, h)], axis=1),
            np.stack([np.zeros_like(s), s * h], axis=1),
            np.stack([np.full_like(s, w), s * h], axis=1),
        ]
    )
    pts = transform_points(pose, label_points_to_cylinder(edges, cyl))
    pix = project_points(K, pts)
    x0 = max(float(pix[:, 0].min()), 0.0)
    y0 = max(float(pix[:, 1].min()), 0.0)
    x1 = min(float(pix[:, 0].max()), float(K.width - 1))
    y1 = min(float(pix[:, 1].max()), float(K.height - 1))
    return (x0, y0, max(x1 - x0, 0.0), max(y1 - y0, 0.0))
