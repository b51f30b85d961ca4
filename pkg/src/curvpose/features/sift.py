"""Scale-invariant feature transform, written against numpy and scipy.ndimage.

The scale space starts at the original image resolution (no initial
upsampling), with sigma0 = 1.6 and 3 scales per octave, so an octave holds
6 Gaussian levels and 5 difference-of-Gaussian levels.  Level s of octave o
carries absolute blur sigma0 * 2^(o + s/3), and each octave is built by
decimating the 2x-blur level of the previous one with [::2, ::2].

Keypoints are 3x3x3 DoG extrema refined to subpixel position by a quadratic
fit, filtered by interpolated contrast (images live in [0, 1]) and by the
Hessian edge ratio.  Orientations come from a smoothed 36-bin gradient
histogram under a 1.5 sigma Gaussian window; a histogram whose peak is
below 1.2x its mean is treated as direction-free and yields exactly one
orientation.
Descriptors are the usual 4x4 spatial grid of 8-bin orientation histograms
with trilinear interpolation, clamped at 0.2 and renormalized, kept as
floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ..imaging import to_gray


@dataclass(frozen=True)
class SiftParams:
    num_scales: int = 3
    sigma0: float = 1.6
    assumed_blur: float = 0.5
    contrast_threshold: float = 0.03
    edge_ratio: float = 10.0
    border: int = 5
    num_octaves: int | None = None
    peak_ratio: float = 0.8
    isotropy_ratio: float = 1.2


@dataclass(frozen=True)
class Keypoint:
    """Detected feature in original-image pixel coordinates.

    scale is the absolute blur sigma at detection; orientation is the
    dominant gradient direction in radians, in [0, 2 pi).
    """

    x: float
    y: float
    scale: float
    orientation: float
    response: float
    octave: int
    level: float

    @property
    def sigma_octave(self) -> float:
        """Scale expressed in the keypoint's own octave coordinates."""
        return self.scale / (1 << self.octave)


@dataclass
class ScaleSpace:
    """Gaussian and DoG pyramids plus lazily cached gradient grids."""

    gaussians: list
    dogs: list
    params: SiftParams
    shape: tuple
    _grad_cache: dict = field(default_factory=dict, repr=False)

    def num_octaves(self) -> int:
        return len(self.gaussians)

    def gradients(self, octave: int, level: int):
        """(magnitude, angle) of the Gaussian level, centered differences."""
        key = (octave, level)
        if key not in self._grad_cache:
            img = self.gaussians[octave][level]
            dx = np.zeros_like(img)
            dy = np.zeros_like(img)
            dx[:, 1:-1] = (img[:, 2:] - img[:, :-2]) / 2.0
            dy[1:-1, :] = (img[2:, :] - img[:-2, :]) / 2.0
            self._grad_cache[key] = (np.hypot(dx, dy), np.arctan2(dy, dx))
        return self._grad_cache[key]


def _blur(img: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return img.copy()
    return ndimage.gaussian_filter(img, sigma, mode="mirror")


def _auto_octaves(h: int, w: int) -> int:
    n = 0
    side = min(h, w)
    while side >= 16:
        n += 1
        side //= 2
    return n


def build_scale_space(image: np.ndarray, params: SiftParams = SiftParams()) -> ScaleSpace:
    """Full Gaussian and DoG pyramids for an image (RGB or gray)."""
    gray = to_gray(image)
    h, w = gray.shape
    if min(h, w) < 16:
        raise ValueError(f"image {w}x{h} too small; need at least 16 pixels per side")
    octaves = params.num_octaves or _auto_octaves(h, w)
    s = params.num_scales
    k = 2.0 ** (1.0 / s)

    # lift the assumed capture blur up to sigma0
    base = _blur(gray, math.sqrt(max(params.sigma0**2 - params.assumed_blur**2, 0.01)))
    gaussians = []
    for o in range(octaves):
        levels = [base]
        for i in range(1, s + 3):
            inc = params.sigma0 * k ** (i - 1) * math.sqrt(k * k - 1.0)
            levels.append(_blur(levels[-1], inc))
        gaussians.append(np.stack(levels))
        if o + 1 < octaves:
            nh, nw = levels[0].shape[0] // 2, levels[0].shape[1] // 2
            base = levels[s][::2, ::2][:nh, :nw]
    dogs = [g[1:] - g[:-1] for g in gaussians]
    return ScaleSpace(gaussians=gaussians, dogs=dogs, params=params, shape=(h, w))


def _refine_extremum(dog: np.ndarray, i: int, y: int, x: int, params: SiftParams):
    """Quadratic subpixel fit; returns (i, y, x, offset, value) or None."""
    levels, h, w = dog.shape
    b = params.border
    for _ in range(5):
        c = dog[i, y, x]
        g = np.array(
            [
                (dog[i, y, x + 1] - dog[i, y, x - 1]) / 2.0,
                (dog[i, y + 1, x] - dog[i, y - 1, x]) / 2.0,
                (dog[i + 1, y, x] - dog[i - 1, y, x]) / 2.0,
            ]
        )
        dxx = dog[i, y, x + 1] - 2 * c + dog[i, y, x - 1]
        dyy = dog[i, y + 1, x] - 2 * c + dog[i, y - 1, x]
        dss = dog[i + 1, y, x] - 2 * c + dog[i - 1, y, x]
        dxy = (dog[i, y + 1, x + 1] - dog[i, y + 1, x - 1] - dog[i, y - 1, x + 1] + dog[i, y - 1, x - 1]) / 4.0
        dxs = (dog[i + 1, y, x + 1] - dog[i + 1, y, x - 1] - dog[i - 1, y, x + 1] + dog[i - 1, y, x - 1]) / 4.0
        dys = (dog[i + 1, y + 1, x] - dog[i + 1, y - 1, x] - dog[i - 1, y + 1, x] + dog[i - 1, y - 1, x]) / 4.0
        H = np.array([[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]])
        try:
            offset = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            return None
        if np.all(np.abs(offset) < 0.5):
            value = c + 0.5 * float(g @ offset)
            if abs(value) < params.contrast_threshold:
                return None
            # principal-curvature ratio test on the spatial Hessian
            tr = dxx + dyy
            det = dxx * dyy - dxy * dxy
            r = params.edge_ratio
            if det <= 0 or tr * tr * r >= det * (r + 1) ** 2:
                return None
            return i, y, x, offset, value
        x += int(round(float(offset[0])))
        y += int(round(float(offset[1])))
        i += int(round(float(offset[2])))
        if not (1 <= i <= levels - 2 and b <= y < h - b and b <= x < w - b):
            return None
    return None


def detect_keypoints(space: ScaleSpace) -> list:
    """DoG extrema with subpixel refinement and orientation assignment."""
    p = space.params
    s = p.num_scales
    keypoints = []
    for o, dog in enumerate(space.dogs):
        maxf = ndimage.maximum_filter(dog, size=3, mode="nearest")
        minf = ndimage.minimum_filter(dog, size=3, mode="nearest")
        cand = ((dog == maxf) | (dog == minf)) & (np.abs(dog) > 0.5 * p.contrast_threshold)
        cand[0] = cand[-1] = False
        cand[:, : p.border] = cand[:, -p.border :] = False
        cand[:, :, : p.border] = cand[:, :, -p.border :] = False
        seen = set()
        for i, y, x in np.argwhere(cand):
            fit = _refine_extremum(dog, int(i), int(y), int(x), p)
            if fit is None:
                continue
            fi, fy, fx, offset, value = fit
            if (fi, fy, fx) in seen:
                continue
            seen.add((fi, fy, fx))
            level = fi + float(offset[2])
            scale = p.sigma0 * 2.0 ** (o + level / s)
            x_img = (fx + float(offset[0])) * (1 << o)
            y_img = (fy + float(offset[1])) * (1 << o)
            grad_level = int(np.clip(round(level), 0, s + 2))
            mag, ang = space.gradients(o, grad_level)
            sigma_oct = p.sigma0 * 2.0 ** (level / s)
            x_oct = fx + float(offset[0])
            y_oct = fy + float(offset[1])
            for theta in _orientations(mag, ang, x_oct, y_oct, sigma_oct, p):
                keypoints.append(
                    Keypoint(
                        x=x_img,
                        y=y_img,
                        scale=scale,
                        orientation=theta,
                        response=abs(value),
                        octave=o,
                        level=level,
                    )
                )
    return keypoints


def _orientations(mag, ang, x_oct, y_oct, sigma_oct, params: SiftParams) -> list:
    """Dominant gradient directions near a keypoint, in radians."""
    h, w = mag.shape
    win_sigma = 1.5 * sigma_oct
    radius = int(round(3.0 * win_sigma))
    cx, cy = int(round(x_oct)), int(round(y_oct))
    y0, y1 = max(cy - radius, 0), min(cy + radius + 1, h)
    x0, x1 = max(cx - radius, 0), min(cx + radius + 1, w)
    if y0 >= y1 or x0 >= x1:
        return []
    ys, xs = np.mgrid[y0:y1, x0:x1]
    d2 = (ys - y_oct) ** 2 + (xs - x_oct) ** 2
    weights = np.exp(-d2 / (2.0 * win_sigma**2)) * mag[y0:y1, x0:x1]
    bins = np.round(ang[y0:y1, x0:x1] * (36 / (2 * np.pi))).astype(int) % 36
    hist = np.bincount(bins.ravel(), weights=weights.ravel(), minlength=36)
    total = hist.sum()
    if total <= 0:
        return []
    # circular smoothing irons out grid-direction aliasing, which otherwise
    # fakes structure in radially symmetric neighbourhoods
    for _ in range(6):
        hist = (
            6 * hist + 4 * (np.roll(hist, 1) + np.roll(hist, -1)) + np.roll(hist, 2) + np.roll(hist, -2)
        ) / 16.0

    def interp(b):
        left, right = hist[(b - 1) % 36], hist[(b + 1) % 36]
        denom = hist[b] * 2 - left - right
        frac = 0.0 if denom == 0 else 0.5 * (left - right) / denom
        return ((b + frac) * (2 * np.pi / 36)) % (2 * np.pi)

    peak = float(hist.max())
    if peak < params.isotropy_ratio * total / 36:
        # near-uniform histogram: treat the point as direction-free and
        # commit to the single strongest bin
        return [interp(int(hist.argmax()))]
    out = []
    for b in range(36):
        v = hist[b]
        if v >= params.peak_ratio * peak and v > hist[(b - 1) % 36] and v >= hist[(b + 1) % 36]:
            out.append(interp(b))
    return out


def compute_descriptors(space: ScaleSpace, keypoints: list) -> np.ndarray:
    """128-dim descriptors, one row per keypoint, unit length floats."""
    p = space.params
    s = p.num_scales
    out = np.zeros((len(keypoints), 128))
    for row, kp in enumerate(keypoints):
        grad_level = int(np.clip(round(kp.level), 0, s + 2))
        mag, ang = space.gradients(kp.octave, grad_level)
        h, w = mag.shape
        scale_oct = kp.sigma_octave
        x_oct = kp.x / (1 << kp.octave)
        y_oct = kp.y / (1 << kp.octave)

        hist_width = 3.0 * scale_oct
        radius = int(round(hist_width * math.sqrt(2) * 2.5))
        cx, cy = int(round(x_oct)), int(round(y_oct))
        y0, y1 = max(cy - radius, 0), min(cy + radius + 1, h)
        x0, x1 = max(cx - radius, 0), min(cx + radius + 1, w)
        if y0 >= y1 or x0 >= x1:
            continue
        ys, xs = np.mgrid[y0:y1, x0:x1]
        dy = (ys - y_oct).ravel()
        dx = (xs - x_oct).ravel()
        ct, st = math.cos(kp.orientation), math.sin(kp.orientation)
        col_rot = dx * ct + dy * st
        row_rot = -dx * st + dy * ct
        rbin = row_rot / hist_width + 1.5
        cbin = col_rot / hist_width + 1.5
        keep = (rbin > -1) & (rbin < 4) & (cbin > -1) & (cbin < 4)
        if not np.any(keep):
            continue
        rbin, cbin = rbin[keep], cbin[keep]
        m = mag[y0:y1, x0:x1].ravel()[keep]
        a = ang[y0:y1, x0:x1].ravel()[keep]
        weight = np.exp(
            -((row_rot[keep] / hist_width) ** 2 + (col_rot[keep] / hist_width) ** 2) / 8.0
        )
        vals = m * weight
        obin = ((a - kp.orientation) % (2 * np.pi)) * (8 / (2 * np.pi))

        hist = np.zeros((6, 6, 8))
        r0 = np.floor(rbin).astype(int)
        c0 = np.floor(cbin).astype(int)
        o0 = np.floor(obin).astype(int)
        rf, cf, of = rbin - r0, cbin - c0, obin - o0
        for dr in (0, 1):
            wr = vals * np.where(dr, rf, 1 - rf)
            for dc in (0, 1):
                wc = wr * np.where(dc, cf, 1 - cf)
                for do in (0, 1):
                    wo = wc * np.where(do, of, 1 - of)
                    np.add.at(hist, (r0 + dr + 1, c0 + dc + 1, (o0 + do) % 8), wo)
        vec = hist[1:5, 1:5, :].ravel()
        norm = np.linalg.norm(vec)
        if norm <= 1e-12:
            continue
        vec = np.minimum(vec, 0.2 * norm)
        norm = np.linalg.norm(vec)
        if norm > 1e-12:
            vec = vec / norm
        out[row] = vec
    return out


def detect_and_describe(image: np.ndarray, params: SiftParams = SiftParams()):
    """Keypoints and their descriptors for an image in one call."""
    space = build_scale_space(image, params)
    keypoints = detect_keypoints(space)
    return keypoints, compute_descriptors(space, keypoints)
