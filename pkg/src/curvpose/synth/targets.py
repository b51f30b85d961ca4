"""Procedural label textures.

Each target mixes a few large anchor shapes with rows of stroke glyphs,
under a palette and layout drawn per seed.  The glyphs do the heavy
lifting: corner-dense strokes on a 3x3 lattice recombine differently for
every target, so descriptors rarely collide across the library and vote
counting separates targets cleanly.
"""

from __future__ import annotations

import colorsys

import numpy as np
from PIL import Image, ImageDraw


def _value_noise(rng: np.random.Generator, h: int, w: int, cells: int) -> np.ndarray:
    lattice = rng.uniform(size=(cells + 1, cells + 1))
    ys = np.linspace(0, cells, h)
    xs = np.linspace(0, cells, w)
    y0 = np.minimum(ys.astype(int), cells - 1)
    x0 = np.minimum(xs.astype(int), cells - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    # smoothstep for soft blobs
    fy = fy * fy * (3 - 2 * fy)
    fx = fx * fx * (3 - 2 * fx)
    a = lattice[np.ix_(y0, x0)]
    b = lattice[np.ix_(y0, x0 + 1)]
    c = lattice[np.ix_(y0 + 1, x0)]
    d = lattice[np.ix_(y0 + 1, x0 + 1)]
    return a * (1 - fx) * (1 - fy) + b * fx * (1 - fy) + c * (1 - fx) * fy + d * fx * fy


def _rgb(h: float, s: float, v: float) -> tuple:
    return tuple(int(round(c * 255)) for c in colorsys.hsv_to_rgb(h % 1.0, s, v))


def _palette(rng: np.random.Generator):
    """Two light, two mid, two dark colors, hues fanned out per seed."""
    base = rng.uniform()
    step = 0.381966  # golden-angle fraction keeps hues apart
    light = [_rgb(base + i * step, rng.uniform(0.20, 0.45), rng.uniform(0.85, 0.98)) for i in range(2)]
    mid = [_rgb(base + (i + 2) * step, rng.uniform(0.50, 0.90), rng.uniform(0.50, 0.75)) for i in range(2)]
    dark = [_rgb(base + (i + 4) * step, rng.uniform(0.55, 0.95), rng.uniform(0.12, 0.38)) for i in range(2)]
    return light, mid, dark


def _glyph(draw: ImageDraw.ImageDraw, rng: np.random.Generator, box, color) -> None:
    """A letter-like scribble: strokes between points of a 3x3 lattice."""
    x0, y0, x1, y1 = box
    gx = np.linspace(x0, x1, 3)
    gy = np.linspace(y0, y1, 3)
    pts = [(float(gx[i % 3]), float(gy[i // 3])) for i in range(9)]
    width = int(rng.integers(2, 5))
    for _ in range(int(rng.integers(2, 6))):
        kind = rng.uniform()
        if kind < 0.62:
            a, b = rng.choice(9, size=2, replace=False)
            draw.line([pts[a], pts[b]], fill=color, width=width)
        elif kind < 0.85:
            cx, cy = pts[4]
            rx, ry = (x1 - x0) / 2, (y1 - y0) / 2
            start = int(rng.integers(0, 4)) * 90
            span = 90 if rng.uniform() < 0.5 else 180
            draw.arc([cx - rx, cy - ry, cx + rx, cy + ry], start, start + span, fill=color, width=width)
        else:
            px, py = pts[int(rng.integers(0, 9))]
            r = rng.uniform(2.0, 4.0)
            draw.ellipse([px - r, py - r, px + r, py + r], fill=color)


def _anchor(draw: ImageDraw.ImageDraw, rng: np.random.Generator, width, height, color) -> None:
    """One large shape that dominates a region of the label."""
    cx = rng.uniform(0.18, 0.82) * width
    cy = rng.uniform(0.22, 0.78) * height
    r = rng.uniform(0.14, 0.26) * height
    kind = int(rng.integers(0, 4))
    if kind == 0:
        lw = int(rng.integers(5, 10))
        draw.ellipse([cx - r, cy - r, cx + r, cy + r], outline=color, width=lw)
    elif kind == 1:
        n = int(rng.integers(5, 9))
        phase = rng.uniform(0, 2 * np.pi)
        ang = phase + np.arange(2 * n) * np.pi / n
        rad = np.where(np.arange(2 * n) % 2 == 0, r, 0.45 * r)
        draw.polygon(list(zip(cx + rad * np.cos(ang), cy + rad * np.sin(ang))), fill=color)
    elif kind == 2:
        draw.polygon([(cx, cy - r), (cx + r, cy), (cx, cy + r), (cx - r, cy)], fill=color)
    else:
        start = int(rng.integers(0, 360))
        draw.pieslice([cx - r, cy - r, cx + r, cy + r], start, start + int(rng.integers(70, 200)), fill=color)


def procedural_target(seed: int, width: int = 480, height: int = 360) -> np.ndarray:
    """Deterministic RGB label image (height, width, 3) uint8 for a seed."""
    rng = np.random.default_rng(np.random.SeedSequence([981123, seed]))
    light, mid, dark = _palette(rng)

    # soft two-tone wash: diagonal ramp at a per-seed angle plus blobs
    angle = rng.uniform(0, np.pi)
    yy, xx = np.mgrid[0:height, 0:width]
    ramp = np.cos(angle) * xx / width + np.sin(angle) * yy / height
    ramp = (ramp - ramp.min()) / (np.ptp(ramp) + 1e-12)
    mixer = (0.7 * ramp + 0.3 * _value_noise(rng, height, width, 5))[..., None]
    a = np.asarray(light[0], dtype=float)
    b = np.asarray(light[1], dtype=float)
    img = Image.fromarray((mixer * a + (1 - mixer) * b + 0.5).astype(np.uint8))
    draw = ImageDraw.Draw(img)

    for i in range(int(rng.integers(2, 4))):
        _anchor(draw, rng, width, height, mid[i % 2])

    # rows of glyphs, like lines of text in a made-up alphabet
    n_rows = int(rng.integers(3, 6))
    margin = 0.06 * height
    band = (height - 2 * margin) / n_rows
    for row in range(n_rows):
        cell_w = rng.uniform(22, 40)
        glyph_h = band * rng.uniform(0.50, 0.72)
        y0 = margin + row * band + rng.uniform(0.05, 0.25) * band
        x = 0.04 * width + rng.uniform(0, cell_w)
        color = dark[row % 2]
        while x + cell_w < 0.96 * width:
            if rng.uniform() < 0.85:  # some cells stay blank, like spaces
                pad = 0.16 * cell_w
                _glyph(draw, rng, (x + pad, y0, x + cell_w - pad, y0 + glyph_h), color)
            x += cell_w

    # dark frame so the label edge itself is a feature
    draw.rectangle([0, 0, width - 1, height - 1], outline=(15, 15, 20), width=6)
    return np.asarray(img)


def make_target_library(count: int, width: int = 480, height: int = 360) -> dict:
    """Ordered mapping of target id to label image, ids t00, t01, ..."""
    if count < 1:
        raise ValueError("need at least one target")
    return {f"t{i:02d}": procedural_target(i, width, height) for i in range(count)}
