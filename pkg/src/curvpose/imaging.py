"""Small image helpers shared by the feature and network code paths."""

from __future__ import annotations

import numpy as np


def to_float(img: np.ndarray) -> np.ndarray:
    """Image as float64 in [0, 1]; uint8 input is scaled by 1/255."""
    if img.dtype == np.uint8:
        return img.astype(np.float64) / 255.0
    return img.astype(np.float64)


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Float image in [0, 1] to uint8 with clipping and rounding."""
    return np.clip(np.asarray(img, dtype=float) * 255.0 + 0.5, 0, 255).astype(np.uint8)


def to_gray(img: np.ndarray) -> np.ndarray:
    """Luma (ITU-R 601) of an RGB image; grayscale input passes through.

    Output is float64 in [0, 1].
    """
    img = to_float(img)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] == 3:
        return img[:, :, 0] * 0.299 + img[:, :, 1] * 0.587 + img[:, :, 2] * 0.114
    raise ValueError(f"expected HxW or HxWx3 image, got shape {img.shape}")


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel-aligned sample centers.

    Works on HxW or HxWxC float arrays and returns float64.
    """
    img = np.asarray(img, dtype=float)
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()
    # map output pixel centers to input coordinates
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0).reshape(-1, 1)
    wx = (xs - x0).reshape(1, -1)
    if img.ndim == 3:
        wy = wy[:, :, None]
        wx = wx[:, :, None]
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy
