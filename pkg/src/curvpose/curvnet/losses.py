"""Regression losses. Each returns (mean loss, gradient w.r.t. predictions)."""

from __future__ import annotations

import numpy as np


def huber_loss(pred: np.ndarray, target: np.ndarray, delta: float = 0.4):
    """Huber loss: quadratic within delta of the target, linear outside.

    loss(e) = e^2 / 2            for |e| <= delta
            = delta (|e| - delta / 2)  otherwise
    """
    e = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    small = np.abs(e) <= delta
    per = np.where(small, 0.5 * e * e, delta * (np.abs(e) - 0.5 * delta))
    grad = np.where(small, e, delta * np.sign(e))
    return float(per.mean()), grad / e.size


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error."""
    e = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    return float((e * e).mean()), 2.0 * e / e.size
