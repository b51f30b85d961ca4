"""Network layers as plain numpy forward/backward pairs.

Activations are float64 arrays in NHWC layout.  Each layer caches what its
backward pass needs during forward, so backward must follow the matching
forward call.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def he_uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> list:
        return []

    def grads(self) -> list:
        return []


class Conv2D(Layer):
    """Valid 2D convolution (cross-correlation), stride 1.

    Weights have shape (k, k, in_channels, out_channels).
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng):
        k = kernel_size
        self.w = he_uniform(rng, (k, k, in_channels, out_channels), fan_in=k * k * in_channels)
        self.b = np.zeros(out_channels)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None

    def forward(self, x):
        self._x = x
        k = self.w.shape[0]
        # windows: (N, OH, OW, Cin, k, k)
        win = sliding_window_view(x, (k, k), axis=(1, 2))
        return np.tensordot(win, self.w, axes=([4, 5, 3], [0, 1, 2])) + self.b

    def backward(self, grad):
        x = self._x
        k = self.w.shape[0]
        win = sliding_window_view(x, (k, k), axis=(1, 2))
        # (Cin, k, k, Cout) -> (k, k, Cin, Cout)
        dw = np.tensordot(win, grad, axes=([0, 1, 2], [0, 1, 2]))
        self.dw = dw.transpose(1, 2, 0, 3)
        self.db = grad.sum(axis=(0, 1, 2))
        # full correlation of the padded gradient with the flipped kernel
        gpad = np.pad(grad, ((0, 0), (k - 1, k - 1), (k - 1, k - 1), (0, 0)))
        gwin = sliding_window_view(gpad, (k, k), axis=(1, 2))
        w_flip = self.w[::-1, ::-1]
        return np.tensordot(gwin, w_flip, axes=([4, 5, 3], [0, 1, 3]))

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.dw, self.db]


class ReLU(Layer):
    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad):
        return np.where(self._mask, grad, 0.0)


class MaxPool2x2(Layer):
    """2x2 max pooling with stride 2; a trailing odd row/column is dropped.

    Ties route the gradient to the first window position in row-major order.
    """

    def forward(self, x):
        n, h, w, c = x.shape
        oh, ow = h // 2, w // 2
        xt = x[:, : oh * 2, : ow * 2, :]
        win = xt.reshape(n, oh, 2, ow, 2, c).transpose(0, 1, 3, 2, 4, 5).reshape(n, oh, ow, 4, c)
        self._argmax = win.argmax(axis=3)
        self._in_shape = x.shape
        return win.max(axis=3)

    def backward(self, grad):
        n, oh, ow, c = grad.shape
        flat = np.zeros((n, oh, ow, 4, c))
        np.put_along_axis(flat, self._argmax[:, :, :, None, :], grad[:, :, :, None, :], axis=3)
        xt = flat.reshape(n, oh, ow, 2, 2, c).transpose(0, 1, 3, 2, 4, 5)
        out = np.zeros(self._in_shape)
        out[:, : oh * 2, : ow * 2, :] = xt.reshape(n, oh * 2, ow * 2, c)
        return out


class Flatten(Layer):
    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Dense(Layer):
    """Fully connected layer, weights shaped (in_dim, out_dim)."""

    def __init__(self, in_dim: int, out_dim: int, rng):
        self.w = he_uniform(rng, (in_dim, out_dim), fan_in=in_dim)
        self.b = np.zeros(out_dim)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None

    def forward(self, x):
        self._x = x
        return x @ self.w + self.b

    def backward(self, grad):
        self.dw = self._x.T @ grad
        self.db = grad.sum(axis=0)
        return grad @ self.w.T

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.dw, self.db]
