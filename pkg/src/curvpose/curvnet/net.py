"""Diameter regression network: three conv blocks, two dense layers.

Two stock configurations are provided.  The small one takes 60x60 RGB crops
and has 189,057 parameters; the large one takes 64x64 crops and has 684,865.
Both end in a single linear output unit whose value is the predicted
cylinder diameter in HoI units.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from ..imaging import resize_bilinear, to_float
from .layers import Conv2D, Dense, Flatten, MaxPool2x2, ReLU

_MAGIC = b"CURVNET1"


class ModelFormatError(ValueError):
    """Model file is corrupt or does not match the declared configuration."""


@dataclass(frozen=True)
class NetConfig:
    """Architecture hyperparameters.

    conv_channels and conv_kernels are parallel tuples, one entry per conv
    block (conv -> relu -> 2x2 maxpool).  hidden_units sizes the dense layer
    between the flattened features and the scalar output.
    """

    input_size: int
    conv_channels: tuple
    conv_kernels: tuple
    hidden_units: int
    in_channels: int = 3

    def __post_init__(self):
        if len(self.conv_channels) != len(self.conv_kernels):
            raise ValueError("conv_channels and conv_kernels must have equal length")
        if self.feature_size() < 1:
            raise ValueError(f"input_size {self.input_size} too small for the conv stack")

    def feature_size(self) -> int:
        """Spatial side length after the last pool."""
        s = self.input_size
        for k in self.conv_kernels:
            s = (s - k + 1) // 2
        return s

    def flat_features(self) -> int:
        return self.feature_size() ** 2 * self.conv_channels[-1]


SMALL_CONFIG = NetConfig(input_size=60, conv_channels=(32, 64, 64), conv_kernels=(5, 3, 4), hidden_units=64)
LARGE_CONFIG = NetConfig(input_size=64, conv_channels=(32, 64, 128), conv_kernels=(5, 3, 3), hidden_units=128)

_VARIANTS = {"small": SMALL_CONFIG, "large": LARGE_CONFIG}


class CurvNet:
    """The regression network. Activations are NHWC float64."""

    def __init__(self, config: NetConfig, rng: np.random.Generator):
        self.config = config
        layers = []
        in_c = config.in_channels
        for out_c, k in zip(config.conv_channels, config.conv_kernels):
            layers.append(Conv2D(in_c, out_c, k, rng))
            layers.append(ReLU())
            layers.append(MaxPool2x2())
            in_c = out_c
        layers.append(Flatten())
        layers.append(Dense(config.flat_features(), config.hidden_units, rng))
        layers.append(ReLU())
        layers.append(Dense(config.hidden_units, 1, rng))
        self.layers = layers

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Batch of images (N, S, S, C) in [0, 1] to predictions (N,)."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 4 or x.shape[1] != self.config.input_size or x.shape[2] != self.config.input_size:
            raise ValueError(
                f"expected (N, {self.config.input_size}, {self.config.input_size}, "
                f"{self.config.in_channels}) input, got {x.shape}"
            )
        for layer in self.layers:
            x = layer.forward(x)
        return x[:, 0]

    def backward(self, grad_pred: np.ndarray) -> np.ndarray:
        """Propagate d(loss)/d(prediction) of shape (N,); fills layer grads."""
        g = np.asarray(grad_pred, dtype=float)[:, None]
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def parameters(self) -> list:
        return [p for layer in self.layers for p in layer.params()]

    def gradients(self) -> list:
        return [g for layer in self.layers for g in layer.grads()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def set_parameters(self, values: list):
        params = self.parameters()
        if len(values) != len(params):
            raise ValueError(f"expected {len(params)} arrays, got {len(values)}")
        for p, v in zip(params, values):
            if p.shape != v.shape:
                raise ValueError(f"shape mismatch: {p.shape} vs {v.shape}")
            p[...] = v

    def predict(self, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """Forward in chunks; keeps memory bounded for large batches."""
        images = np.asarray(images, dtype=float)
        out = np.empty(images.shape[0])
        for start in range(0, images.shape[0], batch_size):
            out[start : start + batch_size] = self.forward(images[start : start + batch_size])
        return out


def build_net(variant: str, seed: int = 0) -> CurvNet:
    """Freshly initialized network, variant 'small' or 'large'."""
    if variant not in _VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {sorted(_VARIANTS)}")
    return CurvNet(_VARIANTS[variant], np.random.default_rng(seed))


def save_net(path, net: CurvNet):
    """Write the model: magic, JSON config block, float32 little-endian params."""
    cfg = asdict(net.config)
    cfg["conv_channels"] = list(cfg["conv_channels"])
    cfg["conv_kernels"] = list(cfg["conv_kernels"])
    cfg["param_shapes"] = [list(p.shape) for p in net.parameters()]
    blob = json.dumps(cfg, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for p in net.parameters():
            f.write(p.astype("<f4").tobytes())


def load_net(path) -> CurvNet:
    """Read a model written by save_net."""
    with open(path, "rb") as f:
        data = f.read()
    if data[: len(_MAGIC)] != _MAGIC:
        raise ModelFormatError("bad magic; not a model file")
    off = len(_MAGIC)
    (blob_len,) = struct.unpack_from("<I", data, off)
    off += 4
    try:
        cfg = json.loads(data[off : off + blob_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ModelFormatError(f"bad config block: {e}") from e
    off += blob_len
    shapes = [tuple(s) for s in cfg.pop("param_shapes")]
    config = NetConfig(
        input_size=cfg["input_size"],
        conv_channels=tuple(cfg["conv_channels"]),
        conv_kernels=tuple(cfg["conv_kernels"]),
        hidden_units=cfg["hidden_units"],
        in_channels=cfg.get("in_channels", 3),
    )
    net = CurvNet(config, np.random.default_rng(0))
    params = net.parameters()
    if [p.shape for p in params] != shapes:
        raise ModelFormatError("config block does not match the architecture")
    values = []
    for shape in shapes:
        n = int(np.prod(shape))
        raw = data[off : off + 4 * n]
        if len(raw) != 4 * n:
            raise ModelFormatError("model file truncated")
        values.append(np.frombuffer(raw, dtype="<f4").astype(float).reshape(shape))
        off += 4 * n
    if off != len(data):
        raise ModelFormatError(f"{len(data) - off} trailing bytes after parameters")
    net.set_parameters(values)
    return net


def predict_curvature(net: CurvNet, crop: np.ndarray) -> float:
    """Predicted cylinder diameter (HoI units) for one RGB crop.

    The crop is resized to the network input size, so any crop shape works.
    """
    img = to_float(crop)
    if img.ndim != 3 or img.shape[2] != net.config.in_channels:
        raise ValueError(f"expected HxWx{net.config.in_channels} crop, got shape {crop.shape}")
    s = net.config.input_size
    img = resize_bilinear(img, s, s)
    return float(net.forward(img[None])[0])
