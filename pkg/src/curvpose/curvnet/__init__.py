"""Small numpy convolutional network that regresses cylinder diameter from a crop."""

from .layers import Conv2D, Dense, Flatten, MaxPool2x2, ReLU
from .losses import huber_loss, mse_loss
from .net import (
    LARGE_CONFIG,
    SMALL_CONFIG,
    CurvNet,
    ModelFormatError,
    NetConfig,
    build_net,
    load_net,
    predict_curvature,
    save_net,
)
from .train import Adam, EarlyStopper, EpochStats, TrainConfig, train, write_history_csv

__all__ = [
    "Adam",
    "Conv2D",
    "CurvNet",
    "Dense",
    "EarlyStopper",
    "EpochStats",
    "Flatten",
    "LARGE_CONFIG",
    "MaxPool2x2",
    "ModelFormatError",
    "NetConfig",
    "ReLU",
    "SMALL_CONFIG",
    "TrainConfig",
    "build_net",
    "huber_loss",
    "load_net",
    "mse_loss",
    "predict_curvature",
    "save_net",
    "train",
    "write_history_csv",
]
