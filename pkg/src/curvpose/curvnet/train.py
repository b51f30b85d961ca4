"""Training loop: Adam on Huber loss with early stopping on validation loss."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .losses import huber_loss, mse_loss
from .net import CurvNet


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 50
    patience: int = 4
    loss: str = "huber"  # or "mse"
    huber_delta: float = 0.4


class Adam:
    """Adam optimizer updating the given parameter arrays in place."""

    def __init__(self, params: list, cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list):
        c = self.cfg
        self.t += 1
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m[...] = c.beta1 * m + (1 - c.beta1) * g
            v[...] = c.beta2 * v + (1 - c.beta2) * g * g
            m_hat = m / (1 - c.beta1**self.t)
            v_hat = v / (1 - c.beta2**self.t)
            p -= c.learning_rate * m_hat / (np.sqrt(v_hat) + c.eps)


class EarlyStopper:
    """Stop when the monitored value has not improved for `patience` epochs."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ValueError("patience must be at least 1")
        self.patience = patience
        self.best_value = np.inf
        self.best_epoch = -1
        self._since_best = 0

    def update(self, epoch: int, value: float) -> bool:
        """Record an epoch result. Returns True when training should stop."""
        if value < self.best_value:
            self.best_value = value
            self.best_epoch = epoch
            self._since_best = 0
            return False
        self._since_best += 1
        return self._since_best >= self.patience

    @property
    def improved(self) -> bool:
        return self._since_best == 0


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_huber: float
    val_huber: float
    train_mse: float
    val_mse: float


def _evaluate(net: CurvNet, images: np.ndarray, targets: np.ndarray, delta: float):
    pred = net.predict(images)
    return huber_loss(pred, targets, delta)[0], mse_loss(pred, targets)[0]


def train(
    net: CurvNet,
    train_images: np.ndarray,
    train_targets: np.ndarray,
    val_images: np.ndarray,
    val_targets: np.ndarray,
    cfg: TrainConfig = TrainConfig(),
    seed: int = 0,
    log=None,
) -> list:
    """Fit the network; returns per-epoch statistics.

    Batches are reshuffled every epoch from a generator seeded with `seed`,
    so a given (net init, data, seed) triple trains identically every time.
    The network is left holding the weights of its best validation epoch.
    """
    train_images = np.asarray(train_images, dtype=float)
    train_targets = np.asarray(train_targets, dtype=float)
    val_images = np.asarray(val_images, dtype=float)
    val_targets = np.asarray(val_targets, dtype=float)
    if len(train_images) == 0 or len(val_images) == 0:
        raise ValueError("need non-empty train and validation sets")
    if cfg.loss not in ("huber", "mse"):
        raise ValueError(f"loss must be 'huber' or 'mse', got {cfg.loss!r}")

    rng = np.random.default_rng(seed)
    opt = Adam(net.parameters(), cfg)
    stopper = EarlyStopper(cfg.patience)
    best_params = [p.copy() for p in net.parameters()]
    history = []

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(train_images))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            pred = net.forward(train_images[idx])
            if cfg.loss == "huber":
                _, grad = huber_loss(pred, train_targets[idx], cfg.huber_delta)
            else:
                _, grad = mse_loss(pred, train_targets[idx])
            net.backward(grad)
            opt.step(net.gradients())

        tr_h, tr_m = _evaluate(net, train_images, train_targets, cfg.huber_delta)
        va_h, va_m = _evaluate(net, val_images, val_targets, cfg.huber_delta)
        history.append(EpochStats(epoch, tr_h, va_h, tr_m, va_m))
        monitored = va_h if cfg.loss == "huber" else va_m
        if log is not None:
            log(f"epoch {epoch}: train huber {tr_h:.4f}, val huber {va_h:.4f}")
        stop = stopper.update(epoch, monitored)
        if stopper.improved:
            best_params = [p.copy() for p in net.parameters()]
        if stop:
            break

    net.set_parameters(best_params)
    return history


def write_history_csv(path, history: list):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "train_huber", "val_huber", "train_mse", "val_mse"])
        for row in history:
            writer.writerow(
                [row.epoch, f"{row.train_huber:.6f}", f"{row.val_huber:.6f}",
                 f"{row.train_mse:.6f}", f"{row.val_mse:.6f}"]
            )
