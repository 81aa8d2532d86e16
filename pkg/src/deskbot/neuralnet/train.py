"""Training loop with steering-quality checkpoint selection.

Validation tracks two rates over held-out frames: steering error within a
fixed threshold, and steering direction agreement (with a small deadband so
straight driving counts as its own direction). The checkpoint kept is the
epoch maximizing the mean of the two; ties go to the earlier epoch.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .augment import augment_batch
from .loss import (
    DEFAULT_STEERING_BIAS,
    centered_steering,
    weighted_action_loss,
)
from .optim import Adam
from .policy import DrivingPolicy

STEERING_THRESHOLD = 0.1
DIRECTION_DEADBAND = 0.01


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    lr: float = 3e-4
    loss_bias: float = DEFAULT_STEERING_BIAS
    augment: bool = True
    seed: int = 0
    eval_batch_size: int = 256
    verbose: bool = False


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    within_rate: float
    direction_rate: float

    @property
    def score(self) -> float:
        return 0.5 * (self.within_rate + self.direction_rate)


@dataclass
class TrainResult:
    history: list[EpochStats]
    best_epoch: int
    best_state: dict[str, np.ndarray]
    wall_seconds: float = 0.0

    @property
    def best(self) -> EpochStats:
        return self.history[self.best_epoch - 1]


def _sign_with_deadband(s: np.ndarray, deadband: float = DIRECTION_DEADBAND) -> np.ndarray:
    out = np.sign(s)
    out[np.abs(s) < deadband] = 0.0
    return out


def steering_rates(s_true: np.ndarray, s_pred: np.ndarray) -> tuple[float, float]:
    """(within-threshold rate, direction match rate)."""
    if s_true.size == 0:
        raise ValueError("no validation samples")
    within = float((np.abs(s_true - s_pred) <= STEERING_THRESHOLD).mean())
    direction = float(
        (_sign_with_deadband(s_true) == _sign_with_deadband(s_pred)).mean()
    )
    return within, direction


def _as_image_batch(images: np.ndarray) -> np.ndarray:
    if images.dtype == np.uint8:
        return images.astype(np.float32) / np.float32(255.0)
    return images.astype(np.float32, copy=False)


def evaluate(
    net: DrivingPolicy,
    images: np.ndarray,
    commands: np.ndarray,
    actions: np.ndarray,
    loss_bias: float = DEFAULT_STEERING_BIAS,
    batch_size: int = 256,
) -> tuple[float, float, float]:
    """(mean loss, within rate, direction rate) in inference mode."""
    n = len(images)
    losses = []
    preds = np.empty((n, 2), dtype=np.float32)
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        x = _as_image_batch(images[start:stop])
        p = net.forward(x, commands[start:stop], train=False)
        loss, _ = weighted_action_loss(p, actions[start:stop].astype(p.dtype), loss_bias)
        losses.append(loss * (stop - start))
        preds[start:stop] = p
    within, direction = steering_rates(centered_steering(actions), centered_steering(preds))
    return float(np.sum(losses) / n), within, direction


def train_policy(
    net: DrivingPolicy,
    train_data: tuple[np.ndarray, np.ndarray, np.ndarray],
    val_data: tuple[np.ndarray, np.ndarray, np.ndarray],
    cfg: TrainConfig = TrainConfig(),
) -> TrainResult:
    """train_data/val_data: (images, commands, actions)."""
    t_start = time.monotonic()
    images, commands, actions = train_data
    if len(images) == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(net.params(), lr=cfg.lr)
    history: list[EpochStats] = []
    best_epoch = 0
    best_score = -1.0
    best_state: dict[str, np.ndarray] = net.snapshot()

    n = len(images)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x = _as_image_batch(images[idx])
            c = commands[idx].astype(np.float32, copy=False)
            a = actions[idx].astype(np.float32, copy=False)
            if cfg.augment:
                x, a, c = augment_batch(x, a, c, rng)
            opt.zero_grad()
            pred = net.forward(x, c, train=True, rng=rng)
            loss, grad = weighted_action_loss(pred, a, cfg.loss_bias)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"training diverged: non-finite loss {loss} at epoch {epoch}, "
                    f"batch starting at sample {start}"
                )
            net.backward(grad)
            opt.step()
            total += loss * len(idx)

        val_loss, within, direction = evaluate(
            net, *val_data, loss_bias=cfg.loss_bias, batch_size=cfg.eval_batch_size
        )
        stats = EpochStats(epoch, total / n, val_loss, within, direction)
        history.append(stats)
        if cfg.verbose:
            print(
                f"epoch {epoch:3d}  train {stats.train_loss:.5f}  val {val_loss:.5f}  "
                f"within {within:.3f}  direction {direction:.3f}"
            )
        if stats.score > best_score:
            best_score = stats.score
            best_epoch = epoch
            best_state = net.snapshot()

    net.load_state(best_state)
    return TrainResult(
        history=history,
        best_epoch=best_epoch,
        best_state=best_state,
        wall_seconds=time.monotonic() - t_start,
    )
