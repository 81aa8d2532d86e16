"""From-scratch numpy network engine and the driving policy built on it."""

from .layers import BatchNorm, Conv2d, Dense, Dropout, Flatten, Param, ReLU, Sequential
from .policy import (
    BASELINE_PARAM_COUNTS,
    DrivingPolicy,
    PolicyArch,
    count_params,
    tiny_arch,
)
from .loss import DEFAULT_STEERING_BIAS, steering, weighted_action_loss
from .optim import Adam
from .augment import augment_batch, augment_sample, flip_labels, hsv_to_rgb, rgb_to_hsv
from .train import (
    DIRECTION_DEADBAND,
    STEERING_THRESHOLD,
    EpochStats,
    TrainConfig,
    TrainResult,
    evaluate,
    steering_rates,
    train_policy,
)
from .weights_io import (
    arch_hash,
    dump_weights,
    fnv1a64,
    load_policy,
    parse_weights,
    save_policy,
)

__all__ = [
    "BatchNorm",
    "Conv2d",
    "Dense",
    "Dropout",
    "Flatten",
    "Param",
    "ReLU",
    "Sequential",
    "BASELINE_PARAM_COUNTS",
    "DrivingPolicy",
    "PolicyArch",
    "count_params",
    "tiny_arch",
    "DEFAULT_STEERING_BIAS",
    "steering",
    "weighted_action_loss",
    "Adam",
    "augment_batch",
    "augment_sample",
    "flip_labels",
    "hsv_to_rgb",
    "rgb_to_hsv",
    "DIRECTION_DEADBAND",
    "STEERING_THRESHOLD",
    "EpochStats",
    "TrainConfig",
    "TrainResult",
    "evaluate",
    "steering_rates",
    "train_policy",
    "arch_hash",
    "dump_weights",
    "fnv1a64",
    "load_policy",
    "parse_weights",
    "save_policy",
]
