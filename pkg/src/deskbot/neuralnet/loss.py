"""Training objective: steering-weighted action regression.

For stored actions a = (a_l, a_r) in [0, 1], steering is s = a_l - a_r.
Per sample:

    L = (|s_t| + b)^2 * (s_t - s_p)^2 + mean((a_t - a_p)^2)

averaged over the batch. The first term multiplies up samples that actually
turn; b keeps straight driving from vanishing out of the objective.
"""

from __future__ import annotations

import numpy as np

DEFAULT_STEERING_BIAS = 0.25


def steering(actions: np.ndarray) -> np.ndarray:
    """s = a_l - a_r for a batch of (N, 2) actions."""
    return actions[:, 0] - actions[:, 1]


def centered_steering(actions: np.ndarray) -> np.ndarray:
    """Steering of centered per-wheel commands, 2*(a_l - a_r), in [-2, 2].

    Stored actions live in [0, 1]; mapping each wheel to the centered range
    [-1, 1] (a -> 2a - 1) doubles their difference. Validation thresholds are
    specified against this centered scale, while the loss above stays on the
    stored scale.
    """
    return 2.0 * (actions[:, 0] - actions[:, 1])


def weighted_action_loss(
    pred: np.ndarray, target: np.ndarray, bias: float = DEFAULT_STEERING_BIAS
) -> tuple[float, np.ndarray]:
    """(scalar loss, gradient wrt pred) for (N, 2) batches."""
    if pred.shape != target.shape or pred.ndim != 2 or pred.shape[1] != 2:
        raise ValueError(f"expected matching (N, 2) arrays, got {pred.shape} vs {target.shape}")
    n = pred.shape[0]
    s_t = steering(target)
    s_p = steering(pred)
    w2 = (np.abs(s_t) + bias) ** 2
    steer_err = s_t - s_p
    per_sample = w2 * steer_err**2 + ((target - pred) ** 2).mean(axis=1)
    loss = float(per_sample.mean())

    g_steer = (-2.0 * w2 * steer_err / n).astype(pred.dtype)
    grad = np.empty_like(pred)
    grad[:, 0] = g_steer
    grad[:, 1] = -g_steer
    grad += (pred - target) / n
    return loss, grad
