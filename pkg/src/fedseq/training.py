"""The local optimisation loop shared by centralized and federated training."""
from __future__ import annotations

import numpy as np

from .nets import NetworkConfig, backward, forward
from .optim import AdamState, adam_step, clip_global_norm, mse_loss
from .params import ParameterSet

DEFAULT_CLIP_NORM = 5.0


def train_step(params: ParameterSet, config: NetworkConfig, x: np.ndarray, y: np.ndarray,
               state: AdamState, clip_norm: float | None = DEFAULT_CLIP_NORM):
    y_hat, tape = forward(params, config, x)
    loss, grad_y = mse_loss(y_hat, y)
    grad = clip_global_norm(backward(params, config, tape, grad_y), clip_norm)
    params, state = adam_step(params, grad, state)
    return params, state, loss


def train_epochs(params: ParameterSet, config: NetworkConfig, windows, state: AdamState,
                 epochs: int, clip_norm: float | None = DEFAULT_CLIP_NORM):
    """Run ``epochs`` passes over ``windows`` in order, one window per Adam step.

    Returns ``(params, state, mean_loss_per_epoch)``.
    """
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    if epochs and not windows:
        raise ValueError("no training windows")
    history = []
    for _ in range(epochs):
        total = 0.0
        for x, y in windows:
            params, state, loss = train_step(params, config, x, y, state, clip_norm)
            total += loss
        history.append(total / len(windows))
    return params, state, history


def dataset_loss(params: ParameterSet, config: NetworkConfig, windows) -> float:
    """Mean per-window MSE loss without updating anything."""
    if not windows:
        raise ValueError("no windows")
    return float(np.mean([mse_loss(forward(params, config, x)[0], y)[0] for x, y in windows]))
