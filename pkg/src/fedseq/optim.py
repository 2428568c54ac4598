"""Mean squared error and the Adam optimizer over :class:`ParameterSet`."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .params import ParameterSet


def mse_loss(y_hat: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """``loss = sum((y_hat - y)**2) / (2T)`` and its gradient ``(y_hat - y) / T``."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape or y.ndim != 2:
        raise ValueError(f"shape mismatch: {y_hat.shape} vs {y.shape}")
    if not (np.isfinite(y_hat).all() and np.isfinite(y).all()):
        raise FloatingPointError("mse_loss received non-finite values")
    T = y.shape[0]
    resid = y_hat - y
    loss = float(np.sum(resid * resid)) / (2.0 * T)
    return loss, resid / T


def clip_global_norm(grad: ParameterSet, max_norm: float | None) -> ParameterSet:
    """Rescale ``grad`` so its global L2 norm is at most ``max_norm``."""
    if max_norm is None:
        return grad
    norm = grad.global_norm()
    if norm <= max_norm:
        return grad
    scale = max_norm / norm
    return grad.map(lambda g: g * scale)


@dataclass(frozen=True)
class AdamState:
    m: ParameterSet
    v: ParameterSet
    t: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: ParameterSet, learning_rate: float, **kw) -> "AdamState":
        return cls(m=params.zeros_like(), v=params.zeros_like(),
                   learning_rate=learning_rate, **kw)


def adam_step(params: ParameterSet, grad: ParameterSet,
              state: AdamState) -> tuple[ParameterSet, AdamState]:
    params.check_layout(grad)
    params.check_layout(state.m)
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    lr, eps = state.learning_rate, state.epsilon
    new_p, new_m, new_v = [], [], []
    for (name, theta), (_, g), (_, m), (_, v) in zip(params, grad, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        theta = theta - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_p.append((name, theta))
        new_m.append((name, m))
        new_v.append((name, v))
    state = replace(state, m=ParameterSet(new_m), v=ParameterSet(new_v), t=t)
    return ParameterSet(new_p), state
