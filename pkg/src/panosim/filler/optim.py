"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def like(cls, param: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(param, dtype=np.float64),
                   np.zeros_like(param, dtype=np.float64))


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> np.ndarray:
    """One Adam update; mutates `state`, returns the updated parameter."""
    if param.shape != grad.shape:
        raise ValueError(f"param {param.shape} vs grad {grad.shape}")
    g = grad.astype(np.float64)
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * g
    state.v = beta2 * state.v + (1.0 - beta2) * g * g
    m_hat = state.m / (1.0 - beta1 ** state.t)
    v_hat = state.v / (1.0 - beta2 ** state.t)
    return (param.astype(np.float64)
            - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.dtype)


class AdamOptimizer:
    """Adam over a network's (layer, key) parameter handles."""

    def __init__(self, handles):
        self.handles = list(handles)
        self.states = [AdamState.like(layer.params[key]) for layer, key in self.handles]

    def step(self, lr: float):
        for (layer, key), state in zip(self.handles, self.states):
            layer.params[key] = adam_step(
                layer.params[key], layer.grads[key], state, lr
            )
