"""Adam optimizer and seedable parameter initialization."""

from __future__ import annotations

import math

import numpy as np

from .errors import ContractError, ShapeError
from .tensor import Tensor


class AdamState:
    """Per-parameter first/second moment buffers and the shared step counter."""

    def __init__(self, params: list[Tensor], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]


def adam_step(params: list[Tensor], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update from the gradients on ``params``.

    Parameters with ``grad is None`` are treated as zero-gradient and
    left unchanged (their moments still decay).
    """
    if lr <= 0:
        raise ContractError(f"adam_step needs lr > 0, got {lr}")
    if len(params) != len(state.m):
        raise ContractError(
            f"adam_step: {len(params)} params vs state for {len(state.m)}")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for i, p in enumerate(params):
        if state.m[i].shape != p.data.shape:
            raise ShapeError(
                f"adam_step: param {i} shape {p.data.shape} vs state {state.m[i].shape}")
        g = p.grad if p.grad is not None else 0.0
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.data.dtype, copy=False)


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...],
                   fan_in: int, fan_out: int, dtype) -> Tensor:
    """uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)), trainable."""
    a = math.sqrt(6.0 / (fan_in + fan_out))
    data = rng.uniform(-a, a, size=shape).astype(dtype)
    return Tensor(data, requires_grad=True)


def zeros_param(shape: tuple[int, ...], dtype) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def ones_param(shape: tuple[int, ...], dtype) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=True)
