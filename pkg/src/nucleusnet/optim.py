"""Glorot initialization, the Adam optimizer, and L2 weight regularization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, as_array

# Parameter kinds L2 regularization applies to by default: convolution
# kernels only, excluding biases and batchnorm scale/shift.
DEFAULT_L2_KINDS = frozenset({"conv_weight"})


def glorot_init(shape, fan_in: int, fan_out: int, rng: np.random.Generator,
                dtype=np.float32) -> Tensor:
    """Uniform on [-a, a] with a = sqrt(6 / (fan_in + fan_out))."""
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype))


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


@dataclass
class RegConfig:
    """L2 penalty lambda * sum(||w||^2) over parameters of the given kinds."""

    lambda_: float = 1e-4
    applies_to: frozenset = DEFAULT_L2_KINDS

    def __post_init__(self):
        if self.lambda_ < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lambda_}")
        self.applies_to = frozenset(self.applies_to)


def add_l2_grad(params, cfg: RegConfig) -> float:
    """Add 2*lambda*w to the gradient of every regularized parameter.

    Returns the penalty value lambda * sum(||w||^2) to fold into the
    reported loss. Parameters whose kind is outside cfg.applies_to (and
    non-trainable entries) are untouched.
    """
    penalty = 0.0
    if cfg.lambda_ == 0.0:
        return penalty
    for p in params.trainable():
        if p.kind not in cfg.applies_to:
            continue
        w = as_array(p.value)
        penalty += float(np.sum(w.astype(np.float64) ** 2))
        scale = np.asarray(2.0 * cfg.lambda_, dtype=w.dtype)
        if p.grad is None:
            p.grad = Tensor(scale * w)
        else:
            p.grad = Tensor(as_array(p.grad) + scale * w)
    return cfg.lambda_ * penalty


@dataclass
class AdamState:
    """Adam optimizer state: step count plus per-parameter moment tensors."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def init_adam(params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    """Zero-moment Adam state covering every trainable parameter."""
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    for p in params.trainable():
        a = as_array(p.value)
        state.m[p.name] = np.zeros_like(a)
        state.v[p.name] = np.zeros_like(a)
    return state


def adam_step(params, state: AdamState) -> AdamState:
    """One Adam update with bias correction over all trainable parameters.

    Gradients must have been populated by the caller since the previous
    step; interleave backward and adam_step. Parameters with no gradient
    set are treated as zero-gradient (moments still decay).
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t
    for p in params.trainable():
        w = as_array(p.value)
        g = np.zeros_like(w) if p.grad is None else as_array(p.grad)
        dt = w.dtype
        m = state.m[p.name] = np.asarray(b1, dt) * state.m[p.name] + np.asarray(1 - b1, dt) * g
        v = state.v[p.name] = np.asarray(b2, dt) * state.v[p.name] + np.asarray(1 - b2, dt) * (g * g)
        mhat = m / np.asarray(bias1, dt)
        vhat = v / np.asarray(bias2, dt)
        update = np.asarray(state.lr, dt) * mhat / (np.sqrt(vhat) + np.asarray(state.eps, dt))
        p.value = Tensor(w - update)
    return state
