"""Dense numeric primitives: affine maps, activations, binary cross-entropy,
L2 penalty and the Adam optimizer.

Parameters live in flat ``dict[str, np.ndarray]`` groups keyed by dotted
names (``layer0.rel1.weight``); gradients use the same keys.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

PROB_EPS = 1e-7


class NumericError(FloatingPointError):
    """A non-finite value reached the optimizer."""


@dataclass
class AffineParams:
    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError(f"inconsistent affine shapes {self.weight.shape} / {self.bias.shape}")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


def affine(params: AffineParams, x: np.ndarray) -> np.ndarray:
    """``weight @ x + bias`` for a vector, or row-wise for a matrix of inputs."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.in_dim:
        raise ValueError(f"expected input dim {params.in_dim}, got {x.shape[-1]}")
    return x @ params.weight.T + params.bias


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


ACTIVATIONS = {"tanh": np.tanh, "relu": relu, "sigmoid": sigmoid}


def activation(kind: str, x):
    try:
        fn = ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    return fn(np.asarray(x, dtype=np.float64))


def bce_loss(prob, label):
    """Elementwise binary cross-entropy with probabilities clamped to [eps, 1-eps]."""
    p = np.clip(np.asarray(prob, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    y = np.asarray(label, dtype=np.float64)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


def bce_logit_grad(prob, label) -> np.ndarray:
    """d bce(sigmoid(z), y) / dz, zero where the clamp is active."""
    p = np.asarray(prob, dtype=np.float64)
    grad = p - np.asarray(label, dtype=np.float64)
    return np.where((p < PROB_EPS) | (p > 1.0 - PROB_EPS), 0.0, grad)


def is_penalized(name: str) -> bool:
    """Every parameter except biases enters the L2 term."""
    return not name.endswith(".bias")


def l2_penalty(params: Mapping[str, np.ndarray], lam: float,
               grads: dict[str, np.ndarray] | None = None) -> float:
    """``lam * sum(w**2)`` over non-bias entries; adds ``2*lam*w`` into ``grads`` if given."""
    if lam < 0:
        raise ValueError("L2 weight must be non-negative")
    total = 0.0
    for name, w in params.items():
        if not is_penalized(name):
            continue
        total += float(np.sum(w * w))
        if grads is not None and lam:
            grads[name] = grads.get(name, 0.0) + 2.0 * lam * w
    return lam * total


def zeros_like(params: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


@dataclass
class AdamState:
    first: dict[str, np.ndarray]
    second: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Mapping[str, np.ndarray], **kwargs) -> "AdamState":
        return cls(zeros_like(params), zeros_like(params), **kwargs)


def adam_step(params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray],
              state: AdamState, learning_rate: float) -> None:
    """In-place bias-corrected Adam update. Missing gradients count as zero.

    Raises :class:`NumericError` before touching anything if a gradient is
    not finite.
    """
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if np.shape(g) != params[name].shape:
            raise ValueError(f"gradient shape mismatch for {name!r}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name!r}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, w in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(w)
        m = state.first[name]
        v = state.second[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        w -= learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
