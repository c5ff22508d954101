"""Label-aware similarity: a one-output perceptron per layer scores each node;
two nodes are similar when their scores agree.

The scoring path squashes with tanh, the supervised loss reads the same
affine output through a sigmoid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numeric import AffineParams, affine, bce_loss, bce_logit_grad, sigmoid


@dataclass
class SimilarityMeasure:
    layers: list[AffineParams]

    def __post_init__(self):
        for p in self.layers:
            if p.out_dim != 1:
                raise ValueError("similarity perceptrons have a single output")

    def head(self, layer: int) -> AffineParams:
        return self.layers[layer]


def _head(measure: SimilarityMeasure | AffineParams, layer: int) -> AffineParams:
    return measure if isinstance(measure, AffineParams) else measure.head(layer)


def node_logit(measure, layer: int, h) -> np.ndarray:
    """Raw perceptron output; scalar for a vector input, one per row otherwise."""
    out = affine(_head(measure, layer), h)
    return out[..., 0]


def node_score(measure, layer: int, h):
    return np.tanh(node_logit(measure, layer, h))


def pair_distance(measure, layer: int, h_u, h_v):
    return np.abs(node_score(measure, layer, h_u) - node_score(measure, layer, h_v))


def pair_similarity(measure, layer: int, h_u, h_v):
    return 1.0 - pair_distance(measure, layer, h_u, h_v)


def similarity_loss(measure, layer: int, h, labels) -> float:
    """Mean BCE of ``sigmoid(perceptron(h))`` against the node labels."""
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    if h.shape[0] == 0:
        raise ValueError("similarity loss needs a non-empty batch")
    prob = sigmoid(node_logit(measure, layer, h))
    return float(np.mean(bce_loss(prob, labels)))


def similarity_loss_grad(head: AffineParams, h: np.ndarray, labels) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss value plus gradients w.r.t. the head's weight (1 x d) and bias (1,)."""
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    n = h.shape[0]
    if n == 0:
        raise ValueError("similarity loss needs a non-empty batch")
    prob = sigmoid(affine(head, h)[:, 0])
    loss = float(np.mean(bce_loss(prob, labels)))
    dz = bce_logit_grad(prob, labels) / n
    return loss, (dz @ h)[None, :], np.array([dz.sum()])
