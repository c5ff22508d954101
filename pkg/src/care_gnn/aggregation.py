"""Intra-relation mean aggregation and inter-relation combination.

All functions accept either one node (vectors) or a batch (one row per
node).
"""

from __future__ import annotations

import numpy as np

from .numeric import AffineParams, affine, relu

VARIANTS = ("threshold", "attention", "weight", "mean")


def neighbor_mean(neighbor_embeddings: np.ndarray, dim: int) -> np.ndarray:
    """Mean of the rows of ``neighbor_embeddings``; zero vector when there are none."""
    emb = np.asarray(neighbor_embeddings, dtype=np.float64).reshape(-1, dim)
    if emb.shape[0] == 0:
        return np.zeros(dim)
    return emb.mean(axis=0)


def intra_relation_aggregate(neighbor_embeddings: np.ndarray, params: AffineParams) -> np.ndarray:
    """``ReLU(W_r @ mean(selected neighbors) + b_r)`` for one center node."""
    return relu(affine(params, neighbor_mean(neighbor_embeddings, params.in_dim)))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def relation_weights(variant: str, *, thresholds=None, logits=None, attention=None,
                     self_embedding=None, relation_embeddings=None, num_relations: int | None = None) -> np.ndarray:
    """Inter-relation weights for one of the four variants.

    threshold: the current filtering thresholds, verbatim.
    mean:      ``1/R`` each.
    weight:    softmax of ``R`` learned scalars.
    attention: per node, softmax over relations of
               ``attention . concat(self_embedding, relation_embedding_r)``;
               ``relation_embeddings`` has shape (R, n, hidden) or (R, hidden).
    """
    if variant == "threshold":
        if thresholds is None:
            raise ValueError("threshold weights need the current thresholds")
        return np.asarray(thresholds, dtype=np.float64).copy()
    if variant == "mean":
        if num_relations is None:
            raise ValueError("mean weights need num_relations")
        return np.full(num_relations, 1.0 / num_relations)
    if variant == "weight":
        if logits is None:
            raise ValueError("weight variant needs the learned relation scalars")
        return softmax(logits)
    if variant == "attention":
        if attention is None or self_embedding is None or relation_embeddings is None:
            raise ValueError("attention weights need the attention vector and embeddings")
        attention = np.asarray(attention, dtype=np.float64)
        hidden = attention.shape[0] // 2
        rel = np.asarray(relation_embeddings, dtype=np.float64)
        scores = np.asarray(self_embedding) @ attention[:hidden]
        scores = scores[..., None] + np.moveaxis(rel @ attention[hidden:], 0, -1)
        return softmax(scores, axis=-1)
    raise ValueError(f"unknown aggregator variant {variant!r}")


def inter_relation_aggregate(center_embedding: np.ndarray, relation_embeddings: np.ndarray,
                             weights: np.ndarray, self_params: AffineParams,
                             combine_params: AffineParams) -> np.ndarray:
    """``ReLU(W_all @ (W_self @ h_v + sum_r w_r * h_{v,r}))``.

    ``relation_embeddings`` is (R, hidden) for one node or (R, n, hidden) for
    a batch; ``weights`` is (R,) or (n, R).
    """
    rel = np.asarray(relation_embeddings, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if rel.shape[0] != w.shape[-1]:
        raise ValueError("one weight per relation required")
    self_term = affine(self_params, center_embedding)
    if w.ndim == 1:
        mixed = np.tensordot(w, rel, axes=(0, 0))
    else:
        mixed = np.einsum("nr,rnh->nh", w, rel)
    return relu(affine(combine_params, self_term + mixed))
