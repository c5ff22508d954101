"""ROC-AUC, macro recall and per-head model evaluation."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .graph import MultiRelationGraph
from .model import predict, similarity_head_probs


def _check_binary(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D and of equal length")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    y = y.astype(np.int64)
    if y.min(initial=1) == y.max(initial=0) or y.size == 0:
        raise ValueError("both classes must be present")
    return s, y


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the mean of their positions."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    boundaries = np.flatnonzero(np.diff(sorted_vals)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [values.size]])
    # mean of positions start+1 .. end
    group_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(values.size)
    ranks[order] = np.repeat(group_rank, ends - starts)
    return ranks


def roc_auc(scores, labels) -> float:
    """P(random positive outranks random negative), ties counted one half."""
    s, y = _check_binary(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    rank_sum = float(average_ranks(s)[y == 1].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def per_class_recall(scores, labels, threshold: float = 0.5) -> tuple[float, float]:
    s, y = _check_binary(scores, labels)
    pred = (s >= threshold).astype(np.int64)
    return tuple(float(np.mean(pred[y == c] == c)) for c in (0, 1))


def recall_macro(scores, labels, threshold: float = 0.5) -> float:
    r0, r1 = per_class_recall(scores, labels, threshold)
    return (r0 + r1) / 2.0


@dataclass
class MetricsReport:
    auc: float
    recall_macro: float
    recall_benign: float
    recall_fraud: float
    count: int
    source: str

    def as_dict(self) -> dict:
        return asdict(self)


def metrics_from_scores(scores, labels, source: str, threshold: float = 0.5) -> MetricsReport:
    r0, r1 = per_class_recall(scores, labels, threshold)
    return MetricsReport(roc_auc(scores, labels), (r0 + r1) / 2.0, r0, r1, len(labels), source)


def evaluate(model, graph: MultiRelationGraph, node_ids, head: str = "gnn") -> MetricsReport:
    """Metrics for the GNN output (``gnn``) or the first-layer similarity perceptron (``simi``)."""
    node_ids = np.asarray(node_ids, dtype=np.int64)
    if head == "gnn":
        scores = predict(model, graph, node_ids)
        source = "gnn_head"
    elif head == "simi":
        scores = similarity_head_probs(model, graph, node_ids)
        source = "simi_head"
    else:
        raise ValueError(f"unknown head {head!r}")
    return metrics_from_scores(scores, graph.labels[node_ids], source)
