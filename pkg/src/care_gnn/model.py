"""CARE model parameters, batched forward pass and hand-derived backward pass.

One layer does, for every center node and relation: score nodes with the
layer's similarity head, keep the top-p most similar neighbors, mean them,
transform (ReLU), then mix the relation embeddings with the transformed
center embedding and apply the combine transform (ReLU). A linear
classifier with a sigmoid reads the last layer.

Gradients stop at the neighbor selection and at threshold weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .aggregation import VARIANTS, softmax
from .graph import MultiRelationGraph
from .numeric import AffineParams, bce_loss, bce_logit_grad, l2_penalty, sigmoid
from .selector import Selection, ThresholdController, gather_neighbors, select_neighbors
from .similarity import SimilarityMeasure, similarity_loss_grad


@dataclass(frozen=True)
class ModelShape:
    feature_dim: int
    num_relations: int
    embedding_dim: int = 64
    num_layers: int = 1
    variant: str = "threshold"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown aggregator variant {self.variant!r}; choose from {VARIANTS}")
        if self.num_layers < 1 or self.embedding_dim < 1 or self.num_relations < 1:
            raise ValueError("layers, embedding size and relation count must be positive")

    def in_dim(self, layer: int) -> int:
        return self.feature_dim if layer == 0 else self.embedding_dim

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        h = self.embedding_dim
        shapes: dict[str, tuple[int, ...]] = {}
        for l in range(self.num_layers):
            d = self.in_dim(l)
            shapes[f"layer{l}.sim.weight"] = (1, d)
            shapes[f"layer{l}.sim.bias"] = (1,)
            for r in range(self.num_relations):
                shapes[f"layer{l}.rel{r}.weight"] = (h, d)
                shapes[f"layer{l}.rel{r}.bias"] = (h,)
            shapes[f"layer{l}.self.weight"] = (h, d)
            shapes[f"layer{l}.self.bias"] = (h,)
            shapes[f"layer{l}.combine.weight"] = (h, h)
            shapes[f"layer{l}.combine.bias"] = (h,)
            if self.variant == "weight":
                shapes[f"layer{l}.relation_logits"] = (self.num_relations,)
            elif self.variant == "attention":
                shapes[f"layer{l}.attention"] = (2 * h,)
        shapes["classifier.weight"] = (1, h)
        shapes["classifier.bias"] = (1,)
        return shapes


def init_params(shape: ModelShape, seed: int = 0, zero: bool = False) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases, N(0, 0.5^2) relation scalars."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, dims in shape.param_shapes().items():
        if zero or name.endswith(".bias"):
            params[name] = np.zeros(dims)
        elif name.endswith("relation_logits"):
            params[name] = rng.normal(0.0, 0.5, size=dims)
        elif name.endswith("attention"):
            limit = np.sqrt(6.0 / (dims[0] + 1))
            params[name] = rng.uniform(-limit, limit, size=dims)
        else:
            limit = np.sqrt(6.0 / (dims[0] + dims[1]))
            params[name] = rng.uniform(-limit, limit, size=dims)
    return params


class CareModel:
    """All trainable groups plus the threshold controller."""

    def __init__(self, shape: ModelShape, params: dict[str, np.ndarray],
                 controller: ThresholdController):
        expected = shape.param_shapes()
        if set(params) != set(expected):
            raise ValueError("parameter names do not match the model shape")
        for name, dims in expected.items():
            if params[name].shape != dims:
                raise ValueError(f"{name}: expected shape {dims}, got {params[name].shape}")
        if (controller.num_layers, controller.num_relations) != (shape.num_layers, shape.num_relations):
            raise ValueError("controller does not match the model shape")
        self.shape = shape
        self.params = params
        self.controller = controller

    @classmethod
    def create(cls, shape: ModelShape, seed: int = 0, *, zero: bool = False,
               controller: ThresholdController | None = None) -> "CareModel":
        if controller is None:
            controller = ThresholdController(shape.num_layers, shape.num_relations, seed=seed)
        return cls(shape, init_params(shape, seed, zero=zero), controller)

    def affine(self, prefix: str) -> AffineParams:
        return AffineParams(self.params[prefix + ".weight"], self.params[prefix + ".bias"])

    @property
    def similarity(self) -> SimilarityMeasure:
        return SimilarityMeasure([self.affine(f"layer{l}.sim") for l in range(self.shape.num_layers)])

    def relation_weight_values(self, layer: int) -> np.ndarray | None:
        """Current inter-relation weights when they are node-independent."""
        v = self.shape.variant
        if v == "threshold":
            return self.controller.thresholds(layer)
        if v == "mean":
            return np.full(self.shape.num_relations, 1.0 / self.shape.num_relations)
        if v == "weight":
            return softmax(self.params[f"layer{layer}.relation_logits"])
        return None

    def penalized_params(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.params.items() if self.trainable(k)}

    def trainable(self, name: str) -> bool:
        """Similarity heads above the first layer get no gradient at all."""
        return not (name.endswith((".sim.weight", ".sim.bias")) and not name.startswith("layer0."))


@dataclass
class LayerRecord:
    nodes_in: np.ndarray
    centers: np.ndarray
    center_rows: np.ndarray
    h_in: np.ndarray
    scores: np.ndarray
    selections: list[Selection]
    means: list[sp.csr_matrix]
    mean_out: list[np.ndarray]
    rel_pre: np.ndarray
    rel_out: np.ndarray
    self_out: np.ndarray
    weights: np.ndarray
    mixed: np.ndarray
    pre: np.ndarray
    out: np.ndarray


@dataclass
class ForwardRecord:
    batch: np.ndarray
    layers: list[LayerRecord]
    embeddings: np.ndarray
    logits: np.ndarray
    probs: np.ndarray
    raw_features: np.ndarray = field(repr=False, default=None)

    @property
    def selections(self) -> list[list[Selection]]:
        return [rec.selections for rec in self.layers]


def _mean_matrix(sel: Selection, nodes_in: np.ndarray) -> sp.csr_matrix:
    counts = sel.counts()
    cols = np.searchsorted(nodes_in, sel.neighbor_ids)
    vals = 1.0 / counts[sel.center_rows]
    return sp.csr_matrix((vals, (sel.center_rows, cols)), shape=(sel.num_centers, nodes_in.shape[0]))


def receptive_sets(graph: MultiRelationGraph, batch: np.ndarray, num_layers: int) -> list[np.ndarray]:
    """Node sets per layer: ``sets[L]`` is the batch, ``sets[l-1]`` adds all neighbors of ``sets[l]``."""
    sets = [None] * (num_layers + 1)
    sets[num_layers] = batch
    for l in range(num_layers, 0, -1):
        cur = sets[l]
        parts = [cur]
        for r in range(graph.num_relations):
            parts.append(gather_neighbors(graph.indptr[r], graph.indices[r], cur)[1])
        sets[l - 1] = np.unique(np.concatenate(parts))
    return sets


def forward(model: CareModel, graph: MultiRelationGraph, batch,
            selections: list[list[Selection]] | None = None) -> ForwardRecord:
    """Forward pass for the nodes in ``batch`` (unique ids, any order).

    Passing ``selections`` from an earlier record reuses that neighbor
    selection instead of recomputing top-p.
    """
    shape = model.shape
    if graph.feature_dim != shape.feature_dim or graph.num_relations != shape.num_relations:
        raise ValueError(
            f"model expects {shape.feature_dim} features and {shape.num_relations} relations, "
            f"graph has {graph.feature_dim} and {graph.num_relations}")
    batch = np.asarray(batch, dtype=np.int64)
    if batch.size and (batch.min() < 0 or batch.max() >= graph.num_nodes):
        raise IndexError("unknown node id in batch")
    if np.unique(batch).size != batch.size:
        raise ValueError("batch contains duplicate node ids")

    sets = receptive_sets(graph, batch, shape.num_layers)
    h_in = graph.features[sets[0]]
    params = model.params
    layers = []
    for l in range(shape.num_layers):
        nodes_in, centers = sets[l], sets[l + 1]
        center_rows = np.searchsorted(nodes_in, centers)
        sim_w, sim_b = params[f"layer{l}.sim.weight"], params[f"layer{l}.sim.bias"]
        scores = np.tanh(h_in @ sim_w[0] + sim_b[0])
        score_by_id = np.zeros(graph.num_nodes)
        score_by_id[nodes_in] = scores

        sels, means, mean_out, rel_pre = [], [], [], []
        for r in range(shape.num_relations):
            if selections is not None:
                sel = selections[l][r]
            else:
                sel = select_neighbors(graph.indptr[r], graph.indices[r], centers, score_by_id,
                                       model.controller.threshold(l, r))
            a = _mean_matrix(sel, nodes_in)
            m = np.asarray(a @ h_in)
            sels.append(sel)
            means.append(a)
            mean_out.append(m)
            rel_pre.append(m @ params[f"layer{l}.rel{r}.weight"].T + params[f"layer{l}.rel{r}.bias"])
        rel_pre = np.stack(rel_pre)
        rel_out = np.maximum(rel_pre, 0.0)
        self_out = h_in[center_rows] @ params[f"layer{l}.self.weight"].T + params[f"layer{l}.self.bias"]

        n = centers.shape[0]
        if shape.variant == "attention":
            att = params[f"layer{l}.attention"]
            h = shape.embedding_dim
            logits = (self_out @ att[:h])[:, None] + (rel_out @ att[h:]).T
            weights = softmax(logits, axis=1)
        else:
            weights = np.broadcast_to(model.relation_weight_values(l), (n, shape.num_relations)).copy()

        mixed = self_out + np.einsum("nr,rnh->nh", weights, rel_out)
        pre = mixed @ params[f"layer{l}.combine.weight"].T + params[f"layer{l}.combine.bias"]
        out = np.maximum(pre, 0.0)
        layers.append(LayerRecord(nodes_in, centers, center_rows, h_in, scores, sels, means, mean_out,
                                  rel_pre, rel_out, self_out, weights, mixed, pre, out))
        h_in = out

    logits = h_in @ params["classifier.weight"][0] + params["classifier.bias"][0]
    return ForwardRecord(batch, layers, h_in, logits, sigmoid(logits), graph.features[batch])


@dataclass
class LossBreakdown:
    gnn: float
    simi: float
    l2: float
    total: float


def compute_losses(probs, simi_loss: float, labels, lambda_1: float, lambda_2: float,
                   params) -> tuple[float, float]:
    """(L_GNN, L_CARE) with ``L_CARE = L_GNN + lambda_1 * L_simi + L2``."""
    gnn = float(np.mean(bce_loss(probs, labels)))
    return gnn, gnn + lambda_1 * simi_loss + l2_penalty(params, lambda_2)


def loss_and_grad(model: CareModel, record: ForwardRecord, labels, lambda_1: float,
                  lambda_2: float) -> tuple[LossBreakdown, dict[str, np.ndarray]]:
    """Exact gradient of the total loss with selections and threshold weights held fixed."""
    shape = model.shape
    params = model.params
    y = np.asarray(labels, dtype=np.float64)
    n = y.shape[0]
    if n != record.batch.shape[0]:
        raise ValueError("one label per batch node required")
    grads = {k: np.zeros_like(v) for k, v in params.items()}

    gnn = float(np.mean(bce_loss(record.probs, y)))
    dlogit = bce_logit_grad(record.probs, y) / n
    grads["classifier.weight"] += (dlogit @ record.embeddings)[None, :]
    grads["classifier.bias"] += dlogit.sum()
    d_out = dlogit[:, None] * params["classifier.weight"][0][None, :]

    h = shape.embedding_dim
    for l in range(shape.num_layers - 1, -1, -1):
        rec = record.layers[l]
        d_pre = d_out * (rec.pre > 0)
        grads[f"layer{l}.combine.weight"] += d_pre.T @ rec.mixed
        grads[f"layer{l}.combine.bias"] += d_pre.sum(axis=0)
        d_mixed = d_pre @ params[f"layer{l}.combine.weight"]
        d_self = d_mixed.copy()
        d_rel = rec.weights.T[:, :, None] * d_mixed[None, :, :]
        d_w = np.einsum("nh,rnh->nr", d_mixed, rec.rel_out)

        if shape.variant == "weight":
            sw = softmax(params[f"layer{l}.relation_logits"])
            g = d_w.sum(axis=0)
            grads[f"layer{l}.relation_logits"] += sw * (g - sw @ g)
        elif shape.variant == "attention":
            att = params[f"layer{l}.attention"]
            w = rec.weights
            d_e = w * (d_w - np.sum(w * d_w, axis=1, keepdims=True))
            grads[f"layer{l}.attention"][:h] += d_e.sum(axis=1) @ rec.self_out
            grads[f"layer{l}.attention"][h:] += np.einsum("nr,rnh->h", d_e, rec.rel_out)
            d_self += d_e.sum(axis=1)[:, None] * att[:h][None, :]
            d_rel += d_e.T[:, :, None] * att[h:][None, None, :]

        d_in = np.zeros_like(rec.h_in)
        for r in range(shape.num_relations):
            d_rpre = d_rel[r] * (rec.rel_pre[r] > 0)
            grads[f"layer{l}.rel{r}.weight"] += d_rpre.T @ rec.mean_out[r]
            grads[f"layer{l}.rel{r}.bias"] += d_rpre.sum(axis=0)
            if l > 0:
                d_in += np.asarray(rec.means[r].T @ (d_rpre @ params[f"layer{l}.rel{r}.weight"]))
        x_center = rec.h_in[rec.center_rows]
        grads[f"layer{l}.self.weight"] += d_self.T @ x_center
        grads[f"layer{l}.self.bias"] += d_self.sum(axis=0)
        if l > 0:
            d_in[rec.center_rows] += d_self @ params[f"layer{l}.self.weight"]
            d_out = d_in

    simi, gw, gb = similarity_loss_grad(model.affine("layer0.sim"), record.raw_features, y)
    grads["layer0.sim.weight"] += lambda_1 * gw
    grads["layer0.sim.bias"] += lambda_1 * gb

    l2 = l2_penalty(model.penalized_params(), lambda_2, grads)
    for name in params:
        if not model.trainable(name):
            grads[name][...] = 0.0
    return LossBreakdown(gnn, simi, l2, gnn + lambda_1 * simi + l2), grads


def predict(model: CareModel, graph: MultiRelationGraph, node_ids, chunk: int = 1024) -> np.ndarray:
    """Fraud probabilities under the current (or frozen) thresholds."""
    node_ids = np.asarray(node_ids, dtype=np.int64)
    out = np.empty(node_ids.shape[0])
    for start in range(0, node_ids.shape[0], chunk):
        part = node_ids[start:start + chunk]
        out[start:start + chunk] = forward(model, graph, part).probs
    return out


def similarity_head_probs(model: CareModel, graph: MultiRelationGraph, node_ids) -> np.ndarray:
    """``sigmoid`` of the first-layer similarity perceptron on raw features."""
    x = graph.features[np.asarray(node_ids, dtype=np.int64)]
    return sigmoid(x @ model.params["layer0.sim.weight"][0] + model.params["layer0.sim.bias"][0])
