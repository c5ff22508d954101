"""Independent reference implementations used as test oracles."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from care_gnn.model import forward, loss_and_grad


def brute_top_p(ids, sims, p):
    """Stable sort by (-similarity, id), keep ceil(p*N) with exact rational arithmetic."""
    pairs = sorted(zip(ids, sims), key=lambda t: (-t[1], t[0]))
    n = len(pairs)
    if p == 0 or n == 0:
        return []
    k = math.ceil(Fraction(p) * n - Fraction(1, 10**9))
    k = min(max(k, 1), n)
    return [i for i, _ in pairs[:k]]


def pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = 0.0
    for a in pos:
        for b in neg:
            wins += 1.0 if a > b else 0.5 if a == b else 0.0
    return wins / (len(pos) * len(neg))


def jitter_biases(model, seed, scale=0.1):
    """Move every bias off zero so no ReLU input sits exactly on its kink.

    With zero biases a center whose top-p selection is empty has a relation
    pre-activation of exactly 0, where central differences see half a slope.
    """
    rng = np.random.default_rng(seed)
    for name, w in model.params.items():
        if name.endswith(".bias"):
            w[...] = rng.normal(0.0, scale, size=w.shape)
    return model


def finite_difference_check(model, graph, batch, labels, lambda_1=2.0, lambda_2=1e-3, step=1e-5):
    """Largest relative error between analytic and central-difference gradients, per parameter.

    The neighbor selection of the unperturbed forward pass is frozen so the
    loss is differentiable in every parameter.
    """
    record = forward(model, graph, batch)
    frozen = record.selections
    _, grads = loss_and_grad(model, record, labels, lambda_1, lambda_2)

    def total():
        rec = forward(model, graph, batch, selections=frozen)
        return loss_and_grad(model, rec, labels, lambda_1, lambda_2)[0].total

    worst = {}
    for name, w in model.params.items():
        if not model.trainable(name):
            continue
        flat = w.reshape(-1)
        g = grads[name].reshape(-1)
        err = 0.0
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            up = total()
            flat[i] = old - step
            down = total()
            flat[i] = old
            num = (up - down) / (2 * step)
            err = max(err, abs(g[i] - num) / max(abs(g[i]) + abs(num), 1e-6))
        worst[name] = err
    return worst


def plain_mean_gnn(features, adjacency, params, num_relations):
    """Single-layer mean-aggregation GNN written node by node with Python loops."""
    out = []
    for v in range(features.shape[0]):
        mixed = params["layer0.self.weight"] @ features[v] + params["layer0.self.bias"]
        for r in range(num_relations):
            nbrs = adjacency[r][v]
            mean = np.mean([features[u] for u in nbrs], axis=0) if nbrs else np.zeros(features.shape[1])
            rel = np.maximum(params[f"layer0.rel{r}.weight"] @ mean + params[f"layer0.rel{r}.bias"], 0)
            mixed = mixed + rel / num_relations
        h = np.maximum(params["layer0.combine.weight"] @ mixed + params["layer0.combine.bias"], 0)
        z = params["classifier.weight"][0] @ h + params["classifier.bias"][0]
        out.append(1.0 / (1.0 + math.exp(-z)))
    return np.array(out)
