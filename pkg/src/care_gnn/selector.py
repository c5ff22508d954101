"""Similarity-aware neighbor selection.

``top_p_select`` keeps the ``ceil(p * N)`` most similar neighbors of a node.
``ThresholdController`` adapts one threshold per (layer, relation) with a
greedy +/- tau bandit driven by epoch-over-epoch neighbor distance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

TERMINAL_WINDOW = 10
TERMINAL_BOUND = 2
_ROUND_DIGITS = 12


def keep_count(p: float, n: int) -> int:
    """Number of neighbors kept out of ``n`` at threshold ``p``.

    ``ceil(p * n)``, ignoring float noise just above an integer (0.3 * 10
    keeps 3, not 4), and at least one neighbor whenever ``p > 0``.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"threshold {p} outside [0, 1]")
    if n <= 0 or p == 0.0:
        return 0
    x = p * n
    k = math.ceil(x)
    if k - x > 1.0 - 1e-9:
        k -= 1
    return min(max(k, 1), n)


def keep_counts(p: float, degrees: np.ndarray) -> np.ndarray:
    """Vectorised :func:`keep_count` over an array of neighbor counts."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"threshold {p} outside [0, 1]")
    degrees = np.asarray(degrees, dtype=np.int64)
    if p == 0.0:
        return np.zeros_like(degrees)
    x = p * degrees
    k = np.ceil(x).astype(np.int64)
    k[k - x > 1.0 - 1e-9] -= 1
    return np.where(degrees > 0, np.clip(k, 1, degrees), 0)


def top_p_select(neighbor_ids: Sequence[int], similarities: Sequence[float], p: float) -> np.ndarray:
    """Ids of the ``keep_count(p, N)`` most similar neighbors, most similar first.

    Ties in similarity are broken by ascending id.
    """
    ids = np.asarray(neighbor_ids, dtype=np.int64)
    sims = np.asarray(similarities, dtype=np.float64)
    if ids.shape != sims.shape or ids.ndim != 1:
        raise ValueError("neighbor ids and similarities must be 1-D and of equal length")
    k = keep_count(p, ids.shape[0])
    order = np.lexsort((ids, -sims))
    return ids[order[:k]]


@dataclass
class Selection:
    """Top-p result for a set of centers under one relation.

    Arrays are aligned per selected edge and grouped by center row, most
    similar first within each group.
    """

    center_rows: np.ndarray
    neighbor_ids: np.ndarray
    distances: np.ndarray
    num_centers: int

    def counts(self) -> np.ndarray:
        return np.bincount(self.center_rows, minlength=self.num_centers)


def gather_neighbors(indptr: np.ndarray, indices: np.ndarray, centers: np.ndarray):
    """Flatten the adjacency of ``centers``: (center_row, neighbor_id) per edge."""
    starts = indptr[centers]
    deg = indptr[centers + 1] - starts
    rows = np.repeat(np.arange(centers.shape[0]), deg)
    offsets = np.arange(rows.shape[0]) - np.repeat(np.cumsum(deg) - deg, deg)
    return rows, indices[np.repeat(starts, deg) + offsets], deg


def select_neighbors(indptr: np.ndarray, indices: np.ndarray, centers: np.ndarray,
                     node_scores, p: float) -> Selection:
    """Vectorised ``top_p_select`` for every center under one relation.

    ``node_scores`` maps node ids to similarity-head scores (an array indexed
    by node id); similarity is ``1 - |score_u - score_v|``.
    """
    centers = np.asarray(centers, dtype=np.int64)
    rows, nbrs, deg = gather_neighbors(indptr, indices, centers)
    dist = np.abs(node_scores[centers][rows] - node_scores[nbrs])
    sims = 1.0 - dist
    order = np.lexsort((nbrs, -sims, rows))
    rows, nbrs, dist = rows[order], nbrs[order], dist[order]
    keep = keep_counts(p, deg)
    rank = np.arange(rows.shape[0]) - np.repeat(np.cumsum(deg) - deg, deg)
    mask = rank < keep[rows]
    return Selection(rows[mask], nbrs[mask], dist[mask], centers.shape[0])


def per_node_mean_distance(selection: Selection) -> tuple[np.ndarray, np.ndarray]:
    """(center rows with at least one selected neighbor, their mean distance)."""
    counts = selection.counts()
    sums = np.bincount(selection.center_rows, weights=selection.distances, minlength=selection.num_centers)
    has = counts > 0
    return np.flatnonzero(has), sums[has] / counts[has]


def average_distance(per_node_distances: Sequence[Sequence[float]]) -> float | None:
    """Mean over nodes of each node's mean selected-neighbor distance.

    Nodes without selected neighbors are skipped; ``None`` when none remain.
    """
    means = [float(np.mean(d)) for d in per_node_distances if len(d) > 0]
    if not means:
        return None
    return float(np.mean(means))


def rl_reward(g_prev: float, g_curr: float) -> int:
    """+1 when the average neighbor distance did not grow, else -1."""
    return 1 if g_prev - g_curr >= 0 else -1


def is_terminated(history: Sequence[int]) -> bool:
    if len(history) < TERMINAL_WINDOW:
        return False
    return abs(sum(history[-TERMINAL_WINDOW:])) <= TERMINAL_BOUND


def clamp_threshold(p: float) -> float:
    return round(min(1.0, max(0.0, p)), _ROUND_DIGITS)


@dataclass
class ArmState:
    threshold: float = 0.5
    g_prev: float | None = None
    history: list[int] = field(default_factory=list)
    terminated: bool = False


@dataclass
class ThresholdEvent:
    layer: int
    relation: int
    threshold: float
    avg_distance: float | None
    reward: int | None
    terminated: bool

    def as_dict(self) -> dict:
        return {"layer": self.layer, "relation": self.relation, "p": self.threshold,
                "G": self.avg_distance, "reward": self.reward, "terminated": self.terminated}


class ThresholdController:
    """One greedy bandit arm per (layer, relation).

    ``adaptive=False`` pins every threshold at its initial value (the
    fixed-half / fixed-all baselines). ``terminate=False`` keeps the bandit
    running past the convergence rule.
    """

    def __init__(self, num_layers: int, num_relations: int, tau: float = 0.02,
                 initial: float = 0.5, seed: int = 0, adaptive: bool = True,
                 terminate: bool = True):
        if not 0.0 <= tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        self.num_layers = num_layers
        self.num_relations = num_relations
        self.tau = tau
        self.adaptive = adaptive
        self.terminate = terminate
        self.seed = seed
        self.arms = [[ArmState(threshold=clamp_threshold(initial)) for _ in range(num_relations)]
                     for _ in range(num_layers)]
        self._rng = np.random.default_rng((seed, 1))

    def threshold(self, layer: int, relation: int) -> float:
        return self.arms[layer][relation].threshold

    def thresholds(self, layer: int) -> np.ndarray:
        return np.array([a.threshold for a in self.arms[layer]])

    def rl_step(self, layer: int, relation: int, reward: int | None) -> float:
        """Move the threshold by ``reward * tau``; ``None`` means a random first action."""
        arm = self.arms[layer][relation]
        if arm.terminated:
            logger.warning("threshold (%d, %d) is terminated; step ignored", layer, relation)
            return arm.threshold
        if reward is None:
            reward = int(self._rng.choice((-1, 1)))
        arm.threshold = clamp_threshold(arm.threshold + reward * self.tau)
        arm.history.append(reward)
        return arm.threshold

    def end_epoch(self, avg_distances: Sequence[Sequence[float | None]]) -> list[ThresholdEvent]:
        """Apply one epoch of bandit updates given per-(layer, relation) average distances."""
        events = []
        for l in range(self.num_layers):
            for r in range(self.num_relations):
                arm = self.arms[l][r]
                g = avg_distances[l][r]
                reward = None
                if self.adaptive and not arm.terminated:
                    if self.terminate and is_terminated(arm.history):
                        arm.terminated = True
                    elif g is not None:
                        if arm.g_prev is None:
                            self.rl_step(l, r, None)
                        else:
                            reward = rl_reward(arm.g_prev, g)
                            self.rl_step(l, r, reward)
                        reward = arm.history[-1]
                        arm.g_prev = g
                events.append(ThresholdEvent(l, r, arm.threshold, g, reward, arm.terminated))
        return events

    @property
    def all_terminated(self) -> bool:
        return all(a.terminated for row in self.arms for a in row)

    def state_dict(self) -> dict:
        return {
            "num_layers": self.num_layers, "num_relations": self.num_relations,
            "tau": self.tau, "adaptive": self.adaptive, "terminate": self.terminate,
            "seed": self.seed, "rng": self._rng.bit_generator.state,
            "arms": [[{"threshold": a.threshold, "g_prev": a.g_prev, "history": list(a.history),
                       "terminated": a.terminated} for a in row] for row in self.arms],
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "ThresholdController":
        ctl = cls(state["num_layers"], state["num_relations"], tau=state["tau"],
                  seed=state["seed"], adaptive=state["adaptive"], terminate=state["terminate"])
        ctl._rng.bit_generator.state = state["rng"]
        ctl.arms = [[ArmState(a["threshold"], a["g_prev"], list(a["history"]), a["terminated"])
                     for a in row] for row in state["arms"]]
        return ctl
