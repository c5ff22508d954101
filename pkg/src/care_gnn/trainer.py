"""Mini-batch training with under-sampling and per-epoch threshold updates."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np

from .evaluation import evaluate
from .graph import DataSplit, MultiRelationGraph
from .model import CareModel, ModelShape, forward, loss_and_grad
from .numeric import AdamState, NumericError, adam_step
from .selector import ThresholdController, ThresholdEvent, per_node_mean_distance

logger = logging.getLogger(__name__)

NEIGHBOR_MODES = {"adaptive": 0.5, "fixed-half": 0.5, "fixed-all": 1.0}


class TrainingAborted(RuntimeError):
    def __init__(self, epoch: int, batch: int, reason: str):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"epoch {epoch} batch {batch}: {reason}")


@dataclass
class TrainConfig:
    num_layers: int = 1
    epochs: int = 30
    batch_size: int = 1024
    embedding_dim: int = 64
    learning_rate: float = 0.01
    lambda_1: float = 2.0
    lambda_2: float = 0.001
    tau: float = 0.02
    undersample_ratio: float = 1.0
    aggregator: str = "threshold"
    seed: int = 0
    eval_every: int = 3
    neighbor_mode: str = "adaptive"
    rl_terminate: bool = True

    def validate(self) -> None:
        if self.num_layers < 1 or self.epochs < 1 or self.embedding_dim < 1:
            raise ValueError("num_layers, epochs and embedding_dim must be at least 1")
        if self.lambda_1 < 0 or self.lambda_2 < 0:
            raise ValueError("loss weights must be non-negative")
        if self.undersample_ratio <= 0:
            raise ValueError("undersample_ratio must be positive")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.eval_every < 1:
            raise ValueError("eval_every must be at least 1")
        if self.neighbor_mode not in NEIGHBOR_MODES:
            raise ValueError(f"neighbor_mode must be one of {sorted(NEIGHBOR_MODES)}")
        if self.batch_size < 1 + self.undersample_ratio:
            raise ValueError("batch_size must be at least 1 + undersample_ratio")
        ModelShape(1, 1, self.embedding_dim, self.num_layers, self.aggregator)

    def model_shape(self, graph: MultiRelationGraph) -> ModelShape:
        return ModelShape(graph.feature_dim, graph.num_relations, self.embedding_dim,
                          self.num_layers, self.aggregator)

    def make_controller(self, num_relations: int) -> ThresholdController:
        return ThresholdController(self.num_layers, num_relations, tau=self.tau,
                                   initial=NEIGHBOR_MODES[self.neighbor_mode], seed=self.seed,
                                   adaptive=self.neighbor_mode == "adaptive",
                                   terminate=self.rl_terminate)


def build_model(graph: MultiRelationGraph, config: TrainConfig) -> CareModel:
    config.validate()
    shape = config.model_shape(graph)
    return CareModel.create(shape, config.seed, controller=config.make_controller(graph.num_relations))


def undersample_batches(train_ids, labels, batch_size: int, ratio: float, seed: int,
                        epoch: int) -> list[np.ndarray]:
    """Balanced batches covering every training positive once.

    Each batch holds ``floor(batch_size / (1 + ratio))`` positives (the last
    may hold fewer) and ``round(positives * ratio)`` negatives. Negatives are
    drawn without replacement within the epoch, cycling through fresh
    permutations if the epoch needs more than exist.
    """
    if batch_size < 1 + ratio:
        raise ValueError("batch_size must be at least 1 + ratio")
    if ratio <= 0:
        raise ValueError("ratio must be positive")
    train_ids = np.asarray(train_ids, dtype=np.int64)
    lab = np.asarray(labels)[train_ids]
    pos = train_ids[lab == 1]
    neg = train_ids[lab == 0]
    if pos.size == 0 or neg.size == 0:
        raise ValueError("both classes must be present in the training set")
    rng = np.random.default_rng((seed, 2, epoch))
    per_batch = int(math.floor(batch_size / (1.0 + ratio)))
    pos = rng.permutation(pos)
    chunks = [pos[i:i + per_batch] for i in range(0, pos.size, per_batch)]
    n_negs = [max(1, int(math.floor(c.size * ratio + 0.5))) for c in chunks]
    needed = sum(n_negs)
    pool = np.concatenate([rng.permutation(neg) for _ in range(-(-needed // neg.size))])
    batches, start = [], 0
    for chunk, k in zip(chunks, n_negs):
        batches.append(np.concatenate([chunk, pool[start:start + k]]))
        start += k
    return batches


@dataclass
class EpochReport:
    epoch: int
    loss_gnn: float
    loss_simi: float
    loss_care: float
    thresholds: list[ThresholdEvent]
    relation_weights: list[list[float]] | None = None
    eval: dict[str, dict] = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {"type": "epoch", "epoch": self.epoch, "loss_gnn": self.loss_gnn,
               "loss_simi": self.loss_simi, "loss_care": self.loss_care,
               "thresholds": [e.as_dict() for e in self.thresholds],
               "relation_weights": self.relation_weights}
        if self.eval:
            out["eval"] = self.eval
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def _positive_distances(record, labels, num_layers: int, num_relations: int, sink):
    batch = record.batch
    is_pos = labels[batch] == 1
    for l, layer in enumerate(record.layers):
        if l == num_layers - 1:
            rows_of_batch = np.arange(batch.size)
        else:
            rows_of_batch = np.searchsorted(layer.centers, batch)
        want = np.zeros(layer.centers.size, dtype=bool)
        want[rows_of_batch[is_pos]] = True
        for r in range(num_relations):
            rows, means = per_node_mean_distance(layer.selections[r])
            sink[l][r].extend(means[want[rows]].tolist())


def train(model: CareModel, graph: MultiRelationGraph, split: DataSplit, config: TrainConfig, *,
          optimizer: AdamState | None = None, start_epoch: int = 0,
          on_epoch: Callable[[EpochReport], None] | None = None) -> tuple[CareModel, list[EpochReport]]:
    """Run epochs ``start_epoch .. config.epochs - 1``; reports are numbered from 1."""
    config.validate()
    shape = model.shape
    labels = graph.labels
    if optimizer is None:
        optimizer = AdamState.for_params(model.params)
    reports = []
    for epoch in range(start_epoch, config.epochs):
        batches = undersample_batches(split.train_ids, labels, config.batch_size,
                                      config.undersample_ratio, config.seed, epoch)
        dists = [[[] for _ in range(shape.num_relations)] for _ in range(shape.num_layers)]
        sums = np.zeros(3)
        for b, batch in enumerate(batches):
            record = forward(model, graph, batch)
            losses, grads = loss_and_grad(model, record, labels[batch], config.lambda_1, config.lambda_2)
            if not math.isfinite(losses.total):
                raise TrainingAborted(epoch + 1, b, "non-finite loss")
            try:
                adam_step(model.params, grads, optimizer, config.learning_rate)
            except NumericError as exc:
                raise TrainingAborted(epoch + 1, b, str(exc)) from None
            _positive_distances(record, labels, shape.num_layers, shape.num_relations, dists)
            sums += (losses.gnn, losses.simi, losses.total)
        means = sums / len(batches)

        avg = [[float(np.mean(d)) if d else None for d in row] for row in dists]
        events = model.controller.end_epoch(avg)
        weights = None
        if shape.variant != "attention":
            weights = [model.relation_weight_values(l).tolist() for l in range(shape.num_layers)]
        report = EpochReport(epoch + 1, float(means[0]), float(means[1]), float(means[2]), events, weights)
        due = (epoch + 1) % config.eval_every == 0 or epoch + 1 == config.epochs
        if due and split.test_ids.size:
            labels_test = labels[split.test_ids]
            if labels_test.min() != labels_test.max():
                report.eval = {head: evaluate(model, graph, split.test_ids, head).as_dict()
                               for head in ("gnn", "simi")}
        logger.info("epoch %d: L_CARE %.4f", report.epoch, report.loss_care)
        reports.append(report)
        if on_epoch is not None:
            on_epoch(report)
    return model, reports


def write_jsonl(path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
