"""Multi-relation graphs: storage, TSV I/O, synthetic generation, splits and
camouflage statistics.

Adjacency is kept in CSR form per relation (``indptr``/``indices`` pairs),
symmetric, sorted, without duplicates or self-loops.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """Raised for malformed or inconsistent graph input."""

    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None):
        self.path = None if path is None else str(path)
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class InfeasibleConfigError(ValueError):
    """The requested synthetic graph cannot be realised."""


@dataclass(frozen=True, eq=False)
class MultiRelationGraph:
    features: np.ndarray
    labels: np.ndarray
    indptr: tuple[np.ndarray, ...]
    indices: tuple[np.ndarray, ...]
    relation_names: tuple[str, ...]

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if labels.shape != (features.shape[0],):
            raise ValueError("one label per node required")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        if len(self.indptr) == 0 or len(self.indptr) != len(self.indices):
            raise ValueError("at least one relation required")
        if len(self.relation_names) != len(self.indptr):
            raise ValueError("one name per relation required")
        for arr in (features, labels):
            arr.flags.writeable = False
        indptr = tuple(np.asarray(p, dtype=np.int64) for p in self.indptr)
        indices = tuple(np.asarray(i, dtype=np.int64) for i in self.indices)
        for p, i in zip(indptr, indices):
            if p.shape != (features.shape[0] + 1,) or p[-1] != i.shape[0]:
                raise ValueError("CSR arrays do not match the node count")
            p.flags.writeable = False
            i.flags.writeable = False
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "relation_names", tuple(self.relation_names))

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_relations(self) -> int:
        return len(self.indptr)

    def neighbors(self, relation: int, node: int) -> np.ndarray:
        if not 0 <= relation < self.num_relations:
            raise IndexError(f"relation index {relation} out of range")
        if not 0 <= node < self.num_nodes:
            raise IndexError(f"node id {node} out of range")
        p = self.indptr[relation]
        return self.indices[relation][p[node]:p[node + 1]]

    def degrees(self, relation: int) -> np.ndarray:
        return np.diff(self.indptr[relation])

    def num_edges(self, relation: int) -> int:
        """Undirected edge count (each edge counted once)."""
        return int(self.indices[relation].shape[0] // 2)

    def edge_array(self, relation: int) -> np.ndarray:
        """Undirected edges as an (E, 2) array with ``u < v``, lexicographically sorted."""
        p = self.indptr[relation]
        src = np.repeat(np.arange(self.num_nodes), np.diff(p))
        dst = self.indices[relation]
        keep = src < dst
        return np.stack([src[keep], dst[keep]], axis=1)

    def same_as(self, other: MultiRelationGraph) -> bool:
        if self.relation_names != other.relation_names:
            return False
        if not (np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels)):
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.indptr, other.indptr)) and all(
            np.array_equal(a, b) for a, b in zip(self.indices, other.indices))


@dataclass
class EdgeCleanup:
    """Counts of edges altered while building adjacency from raw edge lists."""

    self_loops: int = 0
    duplicates: int = 0
    symmetrized: int = 0


def csr_from_edges(num_nodes: int, src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray, EdgeCleanup]:
    """Symmetric, sorted, deduplicated CSR adjacency from a directed edge list."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    report = EdgeCleanup()
    loops = src == dst
    report.self_loops = int(loops.sum())
    src, dst = src[~loops], dst[~loops]

    directed = np.unique(src * num_nodes + dst)
    both = np.unique(np.concatenate([directed, (directed % num_nodes) * num_nodes + directed // num_nodes]))
    report.duplicates = int(src.shape[0] - directed.shape[0])
    report.symmetrized = int(both.shape[0] - directed.shape[0])

    rows = both // num_nodes
    cols = both % num_nodes
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, cols, report


def from_edge_lists(features, labels, edge_lists: Sequence[np.ndarray],
                    relation_names: Sequence[str] | None = None) -> MultiRelationGraph:
    """Build a graph from per-relation (E, 2) edge arrays (any direction, duplicates allowed)."""
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    indptr, indices = [], []
    for edges in edge_lists:
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ValueError("edge endpoint out of range")
        p, i, _ = csr_from_edges(n, edges[:, 0], edges[:, 1])
        indptr.append(p)
        indices.append(i)
    if relation_names is None:
        relation_names = [f"r{k}" for k in range(len(edge_lists))]
    return MultiRelationGraph(features, labels, tuple(indptr), tuple(indices), tuple(relation_names))


# --------------------------------------------------------------------------
# TSV I/O


def _read_nodes(path: Path) -> tuple[np.ndarray, np.ndarray]:
    rows: dict[int, tuple[int, list[float]]] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise GraphFormatError(f"expected 3 tab-separated fields, got {len(parts)}", path, lineno)
            try:
                node = int(parts[0])
                label = int(parts[1])
                feats = [float(v) for v in parts[2].split(",")]
            except ValueError as exc:
                raise GraphFormatError(f"cannot parse line ({exc})", path, lineno) from None
            if label not in (0, 1):
                raise GraphFormatError(f"label {label} outside {{0,1}}", path, lineno)
            if node < 0:
                raise GraphFormatError(f"negative node id {node}", path, lineno)
            if node in rows:
                raise GraphFormatError(f"duplicate node id {node}", path, lineno)
            if not all(math.isfinite(v) for v in feats):
                raise GraphFormatError("non-finite feature value", path, lineno)
            if dim is None:
                dim = len(feats)
            elif len(feats) != dim:
                raise GraphFormatError(
                    f"feature dimension mismatch: expected {dim}, got {len(feats)}", path, lineno)
            rows[node] = (label, feats)
    if not rows:
        raise GraphFormatError("no nodes", path)
    n = len(rows)
    missing = set(range(n)) - rows.keys()
    if missing:
        raise GraphFormatError(f"node ids are not dense 0..{n - 1}; missing {min(missing)}", path)
    labels = np.array([rows[i][0] for i in range(n)], dtype=np.int64)
    features = np.array([rows[i][1] for i in range(n)], dtype=np.float64)
    return features, labels


def _read_edges(path: Path, num_nodes: int) -> np.ndarray:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) != 2:
                raise GraphFormatError(f"expected 2 fields, got {len(parts)}", path, lineno)
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError("non-integer node id", path, lineno) from None
            for x in (u, v):
                if not 0 <= x < num_nodes:
                    raise GraphFormatError(f"dangling node id {x}", path, lineno)
            pairs.append((u, v))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def read_graph(nodes_path, relation_paths, relation_names=None) -> tuple[MultiRelationGraph, list[EdgeCleanup]]:
    """Load a graph and return it with per-relation cleanup counts."""
    nodes_path = Path(nodes_path)
    relation_paths = [Path(p) for p in relation_paths]
    if not relation_paths:
        raise GraphFormatError("at least one relation file is required")
    for p in [nodes_path, *relation_paths]:
        if not p.is_file():
            raise FileNotFoundError(f"no such file: {p}")
    features, labels = _read_nodes(nodes_path)
    n = features.shape[0]
    indptr, indices, reports = [], [], []
    for path in relation_paths:
        edges = _read_edges(path, n)
        p, i, rep = csr_from_edges(n, edges[:, 0], edges[:, 1])
        indptr.append(p)
        indices.append(i)
        reports.append(rep)
        if rep.self_loops or rep.duplicates:
            logger.warning("%s: dropped %d self-loops and %d duplicate edges",
                           path, rep.self_loops, rep.duplicates)
    if relation_names is None:
        relation_names = [p.stem for p in relation_paths]
    graph = MultiRelationGraph(features, labels, tuple(indptr), tuple(indices), tuple(relation_names))
    return graph, reports


def load_graph(nodes_path, relation_paths, relation_names=None) -> MultiRelationGraph:
    return read_graph(nodes_path, relation_paths, relation_names)[0]


def format_real(x: float) -> str:
    """Shortest representation that round-trips to the same double."""
    r = repr(float(x))
    return "0.0" if r == "-0.0" else r


def save_graph(graph: MultiRelationGraph, nodes_path, relation_paths) -> None:
    """Write the TSV node file and one edge file per relation.

    Output is byte-stable: ascending ids, each undirected edge once as
    ``u<TAB>v`` with ``u < v``.
    """
    relation_paths = list(relation_paths)
    if len(relation_paths) != graph.num_relations:
        raise ValueError("one output path per relation required")
    with open(nodes_path, "w", encoding="utf-8", newline="\n") as fh:
        for i in range(graph.num_nodes):
            feats = ",".join(format_real(v) for v in graph.features[i])
            fh.write(f"{i}\t{int(graph.labels[i])}\t{feats}\n")
    for r, path in enumerate(relation_paths):
        edges = graph.edge_array(r)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(f"{u}\t{v}\n" for u, v in edges)


def merge_relations(graph: MultiRelationGraph, name: str = "ALL") -> MultiRelationGraph:
    """Homogeneous view: union of every relation's edges as one relation."""
    edges = np.concatenate([graph.edge_array(r) for r in range(graph.num_relations)])
    return from_edge_lists(graph.features, graph.labels, [edges], [name])


# --------------------------------------------------------------------------
# camouflage statistics


def _require_edges(graph: MultiRelationGraph, relation: int) -> np.ndarray:
    edges = graph.edge_array(relation)
    if edges.shape[0] == 0:
        raise ValueError(f"relation {graph.relation_names[relation]!r} has no edges")
    return edges


def label_similarity(graph: MultiRelationGraph, relation: int) -> float:
    """Fraction of undirected edges whose endpoints share a label."""
    edges = _require_edges(graph, relation)
    same = graph.labels[edges[:, 0]] == graph.labels[edges[:, 1]]
    return float(same.mean())


def edge_feature_similarity(x_u: np.ndarray, x_v: np.ndarray) -> np.ndarray:
    """Per-edge Gaussian-kernel similarity ``exp(-||x_u - x_v||^2 / d)``."""
    x_u = np.atleast_2d(x_u)
    x_v = np.atleast_2d(x_v)
    d = x_u.shape[1]
    sq = np.sum((x_u - x_v) ** 2, axis=1)
    return np.exp(-sq / d)


def feature_similarity(graph: MultiRelationGraph, relation: int) -> float:
    edges = _require_edges(graph, relation)
    sims = edge_feature_similarity(graph.features[edges[:, 0]], graph.features[edges[:, 1]])
    return float(sims.mean())


# --------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class DataSplit:
    train_ids: np.ndarray
    test_ids: np.ndarray
    train_fraction: float


def split(graph: MultiRelationGraph, train_fraction: float, seed: int) -> DataSplit:
    """Stratified train/test split.

    Each class contributes ``round(fraction * class_size)`` training nodes,
    clipped so that every class keeps at least one node on both sides.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in (0, 1):
        members = np.flatnonzero(graph.labels == cls)
        if members.size == 0:
            raise ValueError(f"class {cls} is absent from the graph")
        members = rng.permutation(members)
        k = int(round(train_fraction * members.size))
        if members.size >= 2:
            k = min(max(k, 1), members.size - 1)
        else:
            k = 1
        train.append(members[:k])
        test.append(members[k:])
    return DataSplit(np.sort(np.concatenate(train)), np.sort(np.concatenate(test)), train_fraction)


# --------------------------------------------------------------------------
# synthetic generation


@dataclass
class SyntheticConfig:
    """Knobs for a camouflaged fraud graph.

    ``homophily[r]`` is the target fraction of same-label edges in relation
    ``r``; ``feature_overlap`` moves the fraud class mean toward the benign
    mean (1.0 gives identical class-conditional distributions).
    """

    num_nodes: int = 2000
    fraud_fraction: float = 0.15
    feature_dim: int = 16
    homophily: Sequence[float] = (0.9, 0.3, 0.05)
    mean_degree: Sequence[float] = (10.0, 10.0, 10.0)
    feature_overlap: float = 0.5
    seed: int = 0
    informative_features: int = 4
    class_separation: float = 4.0
    relation_names: Sequence[str] | None = None

    def validate(self) -> None:
        if self.num_nodes < 2:
            raise InfeasibleConfigError("num_nodes must be at least 2")
        if not 0.0 < self.fraud_fraction < 1.0:
            raise InfeasibleConfigError("fraud_fraction must lie in (0, 1)")
        if self.feature_dim < 1:
            raise InfeasibleConfigError("feature_dim must be positive")
        if not 1 <= self.informative_features <= self.feature_dim:
            raise InfeasibleConfigError("informative_features must lie in [1, feature_dim]")
        if len(self.homophily) != len(self.mean_degree) or not self.homophily:
            raise InfeasibleConfigError("homophily and mean_degree need one entry per relation")
        if any(not 0.0 <= h <= 1.0 for h in self.homophily):
            raise InfeasibleConfigError("homophily values must lie in [0, 1]")
        if any(d < 1 for d in self.mean_degree):
            raise InfeasibleConfigError("mean degree must be at least 1")
        if not 0.0 <= self.feature_overlap <= 1.0:
            raise InfeasibleConfigError("feature_overlap must lie in [0, 1]")


def _pair_count(n: int) -> int:
    return n * (n - 1) // 2


def _sample_same_class(rng: np.random.Generator, count: int, size: int) -> tuple[np.ndarray, np.ndarray]:
    """``count`` distinct unordered pairs (i < j) drawn uniformly from ``range(size)``."""
    if count > _pair_count(size):
        raise InfeasibleConfigError(f"need {count} distinct pairs among {size} nodes")
    keys = np.empty(0, dtype=np.int64)
    while keys.size < count:
        i = rng.integers(0, size, size=2 * (count - keys.size) + 8)
        j = rng.integers(0, size, size=i.size)
        ok = i != j
        lo, hi = np.minimum(i[ok], j[ok]), np.maximum(i[ok], j[ok])
        new = np.setdiff1d(np.unique(lo * size + hi), keys)
        need = count - keys.size
        if new.size > need:
            new = rng.choice(new, size=need, replace=False)
        keys = np.union1d(keys, new)
    return keys // size, keys % size


def _sample_cross(rng: np.random.Generator, count: int, n_a: int, n_b: int) -> tuple[np.ndarray, np.ndarray]:
    """``count`` distinct pairs from ``range(n_a) x range(n_b)``."""
    total = n_a * n_b
    if count > total:
        raise InfeasibleConfigError(f"need {count} cross-label pairs but only {total} exist")
    if count * 4 > total:
        keys = np.sort(rng.choice(total, size=count, replace=False))
    else:
        keys = np.empty(0, dtype=np.int64)
        while keys.size < count:
            new = np.setdiff1d(rng.integers(0, total, size=2 * (count - keys.size) + 8), keys)
            need = count - keys.size
            if new.size > need:
                new = rng.choice(new, size=need, replace=False)
            keys = np.union1d(keys, new)
    return keys // n_b, keys % n_b


def generate_synthetic(config: SyntheticConfig) -> MultiRelationGraph:
    """Draw a labelled multi-relation graph with controlled camouflage.

    Same-label edges are spread over the two classes in proportion to their
    number of possible pairs, so ``homophily = f**2 + (1 - f)**2`` reproduces
    label-independent wiring.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    n = config.num_nodes
    n_fraud = int(round(config.fraud_fraction * n))
    if n_fraud < 1 or n_fraud > n - 1:
        raise InfeasibleConfigError("fraud_fraction leaves one class empty")
    labels = np.zeros(n, dtype=np.int64)
    labels[rng.permutation(n)[:n_fraud]] = 1

    d = config.feature_dim
    k_inf = config.informative_features
    shift = np.zeros(d)
    shift[:k_inf] = config.class_separation * (1.0 - config.feature_overlap)
    # two mixture components per class, sharing offsets on the nuisance features
    offsets = np.zeros((2, d))
    if d > k_inf:
        offsets[:, k_inf:] = rng.normal(0.0, 1.0, size=(2, d - k_inf))
    component = rng.integers(0, 2, size=n)
    features = rng.normal(0.0, 1.0, size=(n, d)) + offsets[component]
    features[labels == 1] += shift

    members = [np.flatnonzero(labels == 0), np.flatnonzero(labels == 1)]
    sizes = [m.size for m in members]
    same_pairs = [_pair_count(s) for s in sizes]

    edge_lists = []
    for h, deg in zip(config.homophily, config.mean_degree):
        n_edges = int(round(n * deg / 2))
        if h == 1.0 and min(sizes) < 2:
            raise InfeasibleConfigError("homophily 1.0 needs at least two nodes in every class")
        n_same = int(round(h * n_edges))
        n_cross = n_edges - n_same
        if sum(same_pairs) == 0 and n_same > 0:
            raise InfeasibleConfigError("no same-label pairs available")
        # split same-label edges across classes by available pairs
        share = same_pairs[1] / sum(same_pairs) if sum(same_pairs) else 0.0
        n_ff = int(rng.binomial(n_same, share)) if n_same else 0
        n_ff = min(n_ff, same_pairs[1])
        n_bb = n_same - n_ff
        if n_bb > same_pairs[0]:
            n_ff += n_bb - same_pairs[0]
            n_bb = same_pairs[0]

        parts = []
        for cls, cnt in ((0, n_bb), (1, n_ff)):
            i, j = _sample_same_class(rng, cnt, sizes[cls])
            parts.append(np.stack([members[cls][i], members[cls][j]], axis=1))
        i, j = _sample_cross(rng, n_cross, sizes[0], sizes[1])
        parts.append(np.stack([members[0][i], members[1][j]], axis=1))
        edge_lists.append(np.concatenate(parts))

    names = config.relation_names or [f"rel{k}" for k in range(len(config.homophily))]
    return from_edge_lists(features, labels, edge_lists, names)
