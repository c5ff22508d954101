import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from care_gnn.graph import (GraphFormatError, InfeasibleConfigError, SyntheticConfig, edge_feature_similarity,
                            feature_similarity, from_edge_lists, generate_synthetic, label_similarity,
                            load_graph, merge_relations, read_graph, save_graph, split)


def write_nodes(path, rows):
    path.write_text("".join(f"{i}\t{y}\t{','.join(map(str, f))}\n" for i, y, f in rows))
    return path


@pytest.fixture
def two_nodes(tmp_path):
    nodes = write_nodes(tmp_path / "nodes.tsv", [(0, 0, [0.0, 1.0]), (1, 1, [1.0, 0.0])])
    return tmp_path, nodes


class TestReadGraph:
    def test_single_edge_is_symmetrised(self, two_nodes):
        tmp, nodes = two_nodes
        (tmp / "r.tsv").write_text("0\t1\n")
        g, (cleanup,) = read_graph(nodes, [tmp / "r.tsv"])
        assert g.neighbors(0, 0).tolist() == [1]
        assert g.neighbors(0, 1).tolist() == [0]
        assert cleanup.symmetrized == 1

    def test_self_loop_dropped(self, two_nodes):
        tmp, nodes = two_nodes
        (tmp / "r.tsv").write_text("0\t0\n")
        g, (cleanup,) = read_graph(nodes, [tmp / "r.tsv"])
        assert g.neighbors(0, 0).tolist() == []
        assert cleanup.self_loops == 1

    def test_duplicates_counted(self, two_nodes):
        tmp, nodes = two_nodes
        (tmp / "r.tsv").write_text("0\t1\n0\t1\n1\t0\n")
        g, (cleanup,) = read_graph(nodes, [tmp / "r.tsv"])
        assert g.num_edges(0) == 1
        assert cleanup.duplicates == 1

    def test_dimension_mismatch_reports_line(self, tmp_path):
        nodes = write_nodes(tmp_path / "n.tsv", [(0, 0, [1, 2, 3]), (1, 0, [1, 2, 3, 4])])
        (tmp_path / "r.tsv").write_text("")
        with pytest.raises(GraphFormatError) as info:
            read_graph(nodes, [tmp_path / "r.tsv"])
        assert info.value.line == 2
        assert "dimension" in str(info.value)

    def test_bad_label(self, tmp_path):
        nodes = write_nodes(tmp_path / "n.tsv", [(0, 2, [1.0])])
        (tmp_path / "r.tsv").write_text("")
        with pytest.raises(GraphFormatError):
            read_graph(nodes, [tmp_path / "r.tsv"])

    def test_dangling_edge(self, two_nodes):
        tmp, nodes = two_nodes
        (tmp / "r.tsv").write_text("0\t5\n")
        with pytest.raises(GraphFormatError, match="dangling"):
            read_graph(nodes, [tmp / "r.tsv"])

    def test_missing_file(self, two_nodes):
        tmp, nodes = two_nodes
        with pytest.raises(FileNotFoundError, match="nope.tsv"):
            read_graph(nodes, [tmp / "nope.tsv"])

    def test_empty_relation_file(self, two_nodes):
        tmp, nodes = two_nodes
        (tmp / "r.tsv").write_text("")
        g = load_graph(nodes, [tmp / "r.tsv"])
        assert g.num_edges(0) == 0
        assert g.relation_names == ("r",)


class TestNeighbors:
    def test_triangle_path_sorted(self):
        g = from_edge_lists(np.zeros((3, 1)), [0, 0, 0], [np.array([[2, 1], [1, 0]])])
        assert g.neighbors(0, 1).tolist() == [0, 2]

    def test_isolated(self):
        g = from_edge_lists(np.zeros((3, 1)), [0, 0, 0], [np.array([[0, 1]])])
        assert g.neighbors(0, 2).tolist() == []

    def test_unknown_node(self):
        g = from_edge_lists(np.zeros((2, 1)), [0, 0], [np.array([[0, 1]])])
        with pytest.raises(IndexError):
            g.neighbors(0, 2)


class TestRoundTrip:
    def test_save_load_idempotent(self, tmp_path):
        g = generate_synthetic(SyntheticConfig(num_nodes=80, feature_dim=5, seed=4))
        paths = [tmp_path / f"{n}.tsv" for n in g.relation_names]
        save_graph(g, tmp_path / "nodes.tsv", paths)
        first = [p.read_bytes() for p in [tmp_path / "nodes.tsv", *paths]]
        g2 = load_graph(tmp_path / "nodes.tsv", paths, g.relation_names)
        assert g2.same_as(g)
        save_graph(g2, tmp_path / "nodes.tsv", paths)
        assert [p.read_bytes() for p in [tmp_path / "nodes.tsv", *paths]] == first

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), max_size=40), st.randoms())
    def test_edge_order_irrelevant(self, edges, rnd):
        shuffled = list(edges)
        rnd.shuffle(shuffled)
        feats = np.zeros((10, 1))
        a = from_edge_lists(feats, [0] * 10, [np.array(edges).reshape(-1, 2)])
        b = from_edge_lists(feats, [0] * 10, [np.array([(v, u) for u, v in shuffled]).reshape(-1, 2)])
        assert a.same_as(b)


class TestStatistics:
    def test_label_similarity_examples(self):
        g = from_edge_lists(np.zeros((3, 1)), [1, 1, 0], [np.array([[0, 1]]), np.array([[0, 2]])])
        assert label_similarity(g, 0) == 1.0
        assert label_similarity(g, 1) == 0.0

    def test_empty_relation_raises(self):
        g = from_edge_lists(np.zeros((2, 1)), [0, 1], [np.zeros((0, 2))])
        with pytest.raises(ValueError):
            label_similarity(g, 0)

    def test_feature_similarity_limits(self):
        assert edge_feature_similarity(np.array([1.0, 2.0]), np.array([1.0, 2.0]))[0] == 1.0
        assert edge_feature_similarity(np.array([0.0]), np.array([1e6]))[0] == pytest.approx(0.0)

    def test_feature_similarity_hand_case(self):
        x = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [3.0, 0.0]])
        g = from_edge_lists(x, [0, 0, 1, 1], [np.array([[0, 1], [1, 2], [0, 3]])])
        # squared distances 1, 1, 9 over d = 2
        expected = (np.exp(-0.5) + np.exp(-0.5) + np.exp(-4.5)) / 3
        assert feature_similarity(g, 0) == pytest.approx(expected, abs=1e-15)

    def test_merge_relations(self):
        g = from_edge_lists(np.zeros((3, 1)), [0, 0, 1], [np.array([[0, 1]]), np.array([[0, 1], [1, 2]])])
        m = merge_relations(g)
        assert m.relation_names == ("ALL",)
        assert m.num_edges(0) == 2


class TestSplit:
    def test_stratification(self):
        g = from_edge_lists(np.zeros((100, 1)), [1] * 10 + [0] * 90, [np.zeros((0, 2))])
        s = split(g, 0.4, seed=3)
        train_labels = g.labels[s.train_ids]
        assert (train_labels == 1).sum() == 4
        assert (train_labels == 0).sum() == 36
        assert np.intersect1d(s.train_ids, s.test_ids).size == 0
        assert s.train_ids.size + s.test_ids.size == 100

    def test_deterministic(self):
        g = from_edge_lists(np.zeros((50, 1)), [1] * 5 + [0] * 45, [np.zeros((0, 2))])
        a, b = split(g, 0.4, 9), split(g, 0.4, 9)
        assert np.array_equal(a.train_ids, b.train_ids)


class TestGenerator:
    @pytest.mark.parametrize("h", [0.9, 0.3, 0.05])
    def test_homophily_target(self, h):
        g = generate_synthetic(SyntheticConfig(num_nodes=1000, homophily=(h,), mean_degree=(10,), seed=1))
        assert abs(label_similarity(g, 0) - h) <= 0.05

    def test_zero_overlap_separable(self):
        g = generate_synthetic(SyntheticConfig(num_nodes=1000, feature_overlap=0.0, seed=2))
        x = g.features[:, 0]
        order = np.argsort(x)
        y = g.labels[order]
        # accuracy of "predict fraud above cut" for every cut position
        fraud_above = y[::-1].cumsum()[::-1]
        benign_below = np.concatenate([[0], np.cumsum(1 - y)[:-1]])
        best = ((fraud_above + benign_below) / y.size).max()
        assert best > 0.95

    def test_deterministic(self):
        cfg = SyntheticConfig(num_nodes=300, seed=11)
        assert generate_synthetic(cfg).same_as(generate_synthetic(cfg))

    def test_exact_fraud_count(self):
        g = generate_synthetic(SyntheticConfig(num_nodes=200, fraud_fraction=0.15))
        assert g.labels.sum() == 30

    def test_infeasible(self):
        with pytest.raises(InfeasibleConfigError):
            generate_synthetic(SyntheticConfig(num_nodes=10, fraud_fraction=0.1, homophily=(1.0,),
                                               mean_degree=(2,)))
