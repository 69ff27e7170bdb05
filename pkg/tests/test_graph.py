import numpy as np
import pytest

from cglkit.errors import ParseError, ValidationError
from cglkit.graph import (build_graph, canonical_edges, class_members,
                          induced_subgraph, load_graph, load_graph_dir,
                          save_graph)

from conftest import random_multilabel_graph


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestLoadGraph:
    def test_three_node_example(self, tmp_path):
        edges = _write(tmp_path, "e.tsv", "0\t1\n1\t2\n")
        labels = _write(tmp_path, "l.tsv", "0\t0\n1\t0,1\n2\t1\n")
        g = load_graph(edges, labels)
        assert g.node_count == 3
        assert g.class_count == 2
        assert g.edge_count == 2
        assert g.labels.tolist() == [[1, 0], [1, 1], [0, 1]]

    def test_duplicate_and_reversed_edges_collapse(self, tmp_path):
        edges = _write(tmp_path, "e.tsv", "0\t1\n1\t0\n0\t1\n")
        labels = _write(tmp_path, "l.tsv", "0\t0\n1\t1\n")
        g = load_graph(edges, labels)
        assert g.edge_count == 1
        assert g.edges.tolist() == [[0, 1]]

    def test_self_loops_stripped(self, tmp_path):
        edges = _write(tmp_path, "e.tsv", "0\t0\n0\t1\n")
        labels = _write(tmp_path, "l.tsv", "0\t0\n1\t1\n")
        assert load_graph(edges, labels).edge_count == 1

    def test_comments_and_crlf(self, tmp_path):
        edges = _write(tmp_path, "e.tsv", "# a comment\r\n0\t1\r\n")
        labels = _write(tmp_path, "l.tsv", "0\t0\r\n1\t1\r\n")
        assert load_graph(edges, labels).edge_count == 1

    def test_empty_label_list_allowed(self, tmp_path):
        edges = _write(tmp_path, "e.tsv", "0\t1\n")
        labels = _write(tmp_path, "l.tsv", "0\t\n1\t1\n")
        g = load_graph(edges, labels)
        assert g.labels[0].sum() == 0

    def test_parse_error_carries_line_number(self, tmp_path):
        edges = _write(tmp_path, "e.tsv", "0\t1\n")
        labels = _write(tmp_path, "l.tsv", "0\t0\nnope\t1\n")
        with pytest.raises(ParseError) as exc:
            load_graph(edges, labels)
        assert exc.value.line_no == 2

    def test_unknown_edge_endpoint_rejected(self, tmp_path):
        edges = _write(tmp_path, "e.tsv", "0\t7\n")
        labels = _write(tmp_path, "l.tsv", "0\t0\n1\t1\n")
        with pytest.raises(ValidationError):
            load_graph(edges, labels)

    def test_strict_mode_rejects_gaps(self, tmp_path):
        edges = _write(tmp_path, "e.tsv", "")
        labels = _write(tmp_path, "l.tsv", "0\t0\n2\t1\n")
        with pytest.raises(ValidationError):
            load_graph(edges, labels)
        g = load_graph(edges, labels, strict=False)
        assert g.node_count == 3
        assert g.labels[1].sum() == 0

    def test_placeholder_features_are_wrapped_one_hot(self, tmp_path):
        edges = _write(tmp_path, "e.tsv", "0\t1\n")
        labels = _write(tmp_path, "l.tsv", "0\t0\n1\t1\n")
        g = load_graph(edges, labels)
        assert g.features.shape == (2, 32)
        assert g.features[1, 1] == 1.0 and g.features[1].sum() == 1.0

    def test_feature_file_roundtrip(self, tmp_path):
        edges = _write(tmp_path, "e.tsv", "0\t1\n")
        labels = _write(tmp_path, "l.tsv", "0\t0\n1\t1\n")
        feats = _write(tmp_path, "f.tsv", "0\t0.5 -1.25\n1\t3 4\n")
        g = load_graph(edges, labels, feats)
        assert g.features.tolist() == [[0.5, -1.25], [3.0, 4.0]]

    def test_feature_dim_mismatch_rejected(self, tmp_path):
        edges = _write(tmp_path, "e.tsv", "0\t1\n")
        labels = _write(tmp_path, "l.tsv", "0\t0\n1\t1\n")
        feats = _write(tmp_path, "f.tsv", "0\t0.5\n1\t3 4\n")
        with pytest.raises(ParseError):
            load_graph(edges, labels, feats)


class TestBuildGraph:
    def test_non_binary_labels_rejected(self):
        with pytest.raises(ValidationError):
            build_graph([], [[0, 2]])

    def test_edge_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            build_graph([(0, 5)], [[1], [1]])

    def test_arrays_frozen(self, path_graph):
        with pytest.raises(ValueError):
            path_graph.labels[0, 0] = 0

    def test_canonical_edges_orders_and_dedups(self):
        e = canonical_edges(np.array([[2, 1], [1, 2], [3, 3], [0, 1]]))
        assert e.tolist() == [[0, 1], [1, 2]]


class TestClassMembers:
    def test_read_off_matrix(self, path_graph):
        assert class_members(path_graph, 0).tolist() == [0, 1]
        assert class_members(path_graph, 1).tolist() == [1, 2]

    def test_empty_class(self):
        g = build_graph([], [[1, 0], [1, 0]])
        assert class_members(g, 1).size == 0

    def test_out_of_range(self, path_graph):
        with pytest.raises(ValidationError):
            class_members(path_graph, 2)

    def test_union_covers_labeled_nodes(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            g = random_multilabel_graph(rng, ensure_labels=False)
            union = set()
            for c in range(g.class_count):
                union |= set(class_members(g, c).tolist())
            labeled = set(np.flatnonzero(g.labels.sum(axis=1) > 0).tolist())
            assert union == labeled


class TestInducedSubgraph:
    def test_path_endpoints_have_no_edge(self, path_graph):
        sub, id_map = induced_subgraph(path_graph, {0, 2})
        assert sub.node_count == 2
        assert sub.edge_count == 0
        assert id_map.to_parent.tolist() == [0, 2]

    def test_all_nodes_identity(self, path_graph):
        sub, id_map = induced_subgraph(path_graph, range(3))
        assert sub.edges.tolist() == path_graph.edges.tolist()
        assert id_map.to_parent.tolist() == [0, 1, 2]
        assert np.array_equal(sub.labels, path_graph.labels)

    def test_triangle_pair_keeps_edge(self, triangle_graph):
        sub, _ = induced_subgraph(triangle_graph, {0, 1})
        assert sub.node_count == 2
        assert sub.edge_count == 1

    def test_out_of_range_node(self, path_graph):
        with pytest.raises(ValidationError):
            induced_subgraph(path_graph, {0, 9})

    def test_id_map_inverse(self, path_graph):
        _, id_map = induced_subgraph(path_graph, {1, 2})
        for local in range(len(id_map)):
            assert id_map.parent_to_local(id_map.local_to_parent(local)) == local

    def test_mapped_edges_exist_in_parent(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            g = random_multilabel_graph(rng)
            k = int(rng.integers(1, g.node_count + 1))
            nodes = rng.choice(g.node_count, size=k, replace=False)
            sub, id_map = induced_subgraph(g, nodes)
            assert sub.edge_count <= g.edge_count
            parent_edges = {tuple(e) for e in g.edges.tolist()}
            for u, v in sub.edges:
                pu, pv = id_map.local_to_parent(u), id_map.local_to_parent(v)
                assert (min(pu, pv), max(pu, pv)) in parent_edges


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    g = random_multilabel_graph(rng, n_nodes=9, n_classes=3)
    save_graph(g, tmp_path / "g")
    back = load_graph_dir(tmp_path / "g")
    assert back.edges.tolist() == g.edges.tolist()
    assert np.array_equal(back.labels, g.labels)
    assert np.array_equal(back.features, g.features)
