import numpy as np
import pytest

from cglkit.graph import build_graph


@pytest.fixture
def path_graph():
    """0-1-2 path, two classes, the label rows used across spec examples."""
    return build_graph([(0, 1), (1, 2)], [[1, 0], [1, 1], [0, 1]])


@pytest.fixture
def triangle_graph():
    return build_graph([(0, 1), (1, 2), (0, 2)], [[1, 0], [1, 1], [0, 1]])


def random_multilabel_graph(rng, n_nodes=None, n_classes=None, p_edge=0.25,
                            ensure_labels=True):
    """Small random graph for property tests; every node gets >= 1 label."""
    n = n_nodes or int(rng.integers(3, 12))
    c = n_classes or int(rng.integers(2, 5))
    labels = (rng.random((n, c)) < 0.4).astype(np.int8)
    if ensure_labels:
        for v in range(n):
            if labels[v].sum() == 0:
                labels[v, rng.integers(0, c)] = 1
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)
             if rng.random() < p_edge]
    return build_graph(edges, labels)
