"""Multi-label graph data model, file ingestion, and induced subgraphs.

A graph is a static undirected structure over 0-based contiguous node ids,
with a dense real feature matrix and a dense binary label matrix. All arrays
are frozen after construction, so instances are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError

DEFAULT_FEATURE_DIM = 32


@dataclass(frozen=True)
class MultiLabelGraph:
    """Undirected graph with per-node feature rows and binary label rows.

    ``edges`` is an (E, 2) int64 array with u < v, lexicographically sorted
    and deduplicated. ``labels`` is (N, C) with 0/1 entries; ``features`` is
    (N, D) float64.
    """

    node_count: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        for arr in (self.edges, self.features, self.labels):
            arr.setflags(write=False)

    @property
    def edge_count(self) -> int:
        return self.edges.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def label_sets(self):
        """Per-node label sets as a list of frozensets of class ids."""
        return [frozenset(np.flatnonzero(self.labels[v]).tolist()) for v in range(self.node_count)]

    def label_csr(self):
        """Labels as sorted CSR (indptr, indices), both int64."""
        rows, cols = np.nonzero(self.labels)
        counts = np.bincount(rows, minlength=self.node_count)
        indptr = np.zeros(self.node_count + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return indptr, cols.astype(np.int64)


@dataclass(frozen=True)
class NodeIdMap:
    """Bijection between subgraph-local ids and parent-graph ids."""

    to_parent: np.ndarray
    _to_local: dict = field(repr=False)

    def local_to_parent(self, local_id: int) -> int:
        return int(self.to_parent[local_id])

    def parent_to_local(self, parent_id: int) -> int:
        return self._to_local[int(parent_id)]

    def __len__(self):
        return self.to_parent.shape[0]

    @classmethod
    def from_parent_ids(cls, parent_ids: np.ndarray) -> "NodeIdMap":
        parent_ids = np.asarray(parent_ids, dtype=np.int64)
        parent_ids.setflags(write=False)
        return cls(parent_ids, {int(p): i for i, p in enumerate(parent_ids)})


def build_graph(edges, labels, features=None, feature_dim=DEFAULT_FEATURE_DIM) -> MultiLabelGraph:
    """Construct a validated graph from raw components.

    Edges are canonicalized (undirected pairs stored once with u < v,
    self-loops dropped, duplicates merged). When ``features`` is None a
    deterministic placeholder is used: the one-hot of ``node_id % feature_dim``
    (identity-like rows, wrapped when the graph outgrows ``feature_dim``).
    """
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValidationError("label matrix must be 2-dimensional")
    if not np.isin(labels, (0, 1)).all():
        raise ValidationError("label matrix contains non-binary entries")
    labels = labels.astype(np.int8)
    n = labels.shape[0]

    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        bad = edges[(edges < 0) | (edges >= n)].flat[0]
        raise ValidationError(f"edge endpoint {bad} out of range for {n} nodes")
    edges = canonical_edges(edges)

    if features is None:
        features = np.zeros((n, feature_dim), dtype=np.float64)
        if n:
            features[np.arange(n), np.arange(n) % feature_dim] = 1.0
    else:
        features = np.asarray(features, dtype=np.float64)
        if features.shape[0] != n:
            raise ValidationError(
                f"feature rows ({features.shape[0]}) != label rows ({n})"
            )
    return MultiLabelGraph(
        node_count=n,
        edges=edges,
        features=features,
        labels=labels,
        class_count=labels.shape[1],
    )


def canonical_edges(edges: np.ndarray) -> np.ndarray:
    """Sort endpoints within each pair, drop self-loops, dedup, sort rows."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    lo = edges.min(axis=1)
    hi = edges.max(axis=1)
    keep = lo != hi
    pairs = np.stack([lo[keep], hi[keep]], axis=1)
    if pairs.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    return np.unique(pairs, axis=0)


def class_members(g: MultiLabelGraph, c: int) -> np.ndarray:
    """Sorted ids of the nodes whose label row has a 1 at class ``c``."""
    if not 0 <= c < g.class_count:
        raise ValidationError(f"class id {c} out of range (class_count={g.class_count})")
    return np.flatnonzero(g.labels[:, c]).astype(np.int64)


def induced_subgraph(g: MultiLabelGraph, nodes) -> tuple[MultiLabelGraph, NodeIdMap]:
    """Subgraph on ``nodes`` with exactly the edges internal to the set.

    Isolated members are kept. Feature and label rows are copied verbatim;
    label projection is the partitioner's concern.
    """
    nodes = np.unique(np.asarray(list(nodes), dtype=np.int64))
    if nodes.size and (nodes.min() < 0 or nodes.max() >= g.node_count):
        raise ValidationError("subgraph node id out of range")
    local_of = np.full(g.node_count, -1, dtype=np.int64)
    local_of[nodes] = np.arange(nodes.size, dtype=np.int64)
    if g.edge_count:
        u, v = g.edges[:, 0], g.edges[:, 1]
        keep = (local_of[u] >= 0) & (local_of[v] >= 0)
        sub_edges = np.stack([local_of[u[keep]], local_of[v[keep]]], axis=1)
    else:
        sub_edges = np.empty((0, 2), dtype=np.int64)
    sub = MultiLabelGraph(
        node_count=int(nodes.size),
        edges=canonical_edges(sub_edges),
        features=g.features[nodes].copy(),
        labels=g.labels[nodes].copy(),
        class_count=g.class_count,
    )
    return sub, NodeIdMap.from_parent_ids(nodes)


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield line_no, line


def _parse_int(path, line_no, token, what):
    try:
        return int(token)
    except ValueError:
        raise ParseError(path, line_no, f"expected integer {what}, got {token!r}") from None


def load_graph(edge_path, label_path, feature_path=None,
               feature_dim=DEFAULT_FEATURE_DIM, strict=True) -> MultiLabelGraph:
    """Load a graph from the documented tab-separated file formats.

    Node ids must be 0-based contiguous integers; with ``strict`` (default),
    a gap or duplicate in the label file is rejected. Both-direction edge
    listings collapse to one stored edge; self-loops are dropped (they are
    re-added during adjacency normalization by the model layer).
    """
    rows = {}
    max_class = -1
    for line_no, line in _read_lines(label_path):
        parts = line.split("\t")
        if len(parts) not in (1, 2):
            raise ParseError(label_path, line_no, "expected 'node_id<TAB>c1,c2,...'")
        node_id = _parse_int(label_path, line_no, parts[0], "node id")
        if node_id in rows:
            raise ParseError(label_path, line_no, f"duplicate node id {node_id}")
        classes = []
        if len(parts) == 2 and parts[1].strip():
            for tok in parts[1].split(","):
                c = _parse_int(label_path, line_no, tok.strip(), "class id")
                if c < 0:
                    raise ValidationError(f"{label_path}:{line_no}: negative class id {c}")
                classes.append(c)
                max_class = max(max_class, c)
        rows[node_id] = sorted(set(classes))

    if not rows:
        raise ValidationError(f"{label_path}: no nodes")
    node_count = max(rows) + 1
    if strict and len(rows) != node_count:
        missing = next(i for i in range(node_count) if i not in rows)
        raise ValidationError(
            f"{label_path}: node ids not contiguous (missing {missing}); "
            "pass strict=False to tolerate gaps"
        )
    class_count = max(max_class + 1, 1)
    labels = np.zeros((node_count, class_count), dtype=np.int8)
    for node_id, classes in rows.items():
        labels[node_id, classes] = 1

    edge_list = []
    for line_no, line in _read_lines(edge_path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(edge_path, line_no, "expected 'u<TAB>v'")
        u = _parse_int(edge_path, line_no, parts[0], "node id")
        v = _parse_int(edge_path, line_no, parts[1], "node id")
        for x in (u, v):
            if not 0 <= x < node_count:
                raise ValidationError(
                    f"{edge_path}:{line_no}: edge endpoint {x} not a known node id"
                )
        edge_list.append((u, v))
    edges = np.array(edge_list, dtype=np.int64).reshape(-1, 2)

    features = None
    if feature_path is not None:
        feat_rows = {}
        dim = None
        for line_no, line in _read_lines(feature_path):
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(feature_path, line_no, "expected 'node_id<TAB>f1 f2 ...'")
            node_id = _parse_int(feature_path, line_no, parts[0], "node id")
            if not 0 <= node_id < node_count:
                raise ValidationError(
                    f"{feature_path}:{line_no}: feature row for unknown node {node_id}"
                )
            try:
                vec = [float(tok) for tok in parts[1].split()]
            except ValueError:
                raise ParseError(feature_path, line_no, "non-numeric feature value") from None
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise ParseError(feature_path, line_no,
                                 f"feature row has {len(vec)} values, expected {dim}")
            feat_rows[node_id] = vec
        if len(feat_rows) != node_count:
            raise ValidationError(f"{feature_path}: feature rows missing for some nodes")
        features = np.array([feat_rows[i] for i in range(node_count)], dtype=np.float64)

    return build_graph(edges, labels, features, feature_dim=feature_dim)


def save_graph(g: MultiLabelGraph, directory, write_features=True):
    """Write edges.tsv / labels.tsv / features.tsv in the load_graph format."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "edges.tsv", "w", encoding="utf-8") as fh:
        for u, v in g.edges:
            fh.write(f"{u}\t{v}\n")
    with open(directory / "labels.tsv", "w", encoding="utf-8") as fh:
        for i in range(g.node_count):
            classes = ",".join(str(c) for c in np.flatnonzero(g.labels[i]))
            fh.write(f"{i}\t{classes}\n")
    if write_features:
        with open(directory / "features.tsv", "w", encoding="utf-8") as fh:
            for i in range(g.node_count):
                vec = " ".join(format(x, ".17g") for x in g.features[i])
                fh.write(f"{i}\t{vec}\n")
    return directory


def load_graph_dir(directory, strict=True) -> MultiLabelGraph:
    """Load a graph from a directory written by :func:`save_graph`."""
    directory = Path(directory)
    feature_path = directory / "features.tsv"
    return load_graph(
        directory / "edges.tsv",
        directory / "labels.tsv",
        feature_path if feature_path.exists() else None,
        strict=strict,
    )
