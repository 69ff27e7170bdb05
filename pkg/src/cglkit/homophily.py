"""Label homophily at edge, node, and graph granularity, plus the empirical
verifier for the subgraph-homophily guarantees of the partitioning scheme.

Edge homophily is the Jaccard similarity of the two endpoints' label sets;
graph homophily is its mean over edges; node homophily is its mean over a
node's incident edges.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import UndefinedMetricError, ValidationError
from .graph import MultiLabelGraph


class EdgeScenario(enum.Enum):
    BOTH_SINGLE = "both_single"
    ONE_SINGLE = "one_single"
    BOTH_MULTI = "both_multi"


def edge_homophily(labels_i, labels_j) -> float:
    """Jaccard similarity of two label sets; undefined when both are empty."""
    a, b = set(labels_i), set(labels_j)
    if not a and not b:
        raise UndefinedMetricError("edge homophily undefined: both label sets empty")
    return len(a & b) / len(a | b)


def _labels_csr(labels: np.ndarray):
    rows, cols = np.nonzero(labels)
    indptr = np.zeros(labels.shape[0] + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=labels.shape[0]), out=indptr[1:])
    return indptr, cols.astype(np.int64)


def edge_homophily_values(labels: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Per-edge Jaccard for an explicit label matrix; NaN where undefined."""
    if edges.shape[0] == 0:
        return np.empty(0, dtype=np.float64)
    indptr, indices = _labels_csr(labels)
    return kernels.edge_jaccard(
        np.ascontiguousarray(edges[:, 0], dtype=np.int64),
        np.ascontiguousarray(edges[:, 1], dtype=np.int64),
        indptr,
        indices,
    )


@dataclass(frozen=True)
class GraphHomophilyReport:
    value: float
    edge_values: np.ndarray
    excluded_edges: int


def graph_homophily_report(g: MultiLabelGraph) -> GraphHomophilyReport:
    """Graph-level homophily with the count of excluded (label-free) edges."""
    if g.edge_count == 0:
        raise UndefinedMetricError("graph homophily undefined: graph has no edges")
    values = edge_homophily_values(g.labels, g.edges)
    valid = ~np.isnan(values)
    if not valid.any():
        raise UndefinedMetricError("graph homophily undefined: no edge has labeled endpoints")
    return GraphHomophilyReport(
        value=float(values[valid].mean()),
        edge_values=values,
        excluded_edges=int((~valid).sum()),
    )


def graph_homophily(g: MultiLabelGraph) -> float:
    return graph_homophily_report(g).value


def node_homophily(g: MultiLabelGraph, v: int) -> float:
    """Mean homophily of the edges incident to ``v``; undefined when isolated."""
    if not 0 <= v < g.node_count:
        raise ValidationError(f"node id {v} out of range")
    mask = (g.edges[:, 0] == v) | (g.edges[:, 1] == v)
    if not mask.any():
        raise UndefinedMetricError(f"node homophily undefined: node {v} is isolated")
    values = edge_homophily_values(g.labels, g.edges[mask])
    values = values[~np.isnan(values)]
    if values.size == 0:
        raise UndefinedMetricError(f"node homophily undefined: node {v} has only label-free edges")
    return float(values.mean())


def node_homophily_all(g: MultiLabelGraph) -> np.ndarray:
    """Node homophily for every node; NaN for isolated or label-free ones."""
    out = np.full(g.node_count, np.nan)
    if g.edge_count == 0:
        return out
    values = edge_homophily_values(g.labels, g.edges)
    ok = ~np.isnan(values)
    sums = np.zeros(g.node_count)
    counts = np.zeros(g.node_count)
    for col in (0, 1):
        np.add.at(sums, g.edges[ok, col], values[ok])
        np.add.at(counts, g.edges[ok, col], 1.0)
    seen = counts > 0
    out[seen] = sums[seen] / counts[seen]
    return out


def classify_edge(g: MultiLabelGraph, edge) -> EdgeScenario:
    """Scenario of an edge by endpoint label cardinality (1 vs more)."""
    u, v = int(edge[0]), int(edge[1])
    cu = int(g.labels[u].sum())
    cv = int(g.labels[v].sum())
    return _scenario(cu, cv)


def _scenario(cu: int, cv: int) -> EdgeScenario:
    if cu == 1 and cv == 1:
        return EdgeScenario.BOTH_SINGLE
    if cu == 1 or cv == 1:
        return EdgeScenario.ONE_SINGLE
    return EdgeScenario.BOTH_MULTI


@dataclass
class TheoremBin:
    """One parent-homophily bin of multi/multi edge occurrences."""

    lo: float
    hi: float
    n: int = 0
    nondecrease: int = 0
    bound_sum: float = 0.0
    bound_var_sum: float = 0.0

    @property
    def observed_frac(self) -> float:
        return self.nondecrease / self.n if self.n else float("nan")

    @property
    def bound_frac(self) -> float:
        return self.bound_sum / self.n if self.n else float("nan")

    @property
    def sigma_frac(self) -> float:
        return math.sqrt(self.bound_var_sum) / self.n if self.n else float("nan")


@dataclass
class TheoremReport:
    """Occurrence-level comparison of subgraph vs parent edge homophily.

    ``single_violations`` must be zero: whenever at least one endpoint is
    single-labeled, subgraph homophily never drops below the parent value.
    For multi/multi edges the worst case is only probabilistically excluded,
    with per-occurrence bound 1-(1-h)^K (per-task label spaces) or
    1-(1-h)^(K*t) (cumulative label spaces).
    """

    mode: str
    group_size: int
    occurrences: dict = field(default_factory=dict)
    nondecrease: dict = field(default_factory=dict)
    single_violations: int = 0
    bins: list = field(default_factory=list)
    mean_subgraph_homophily: float = float("nan")
    subgraph_count: int = 0

    def total_occurrences(self) -> int:
        return sum(self.occurrences.values())

    def nondecrease_fraction(self) -> float:
        total = self.total_occurrences()
        return sum(self.nondecrease.values()) / total if total else float("nan")

    def to_kv(self) -> list[str]:
        lines = [
            f"mode={self.mode}",
            f"group_size={self.group_size}",
            f"subgraph_count={self.subgraph_count}",
            f"mean_subgraph_homophily={self.mean_subgraph_homophily:.6f}",
            f"occurrences_total={self.total_occurrences()}",
            f"nondecrease_fraction={self.nondecrease_fraction():.6f}",
            f"single_violations={self.single_violations}",
        ]
        for scen in EdgeScenario:
            n = self.occurrences.get(scen, 0)
            k = self.nondecrease.get(scen, 0)
            lines.append(f"occurrences_{scen.value}={n}")
            lines.append(f"nondecrease_{scen.value}={k}")
        for b in self.bins:
            if b.n == 0:
                continue
            tag = f"bin_{b.lo:.1f}_{b.hi:.1f}"
            lines.append(f"{tag}_n={b.n}")
            lines.append(f"{tag}_observed={b.observed_frac:.6f}")
            lines.append(f"{tag}_bound={b.bound_frac:.6f}")
            lines.append(f"{tag}_sigma={b.sigma_frac:.6f}")
        return lines


def verify_theorem(g: MultiLabelGraph, sequences, mode: str, group_size: int,
                   retained_classes=None) -> TheoremReport:
    """Compare every subgraph edge occurrence against its parent homophily.

    ``sequences`` is a list of task sequences (one per class order), each a
    list of subgraph tasks carrying ``graph``, ``id_map``, ``projected_labels``
    and ``spec.time_index``. Parent label sets are restricted to
    ``retained_classes`` (default: all classes), matching what the partitioner
    could expose.
    """
    if retained_classes is None:
        parent_labels = g.labels
    else:
        parent_labels = g.labels[:, np.asarray(sorted(retained_classes), dtype=np.int64)]
    parent_vals = edge_homophily_values(parent_labels, g.edges)
    cards = parent_labels.sum(axis=1).astype(np.int64)
    edge_index = {(int(u), int(v)): i for i, (u, v) in enumerate(g.edges)}

    report = TheoremReport(
        mode=mode,
        group_size=group_size,
        occurrences={s: 0 for s in EdgeScenario},
        nondecrease={s: 0 for s in EdgeScenario},
        bins=[TheoremBin(lo=i / 10, hi=(i + 1) / 10) for i in range(10)],
    )
    sub_h_sum = 0.0
    sub_h_count = 0

    for sequence in sequences:
        for task in sequence:
            sub = task.graph
            if sub.edge_count == 0:
                continue
            sub_vals = edge_homophily_values(task.projected_labels, sub.edges)
            valid = ~np.isnan(sub_vals)
            if valid.any():
                sub_h_sum += float(sub_vals[valid].mean())
                sub_h_count += 1
            to_parent = task.id_map.to_parent
            for e in range(sub.edge_count):
                pu = int(to_parent[sub.edges[e, 0]])
                pv = int(to_parent[sub.edges[e, 1]])
                key = (pu, pv) if pu < pv else (pv, pu)
                if key not in edge_index:
                    raise ValidationError(
                        f"subgraph edge {key} missing from parent graph (broken id map)"
                    )
                h_parent = parent_vals[edge_index[key]]
                h_sub = sub_vals[e]
                if math.isnan(h_parent) or math.isnan(h_sub):
                    continue
                scen = _scenario(int(cards[key[0]]), int(cards[key[1]]))
                report.occurrences[scen] += 1
                nondec = h_sub >= h_parent
                if nondec:
                    report.nondecrease[scen] += 1
                elif scen is not EdgeScenario.BOTH_MULTI:
                    report.single_violations += 1
                if scen is EdgeScenario.BOTH_MULTI:
                    exponent = group_size
                    if mode == "classil":
                        exponent = group_size * task.spec.time_index
                    bound = 1.0 - (1.0 - h_parent) ** exponent
                    b = report.bins[min(int(h_parent * 10), 9)]
                    b.n += 1
                    b.nondecrease += int(nondec)
                    b.bound_sum += bound
                    b.bound_var_sum += bound * (1.0 - bound)

    report.subgraph_count = sub_h_count
    if sub_h_count:
        report.mean_subgraph_homophily = sub_h_sum / sub_h_count
    return report


@dataclass(frozen=True)
class ScoreGroupReport:
    """Better/worse-than-average node groups with per-group histograms.

    Histogram values are percentages within the group. Node homophily uses
    ten bins of width 0.1 with the top bin closed at 1.0.
    """

    threshold: float
    better_nodes: list
    worse_nodes: list
    label_count_hist: dict
    node_homophily_hist: dict


def performance_vs_homophily_report(g: MultiLabelGraph, scores: dict) -> ScoreGroupReport:
    """Split scored nodes at the mean score and histogram each group.

    Ties go to the worse group (better means strictly above the mean).
    """
    if not scores:
        raise ValidationError("empty score set")
    nodes = sorted(scores)
    values = np.array([scores[v] for v in nodes], dtype=np.float64)
    threshold = float(values.mean())
    better = [v for v, s in zip(nodes, values) if s > threshold]
    worse = [v for v, s in zip(nodes, values) if s <= threshold]

    node_h = node_homophily_all(g)
    label_counts = g.labels.sum(axis=1)

    def _label_hist(group):
        if not group:
            return {}
        counts = {}
        for v in group:
            k = int(label_counts[v])
            counts[k] = counts.get(k, 0) + 1
        return {k: 100.0 * c / len(group) for k, c in sorted(counts.items())}

    def _homo_hist(group):
        vals = np.array([node_h[v] for v in group])
        vals = vals[~np.isnan(vals)]
        if vals.size == 0:
            return {}
        idx = np.minimum((vals * 10).astype(int), 9)
        hist = {}
        for i in range(10):
            n = int((idx == i).sum())
            if n:
                hist[(i / 10, (i + 1) / 10)] = 100.0 * n / vals.size
        return hist

    return ScoreGroupReport(
        threshold=threshold,
        better_nodes=better,
        worse_nodes=worse,
        label_count_hist={"better": _label_hist(better), "worse": _label_hist(worse)},
        node_homophily_hist={"better": _homo_hist(better), "worse": _homo_hist(worse)},
    )
