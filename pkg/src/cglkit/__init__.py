"""Benchmark toolkit for continual learning on multi-label graphs.

Turns a static multi-label graph into task-incremental and class-incremental
task sequences with leak-free per-class splits, measures label homophily at
edge/node/graph level, verifies the subgraph-homophily guarantees of the
partitioning scheme, and trains/evaluates continual-learning baselines over
a shared GCN backbone with performance-matrix bookkeeping (AP/AF).
"""

__version__ = "0.1.0"

from .graph import MultiLabelGraph, NodeIdMap, load_graph, load_graph_dir  # noqa: F401
from .kernels import BACKEND  # noqa: F401
