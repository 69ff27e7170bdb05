"""Task-sequence generation and leak-free train/val/test splits.

A static multi-label graph is turned into per-order task sequences: small
classes are dropped, the survivors are shuffled into ``num_orders`` random
orders, consecutive groups of ``group_size`` classes become tasks, and each
task induces the subgraph of nodes carrying at least one of its classes.
Label columns are then projected per incremental mode: per-task label spaces
(``taskil``) keep only the task's own classes, cumulative label spaces
(``classil``) keep every class seen so far.

Splits are drawn class by class in ascending size order; nodes already
assigned through an earlier (overlapping) class are subtracted from both the
candidate pool and the per-split quotas, which makes the three splits
disjoint across the whole subgraph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ValidationError
from .graph import MultiLabelGraph, NodeIdMap, class_members, induced_subgraph

TASK_IL = "taskil"
CLASS_IL = "classil"
MODES = (TASK_IL, CLASS_IL)

_MASK64 = (1 << 64) - 1


def mix_seed(*parts: int) -> int:
    """Deterministic 64-bit seed mixer (splitmix64 over the parts)."""
    x = 0x9E3779B97F4A7C15
    for p in parts:
        x ^= p & _MASK64
        x = (x * 0xBF58476D1CE4E5B9) & _MASK64
        x ^= x >> 27
        x = (x * 0x94D049BB133111EB) & _MASK64
        x ^= x >> 31
    return x


@dataclass(frozen=True)
class PartitionConfig:
    small_class_threshold: int = 30
    group_size: int = 2
    num_orders: int = 3
    proportions: tuple = (0.6, 0.2, 0.2)
    seed: int = 0

    def __post_init__(self):
        if self.group_size < 1:
            raise ConfigError("group_size must be >= 1")
        if self.num_orders < 1:
            raise ConfigError("num_orders must be >= 1")
        if self.small_class_threshold < 0:
            raise ConfigError("small_class_threshold must be >= 0")
        if len(self.proportions) != 3:
            raise ConfigError("proportions must be a (train, val, test) triple")
        if not all(0.0 < p < 1.0 for p in self.proportions):
            raise ConfigError("each proportion must lie in (0, 1)")
        if abs(sum(self.proportions) - 1.0) > 1e-9:
            raise ConfigError("proportions must sum to 1")


@dataclass(frozen=True)
class TaskSpec:
    time_index: int
    class_set: tuple

    def __post_init__(self):
        if self.time_index < 1:
            raise ValidationError("time_index is 1-based")
        if not self.class_set:
            raise ValidationError("empty class set")


@dataclass(frozen=True)
class SubgraphTask:
    spec: TaskSpec
    graph: MultiLabelGraph
    id_map: NodeIdMap
    projected_labels: np.ndarray
    visible_classes: tuple

    def __post_init__(self):
        self.projected_labels.setflags(write=False)


@dataclass(frozen=True)
class SplitAssignment:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for arr in (self.train, self.val, self.test):
            arr.setflags(write=False)


@dataclass(frozen=True)
class WarningRecord:
    kind: str
    order_index: int
    time_index: int
    class_id: int
    message: str

    def as_line(self) -> str:
        return (f"{self.kind}\torder={self.order_index}\tt={self.time_index}"
                f"\tclass={self.class_id}\t{self.message}")


def filter_small_classes(g: MultiLabelGraph, threshold: int) -> list[int]:
    """Classes with at least ``threshold`` members, ascending by id."""
    retained = [c for c in range(g.class_count)
                if class_members(g, c).size >= threshold]
    if not retained:
        raise ConfigError(
            f"small-class threshold {threshold} removes every class"
        )
    return retained


def generate_class_orders(classes, n: int, seed: int) -> list[list[int]]:
    """``n`` uniform random orders; order ``i`` is seeded by ``seed ^ i``, so
    appending more orders never perturbs earlier ones."""
    if not classes:
        raise ValidationError("no classes to order")
    orders = []
    for i in range(n):
        rng = np.random.default_rng((seed ^ i) & _MASK64)
        orders.append([int(c) for c in rng.permutation(np.asarray(classes))])
    return orders


def build_task_sequence(order, group_size: int) -> list[TaskSpec]:
    """Group consecutive classes of one order into task specs.

    The last task absorbs any remainder, so its size ranges over
    [group_size, 2*group_size - 1]; shorter orders collapse to one task.
    """
    if not order:
        raise ValidationError("empty class order")
    k = group_size
    n_tasks = max(len(order) // k, 1)
    specs = []
    for t in range(n_tasks):
        start = t * k
        stop = (t + 1) * k if t < n_tasks - 1 else len(order)
        specs.append(TaskSpec(time_index=t + 1, class_set=tuple(order[start:stop])))
    return specs


def build_subgraph_task(g: MultiLabelGraph, spec: TaskSpec, mode: str,
                        history=()) -> SubgraphTask | None:
    """Induce the task's subgraph and project its label columns.

    Returns None when no node carries any of the task's classes (the caller
    records a skipped task). The graph part depends only on ``spec``; the two
    modes differ purely in the visible label columns.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    for c in spec.class_set:
        if not 0 <= c < g.class_count:
            raise ValidationError(f"task class {c} out of range")
    cols = np.asarray(spec.class_set, dtype=np.int64)
    nodes = np.flatnonzero(g.labels[:, cols].sum(axis=1) > 0)
    if nodes.size == 0:
        return None
    sub, id_map = induced_subgraph(g, nodes)
    if mode == TASK_IL:
        visible = tuple(spec.class_set)
    else:
        visible = tuple(c for h in history for c in h.class_set) + tuple(spec.class_set)
    projected = sub.labels[:, np.asarray(visible, dtype=np.int64)].copy()
    return SubgraphTask(spec=spec, graph=sub, id_map=id_map,
                        projected_labels=projected, visible_classes=visible)


def _largest_remainder(total: int, weights) -> np.ndarray:
    """Integer apportionment of ``total`` by ``weights``; ties favor earlier
    entries (train before val before test)."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.sum() <= 0:
        out = np.zeros(len(weights), dtype=np.int64)
        out[0] = total
        return out
    targets = weights / weights.sum() * total
    base = np.floor(targets).astype(np.int64)
    remainder = total - int(base.sum())
    fracs = targets - base
    for i in np.lexsort((np.arange(len(weights)), -fracs))[:remainder]:
        base[i] += 1
    return base


def split_subgraph(task: SubgraphTask, cfg: PartitionConfig, seed: int,
                   order_index: int = 0):
    """Split one subgraph into disjoint train/val/test node sets.

    Classes are processed smallest first (ties by class id). Each class's
    split sizes come from the proportions via largest-remainder rounding;
    members already placed by an earlier class reduce both the pool and the
    quota of the split they sit in. When overlap leaves a class's pool short
    of its remaining quota, quotas are clamped proportionally and a
    quota-shortfall warning is recorded.

    Returns (SplitAssignment, [WarningRecord, ...]).
    """
    sub = task.graph
    members = {}
    for c in task.spec.class_set:
        m = np.flatnonzero(sub.labels[:, c])
        if m.size < 3:
            raise ValidationError(
                f"class {c} has {m.size} members in task {task.spec.time_index}; "
                "need >= 3 to split"
            )
        members[c] = m
    class_order = sorted(task.spec.class_set, key=lambda c: (members[c].size, c))

    rng = np.random.default_rng(seed & _MASK64)
    assigned = np.full(sub.node_count, -1, dtype=np.int64)
    splits = [[], [], []]
    warnings = []

    for c in class_order:
        m = members[c]
        quotas = _largest_remainder(m.size, cfg.proportions)
        dup = m[assigned[m] >= 0]
        pool = m[assigned[m] < 0]
        for v in dup:
            quotas[assigned[v]] -= 1
        if (quotas < 0).any() or quotas.sum() != pool.size:
            clamped = np.maximum(quotas, 0)
            warnings.append(WarningRecord(
                kind="quota_shortfall",
                order_index=order_index,
                time_index=task.spec.time_index,
                class_id=int(c),
                message=(f"pool={pool.size} quotas={quotas.tolist()} "
                         f"clamped_to={_largest_remainder(pool.size, clamped).tolist()}"),
            ))
            quotas = _largest_remainder(pool.size, clamped)
        shuffled = rng.permutation(pool)
        offsets = np.cumsum(quotas)
        parts = (shuffled[:offsets[0]],
                 shuffled[offsets[0]:offsets[1]],
                 shuffled[offsets[1]:offsets[2]])
        for s, part in enumerate(parts):
            splits[s].extend(int(v) for v in part)
            assigned[part] = s

    assignment = SplitAssignment(
        train=np.array(sorted(splits[0]), dtype=np.int64),
        val=np.array(sorted(splits[1]), dtype=np.int64),
        test=np.array(sorted(splits[2]), dtype=np.int64),
    )
    if assignment.train.size == 0:
        raise ValidationError("empty train split")
    return assignment, warnings


@dataclass
class OrderPartition:
    """One class order's tasks with their splits; skipped tasks are absent
    from ``tasks`` but keep their time indices."""

    order_index: int
    class_order: list
    specs: list
    tasks: list
    splits: list


@dataclass
class PartitionResult:
    mode: str
    retained_classes: list
    orders: list  # of OrderPartition
    warnings: list = field(default_factory=list)


def build_partition(g: MultiLabelGraph, cfg: PartitionConfig, mode: str,
                    with_splits: bool = True) -> PartitionResult:
    """Run the full pipeline: filter, order, group, induce, project, split.

    ``with_splits=False`` stops after subgraph construction (enough for
    homophily analysis)."""
    retained = filter_small_classes(g, cfg.small_class_threshold)
    class_orders = generate_class_orders(retained, cfg.num_orders, cfg.seed)
    result = PartitionResult(mode=mode, retained_classes=retained, orders=[])
    for oi, order in enumerate(class_orders):
        specs = build_task_sequence(order, cfg.group_size)
        tasks, splits, history = [], [], []
        for spec in specs:
            task = build_subgraph_task(g, spec, mode, history)
            history.append(spec)
            if task is None:
                result.warnings.append(WarningRecord(
                    kind="skipped_task", order_index=oi,
                    time_index=spec.time_index, class_id=-1,
                    message=f"no nodes carry classes {spec.class_set}",
                ))
                continue
            tasks.append(task)
            if with_splits:
                split, ws = split_subgraph(
                    task, cfg, mix_seed(cfg.seed, oi, spec.time_index), order_index=oi
                )
                result.warnings.extend(ws)
                splits.append(split)
        result.orders.append(OrderPartition(
            order_index=oi, class_order=list(order), specs=specs,
            tasks=tasks, splits=splits,
        ))
    return result
