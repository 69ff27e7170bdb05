"""Experiment runner: trains a method over task sequences and fills the
performance matrix, one matrix per random class order.

Joint training is expressed as a single task covering the order's full class
list, so it flows through exactly the same trainer code path as a one-task
sequence. Evaluation after task t covers tasks 1..t; per-task label spaces
score each task against its own classes, cumulative label spaces score
against every class seen so far.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UndefinedMetricError
from .gcn import forward, normalize_adjacency
from .graph import MultiLabelGraph
from .methods import ContinualTrainer, MethodConfig, TaskBundle
from .metrics import PerformanceMatrix, compute_af, compute_ap, task_average_precision
from .partition import (MODES, TASK_IL, PartitionConfig, TaskSpec,
                        WarningRecord, build_subgraph_task,
                        build_task_sequence, filter_small_classes,
                        generate_class_orders, mix_seed, split_subgraph)


@dataclass(frozen=True)
class ExperimentConfig:
    method: str = "simple"
    mode: str = TASK_IL
    group_size: int = 2
    small_class_threshold: int = 30
    num_orders: int = 3
    proportions: tuple = (0.6, 0.2, 0.2)
    seed: int = 0
    lr: float = 1e-2
    epochs: int = 200
    patience: int = 20
    hidden_dim: int = 64
    lambda_reg: float = 1.0
    lambda_distill: float = 1.0
    buffer_per_class: int = 1
    distill_temperature: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        self.partition_config()
        self.method_config()

    def partition_config(self) -> PartitionConfig:
        return PartitionConfig(
            small_class_threshold=self.small_class_threshold,
            group_size=self.group_size,
            num_orders=self.num_orders,
            proportions=tuple(self.proportions),
            seed=self.seed,
        )

    def method_config(self) -> MethodConfig:
        return MethodConfig(
            method=self.method,
            lr=self.lr,
            epochs=self.epochs,
            patience=self.patience,
            hidden_dim=self.hidden_dim,
            lambda_distill=self.lambda_distill,
            lambda_reg=self.lambda_reg,
            buffer_per_class=self.buffer_per_class,
            distill_temperature=self.distill_temperature,
        )

    def to_kv(self) -> list:
        return [
            ("method", self.method),
            ("mode", self.mode),
            ("K", self.group_size),
            ("delta", self.small_class_threshold),
            ("orders", self.num_orders),
            ("proportions", self.proportions),
            ("seed", self.seed),
            ("lr", self.lr),
            ("epochs", self.epochs),
            ("patience", self.patience),
            ("hidden_dim", self.hidden_dim),
            ("lambda", self.lambda_reg),
            ("lambda_o", self.lambda_distill),
            ("buffer_per_class", self.buffer_per_class),
            ("temperature", self.distill_temperature),
        ]

    @classmethod
    def from_kv(cls, kv: dict) -> "ExperimentConfig":
        def get(key, cast, default):
            return cast(kv[key]) if key in kv else default

        try:
            proportions = tuple(
                float(x) for x in kv.get("proportions", "0.6,0.2,0.2").split(","))
            # "seeds" is accepted as an alias; derived per-order subseeds come
            # from the single base value
            seed = kv.get("seed", kv.get("seeds", "0")).split(",")[0]
            return cls(
                method=kv.get("method", "simple"),
                mode=kv.get("mode", TASK_IL),
                group_size=get("K", int, 2),
                small_class_threshold=get("delta", int, 30),
                num_orders=get("orders", int, 3),
                proportions=proportions,
                seed=int(seed),
                lr=get("lr", float, 1e-2),
                epochs=get("epochs", int, 200),
                patience=get("patience", int, 20),
                hidden_dim=get("hidden_dim", int, 64),
                lambda_reg=get("lambda", float, 1.0),
                lambda_distill=get("lambda_o", float, 1.0),
                buffer_per_class=get("buffer_per_class", int, 1),
                distill_temperature=get("temperature", float, 1.0),
            )
        except ValueError as exc:
            raise ConfigError(f"bad experiment config value: {exc}") from None


@dataclass
class OrderRunResult:
    order_index: int
    class_order: list
    matrix: PerformanceMatrix
    task_seconds: list
    warnings: list = field(default_factory=list)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    retained_classes: list
    orders: list  # of OrderRunResult

    @property
    def matrices(self):
        return [o.matrix for o in self.orders]

    def ap_values(self):
        return [compute_ap(m) for m in self.matrices]

    def af_values(self):
        try:
            return [compute_af(m) for m in self.matrices]
        except UndefinedMetricError:
            return None


@dataclass
class _PreparedTask:
    spec: TaskSpec
    task: object
    split: object
    adj: object


def _evaluate(trainer: ContinualTrainer, prepared: _PreparedTask, mode: str) -> float:
    test = prepared.split.test
    logits, _ = forward(trainer.params, prepared.adj, prepared.task.graph.features)
    if mode == TASK_IL:
        cols = trainer.columns_for(prepared.spec.class_set)
        truth = prepared.task.projected_labels[test]
    else:
        seen = trainer.seen_classes()
        cols = trainer.columns_for(seen)
        truth = prepared.task.graph.labels[test][:, np.asarray(seen, dtype=np.int64)]
    return task_average_precision(logits[test][:, cols], truth)


def run_order(g: MultiLabelGraph, cfg: ExperimentConfig, class_order,
              order_index: int) -> OrderRunResult:
    """Train the configured method over one class order and fill its matrix."""
    pcfg = cfg.partition_config()
    if cfg.method == "joint":
        specs = [TaskSpec(time_index=1, class_set=tuple(class_order))]
    else:
        specs = build_task_sequence(class_order, cfg.group_size)

    warnings = []
    trainer = ContinualTrainer(cfg.method_config(), g.feature_dim,
                               seed=mix_seed(cfg.seed, 7, order_index))
    prepared: list[_PreparedTask] = []
    history = []
    for spec in specs:
        # the graph part of a task is mode independent; only labels differ
        task = build_subgraph_task(g, spec, cfg.mode, history)
        history.append(spec)
        if task is None:
            warnings.append(WarningRecord(
                kind="skipped_task", order_index=order_index,
                time_index=spec.time_index, class_id=-1,
                message=f"no nodes carry classes {spec.class_set}"))
            continue
        split, ws = split_subgraph(task, pcfg,
                                   mix_seed(cfg.seed, order_index, spec.time_index),
                                   order_index=order_index)
        warnings.extend(ws)
        prepared.append(_PreparedTask(spec=spec, task=task, split=split,
                                      adj=normalize_adjacency(task.graph)))

    matrix = PerformanceMatrix.empty(len(prepared))
    for i, p in enumerate(prepared):
        bundle = TaskBundle(
            time_index=i + 1,
            task_classes=p.spec.class_set,
            train_classes=p.task.visible_classes,
            adj=p.adj,
            features=p.task.graph.features,
            targets=p.task.projected_labels,
            train_nodes=p.split.train,
            val_nodes=p.split.val,
            parent_ids=p.task.id_map.to_parent,
            parent_labels=p.task.graph.labels,
        )
        trainer.train_task(bundle)
        for k in range(i + 1):
            matrix.set_entry(i, k, _evaluate(trainer, prepared[k], cfg.mode))
    warnings.extend(trainer.warnings)
    return OrderRunResult(order_index=order_index, class_order=list(class_order),
                          matrix=matrix, task_seconds=list(trainer.task_seconds),
                          warnings=warnings)


def run_experiment(g: MultiLabelGraph, cfg: ExperimentConfig,
                   parallel: int = 1) -> ExperimentResult:
    retained = filter_small_classes(g, cfg.small_class_threshold)
    class_orders = generate_class_orders(retained, cfg.num_orders, cfg.seed)
    if parallel > 1 and cfg.num_orders > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=parallel) as pool:
            futures = [pool.submit(run_order, g, cfg, order, oi)
                       for oi, order in enumerate(class_orders)]
            orders = [f.result() for f in futures]
    else:
        orders = [run_order(g, cfg, order, oi)
                  for oi, order in enumerate(class_orders)]
    return ExperimentResult(config=cfg, retained_classes=retained, orders=orders)


def learning_curve(matrix: PerformanceMatrix):
    """Rows (t, mean score over tasks 1..t after training task t)."""
    return [(t + 1, float(np.nanmean(matrix.values[t, : t + 1])))
            for t in range(matrix.T)]


def summary_row(result: ExperimentResult) -> dict:
    """method/setting/AP/AF summary with std taken across random orders."""
    aps = result.ap_values()
    afs = result.af_values()
    row = {
        "method": result.config.method,
        "setting": result.config.mode,
        "AP_mean": float(np.mean(aps)),
        "AP_std": float(np.std(aps)),
    }
    if afs is None:
        row["AF_mean"] = None
        row["AF_std"] = None
    else:
        row["AF_mean"] = float(np.mean(afs))
        row["AF_std"] = float(np.std(afs))
    return row
