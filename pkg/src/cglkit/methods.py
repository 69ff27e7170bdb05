"""Continual-learning strategies over the GCN backbone.

Six methods share one training loop: plain sequential training, joint
training on all classes at once, knowledge distillation from the previous
model, two importance-weighted parameter anchors (squared-gradient and
output-sensitivity importance), and replay of buffered nodes as isolated
rows. Each method's extra machinery vanishes at its neutral hyperparameter
(zero distillation weight, zero anchor weight, zero buffer), reproducing the
plain trainer's parameter trajectory bit for bit.

The trainer owns a class -> output-column registry that grows as tasks
introduce new classes, so the output width never needs to be known up front.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, StateError, TrainingError, UndefinedMetricError
from .gcn import (AdamState, CsrMatrix, GcnParams, adam_step, backward,
                  bce_loss_and_grad, expand_output_dim, forward, init_params,
                  sigmoid)
from .metrics import task_average_precision
from .partition import WarningRecord

METHODS = ("simple", "joint", "lwf", "ewc", "mas", "ergnn")


@dataclass(frozen=True)
class MethodConfig:
    method: str = "simple"
    lr: float = 1e-2
    epochs: int = 200
    patience: int = 20
    hidden_dim: int = 64
    lambda_distill: float = 1.0
    lambda_reg: float = 1.0
    buffer_per_class: int = 1
    distill_temperature: float = 1.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.lr <= 0 or self.epochs < 1 or self.patience < 0:
            raise ConfigError("lr must be positive, epochs >= 1, patience >= 0")
        if self.hidden_dim < 1:
            raise ConfigError("hidden_dim must be >= 1")
        if self.lambda_distill < 0 or self.lambda_reg < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.buffer_per_class < 0:
            raise ConfigError("buffer_per_class must be >= 0 (0 disables replay)")
        if self.distill_temperature <= 0:
            raise ConfigError("distill_temperature must be positive")


@dataclass(frozen=True)
class TaskBundle:
    """Everything a method is allowed to see while training one task."""

    time_index: int
    task_classes: tuple
    train_classes: tuple  # label space of the training loss (mode dependent)
    adj: CsrMatrix
    features: np.ndarray
    targets: np.ndarray  # node x len(train_classes), aligned with train_classes
    train_nodes: np.ndarray
    val_nodes: np.ndarray
    parent_ids: np.ndarray
    parent_labels: np.ndarray  # full label rows (buffer capture)


@dataclass
class BufferEntry:
    parent_id: int
    features: np.ndarray
    labels: np.ndarray  # full parent label row, frozen at capture
    class_id: int
    time_index: int


@dataclass
class CLState:
    prev_params: GcnParams | None = None
    importance_history: list = field(default_factory=list)
    buffer: list = field(default_factory=list)


def _append_isolated_rows(adj: CsrMatrix, k: int) -> CsrMatrix:
    """Extend a normalized adjacency with k isolated nodes (self-loop 1)."""
    n = adj.shape[0]
    indptr = np.concatenate([adj.indptr,
                             adj.indptr[-1] + np.arange(1, k + 1, dtype=np.int64)])
    indices = np.concatenate([adj.indices, n + np.arange(k, dtype=np.int64)])
    data = np.concatenate([adj.data, np.ones(k)])
    return CsrMatrix(indptr=indptr, indices=indices, data=data, shape=(n + k, n + k))


class _AnchorPenalty:
    """lambda * sum_i Omega_i (theta_i - theta*_i)^2 added to loss and grads."""

    def __init__(self, lam: float, anchor: GcnParams, importance_history):
        self.lam = lam
        self.anchor = anchor
        self.omega = {}
        for hist in importance_history:
            for name, arr in hist.items():
                if name in self.omega:
                    self.omega[name] = self.omega[name] + arr
                else:
                    self.omega[name] = arr.copy()

    def apply(self, params: GcnParams, grads) -> float:
        total = 0.0
        anchor = dict(self.anchor.tensors())
        grad_map = dict(grads.tensors())
        for name, p in params.tensors():
            diff = p - anchor[name]
            omega = self.omega[name]
            total += float((omega * diff * diff).sum())
            grad_map[name] += 2.0 * self.lam * omega * diff
        return self.lam * total


class ContinualTrainer:
    """Trains one method over a task sequence, carrying its CL state.

    The only cross-task memory is the declared state: previous parameter
    snapshot, accumulated importance scores, and the replay buffer. Each
    call to :meth:`train_task` sees exactly one task bundle.
    """

    def __init__(self, cfg: MethodConfig, feature_dim: int, seed: int):
        self.cfg = cfg
        self.feature_dim = feature_dim
        self.rng = np.random.default_rng(seed)
        self.registry: dict[int, int] = {}
        self.params: GcnParams | None = None
        self.state = CLState()
        self.warnings: list[WarningRecord] = []
        self.task_seconds: list[float] = []

    def columns_for(self, classes) -> np.ndarray:
        try:
            return np.array([self.registry[c] for c in classes], dtype=np.int64)
        except KeyError as exc:
            raise StateError(f"class {exc.args[0]} never trained") from None

    def seen_classes(self) -> list[int]:
        return sorted(self.registry, key=self.registry.get)

    def _register(self, classes):
        new = [c for c in classes if c not in self.registry]
        for c in new:
            self.registry[c] = len(self.registry)
        out_dim = len(self.registry)
        if self.params is None:
            self.params = init_params(self.feature_dim, self.cfg.hidden_dim,
                                      out_dim, self.rng)
        elif self.params.out_dim < out_dim:
            self.params = expand_output_dim(self.params, out_dim, self.rng)
            self._pad_state()
        return new

    def _pad_state(self):
        """Zero-pad the anchor and importance tensors after an expansion, so
        the penalty stays exactly zero on brand-new columns."""
        if self.state.prev_params is not None:
            self.state.prev_params = _pad_params(self.state.prev_params, self.params)
        self.state.importance_history = [
            {name: _pad_array(hist[name], ref.shape)
             for name, ref in self.params.tensors()}
            for hist in self.state.importance_history
        ]

    def train_task(self, bundle: TaskBundle):
        start = time.perf_counter()
        n_before = len(self.registry)
        self._register(bundle.train_classes)
        cols = self.columns_for(bundle.train_classes)

        distill = None
        if self.cfg.method == "lwf" and bundle.time_index >= 2:
            if self.state.prev_params is None:
                raise StateError("distillation teacher missing for task >= 2")
            if self.cfg.lambda_distill > 0 and n_before > 0:
                old_cols = np.arange(n_before, dtype=np.int64)
                teacher_logits, _ = forward(self.state.prev_params, bundle.adj,
                                            bundle.features)
                teacher_probs = sigmoid(
                    teacher_logits[:, old_cols] / self.cfg.distill_temperature)
                distill = (teacher_probs, old_cols)

        penalty = None
        if self.cfg.method in ("ewc", "mas") and bundle.time_index >= 2:
            if self.state.prev_params is None or not self.state.importance_history:
                raise StateError("importance anchor missing for task >= 2")
            if self.cfg.lambda_reg > 0:
                penalty = _AnchorPenalty(self.cfg.lambda_reg, self.state.prev_params,
                                         self.state.importance_history)

        adj, X, targets = bundle.adj, bundle.features, bundle.targets
        train_nodes = bundle.train_nodes
        if self.cfg.method == "ergnn" and self.state.buffer:
            adj, X, targets, train_nodes = self._augment_with_buffer(bundle)

        self.params = self._fit(adj, X, targets, cols, train_nodes,
                                bundle.val_nodes, distill, penalty)

        if self.cfg.method == "lwf":
            self.state.prev_params = self.params.copy()
        elif self.cfg.method == "ewc":
            self.state.importance_history.append(estimate_importance_ewc(
                self.params, bundle.adj, bundle.features, bundle.targets,
                bundle.train_nodes, cols))
            self.state.prev_params = self.params.copy()
        elif self.cfg.method == "mas":
            self.state.importance_history.append(estimate_importance_mas(
                self.params, bundle.adj, bundle.features, bundle.train_nodes, cols))
            self.state.prev_params = self.params.copy()
        elif self.cfg.method == "ergnn":
            self._sample_buffer(bundle)
        self.task_seconds.append(time.perf_counter() - start)

    def _augment_with_buffer(self, bundle: TaskBundle):
        """Replay buffer nodes as isolated rows with frozen labels projected
        onto the classes visible to this task's loss."""
        vis = np.asarray(bundle.train_classes, dtype=np.int64)
        feats, targs = [], []
        for entry in self.state.buffer:
            proj = entry.labels[vis].astype(np.float64)
            if proj.sum() == 0:
                self.warnings.append(WarningRecord(
                    kind="buffer_skip", order_index=-1,
                    time_index=bundle.time_index, class_id=entry.class_id,
                    message=(f"buffer node {entry.parent_id} has no label among "
                             f"visible classes"),
                ))
                continue
            feats.append(entry.features)
            targs.append(proj)
        if not feats:
            return bundle.adj, bundle.features, bundle.targets, bundle.train_nodes
        n = bundle.features.shape[0]
        adj = _append_isolated_rows(bundle.adj, len(feats))
        X = np.vstack([bundle.features, np.stack(feats)])
        targets = np.vstack([bundle.targets.astype(np.float64), np.stack(targs)])
        train_nodes = np.concatenate([
            bundle.train_nodes,
            n + np.arange(len(feats), dtype=np.int64),
        ])
        return adj, X, targets, train_nodes

    def _sample_buffer(self, bundle: TaskBundle):
        bpc = self.cfg.buffer_per_class
        if bpc == 0:
            return
        for c in bundle.task_classes:
            members = bundle.train_nodes[bundle.parent_labels[bundle.train_nodes, c] == 1]
            if members.size == 0:
                continue
            picks = self.rng.choice(members, size=min(bpc, members.size), replace=False)
            for v in picks:
                self.state.buffer.append(BufferEntry(
                    parent_id=int(bundle.parent_ids[v]),
                    features=bundle.features[v].copy(),
                    labels=bundle.parent_labels[v].copy(),
                    class_id=int(c),
                    time_index=bundle.time_index,
                ))

    def _fit(self, adj, X, targets, cols, train_nodes, val_nodes,
             distill, penalty) -> GcnParams:
        cfg = self.cfg
        params = self.params
        adam = AdamState.for_params(params)
        best_ap = None
        best_snapshot = None
        stale = 0
        for _ in range(cfg.epochs):
            logits, cache = forward(params, adj, X)
            loss, d_logits = bce_loss_and_grad(
                logits, targets[train_nodes], train_nodes, cols)
            if distill is not None:
                teacher_probs, old_cols = distill
                tau = cfg.distill_temperature
                extra, d_extra = bce_loss_and_grad(
                    logits / tau, teacher_probs[train_nodes], train_nodes, old_cols)
                loss += cfg.lambda_distill * extra
                d_logits = d_logits + (cfg.lambda_distill / tau) * d_extra
            grads = backward(cache, d_logits)
            if penalty is not None:
                loss += penalty.apply(params, grads)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite training loss {loss}")
            adam_step(params, grads, adam, cfg.lr)

            if val_nodes.size:
                val_logits, _ = forward(params, adj, X)
                try:
                    ap = task_average_precision(val_logits[val_nodes][:, cols],
                                                targets[val_nodes])
                except UndefinedMetricError:
                    continue
                if best_ap is None or ap > best_ap + 1e-12:
                    best_ap = ap
                    best_snapshot = params.copy()
                    stale = 0
                else:
                    stale += 1
                    if stale > cfg.patience:
                        break
        return best_snapshot if best_snapshot is not None else params


def _pad_array(arr: np.ndarray, shape) -> np.ndarray:
    if arr.shape == tuple(shape):
        return arr
    out = np.zeros(shape, dtype=arr.dtype)
    out[tuple(slice(0, s) for s in arr.shape)] = arr
    return out


def _pad_params(old: GcnParams, like: GcnParams) -> GcnParams:
    return GcnParams(
        W1=_pad_array(old.W1, like.W1.shape),
        b1=_pad_array(old.b1, like.b1.shape),
        W2=_pad_array(old.W2, like.W2.shape),
        b2=_pad_array(old.b2, like.b2.shape),
    )


def estimate_importance_ewc(params, adj, X, targets, train_nodes, cols) -> dict:
    """Diagonal squared-gradient importance, averaged over train nodes.

    Per node, the gradient of that node's own loss is squared elementwise;
    the per-task dictionaries are kept and summed at penalty time.
    """
    logits, cache = forward(params, adj, X)
    acc = {name: np.zeros_like(p) for name, p in params.tensors()}
    for v in train_nodes:
        _, d_logits = bce_loss_and_grad(logits, targets[[v]], np.array([v]), cols)
        grads = backward(cache, d_logits)
        for name, g in grads.tensors():
            acc[name] += g * g
    for name in acc:
        acc[name] /= train_nodes.size
    return acc


def estimate_importance_mas(params, adj, X, train_nodes, cols) -> dict:
    """Label-free importance: sensitivity of the squared output norm.

    Per node, the absolute gradient of ||sigmoid(outputs)||^2 is averaged
    over train nodes.
    """
    logits, cache = forward(params, adj, X)
    probs = sigmoid(logits[:, cols])
    acc = {name: np.zeros_like(p) for name, p in params.tensors()}
    for v in train_nodes:
        d_logits = np.zeros_like(logits)
        d_logits[v, cols] = 2.0 * probs[v] ** 2 * (1.0 - probs[v])
        grads = backward(cache, d_logits)
        for name, g in grads.tensors():
            acc[name] += np.abs(g)
    for name in acc:
        acc[name] /= train_nodes.size
    return acc
