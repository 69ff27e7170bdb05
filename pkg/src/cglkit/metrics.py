"""Performance-matrix bookkeeping and the two summary scores.

``PerformanceMatrix`` holds M[i][k]: the score on task k after training
through task i (lower triangle only). The summary scores are the mean of the
final row (average performance) and the mean final-minus-diagonal change
(average forgetting, negative when the model forgets).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError, ValidationError


def task_average_precision(scores: np.ndarray, truth: np.ndarray) -> float:
    """Micro-averaged average precision over all (node, class) pairs.

    All pairs are ranked by score descending (stable order for ties) and
    AP = sum_k Prec@k * [k-th is positive] / total positives. Invariant under
    strictly monotone score transforms.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth)
    if scores.shape != truth.shape:
        raise ValidationError(f"score shape {scores.shape} != truth shape {truth.shape}")
    flat_scores = scores.ravel()
    flat_truth = truth.ravel().astype(bool)
    n_pos = int(flat_truth.sum())
    if n_pos == 0:
        raise UndefinedMetricError("average precision undefined: no positive pair")
    order = np.argsort(-flat_scores, kind="stable")
    hits = flat_truth[order]
    cum_hits = np.cumsum(hits)
    ranks = np.arange(1, hits.size + 1)
    return float((cum_hits[hits] / ranks[hits]).sum() / n_pos)


@dataclass
class PerformanceMatrix:
    """Lower-triangular T x T score matrix; undefined cells hold NaN."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValidationError("performance matrix must be square")
        defined = ~np.isnan(self.values)
        if defined[np.triu_indices(self.T, k=1)].any():
            raise ValidationError("upper triangle must be undefined (NA)")
        vals = self.values[defined]
        if vals.size and ((vals < 0) | (vals > 1)).any():
            raise ValidationError("matrix entries must lie in [0, 1]")

    @classmethod
    def empty(cls, n_tasks: int) -> "PerformanceMatrix":
        return cls(np.full((n_tasks, n_tasks), np.nan))

    @property
    def T(self) -> int:
        return self.values.shape[0]

    def set_entry(self, i: int, k: int, value: float):
        """Record the score on task ``k`` after training through task ``i``
        (0-based, k <= i)."""
        if k > i:
            raise ValidationError("upper-triangle entry is undefined")
        if not 0.0 <= value <= 1.0:
            raise ValidationError(f"score {value} outside [0, 1]")
        self.values[i, k] = value

    def entry(self, i: int, k: int) -> float:
        return float(self.values[i, k])


def compute_ap(m: PerformanceMatrix) -> float:
    """Mean of the final row: average performance after the last task."""
    final = m.values[m.T - 1]
    if np.isnan(final).any():
        raise ValidationError("final row not fully populated")
    return float(final.mean())


def compute_af(m: PerformanceMatrix) -> float:
    """Average forgetting: mean final-row change from the diagonal.

    The sum runs over every task including the last (whose summand is zero)
    and is divided by T - 1, matching the printed formula; T = 1 is
    undefined.
    """
    if m.T < 2:
        raise UndefinedMetricError("average forgetting undefined for a single task")
    final = m.values[m.T - 1]
    diag = np.diag(m.values)
    if np.isnan(final).any() or np.isnan(diag).any():
        raise ValidationError("final row and diagonal must be populated")
    return float((final - diag).sum() / (m.T - 1))


def average_matrices(matrices) -> PerformanceMatrix:
    """Entrywise mean of same-shaped matrices (one per random order)."""
    matrices = list(matrices)
    if not matrices:
        raise ValidationError("no matrices to average")
    t = matrices[0].T
    if any(m.T != t for m in matrices):
        raise ValidationError("matrices have mismatched task counts")
    stacked = np.stack([m.values for m in matrices])
    return PerformanceMatrix(stacked.mean(axis=0))


def matrix_to_tsv(m: PerformanceMatrix) -> str:
    lines = []
    for row in m.values:
        lines.append("\t".join("NA" if np.isnan(x) else format(x, ".17g") for x in row))
    return "\n".join(lines) + "\n"


def matrix_from_tsv(text: str) -> PerformanceMatrix:
    rows = []
    for line in text.strip().splitlines():
        rows.append([np.nan if tok == "NA" else float(tok) for tok in line.split("\t")])
    if not rows or any(len(r) != len(rows) for r in rows):
        raise ValidationError("matrix TSV is not square")
    return PerformanceMatrix(np.array(rows, dtype=np.float64))
