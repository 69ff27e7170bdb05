"""Two-layer graph convolutional network with manual forward/backward.

logits = A_hat @ relu(A_hat @ X @ W1 + b1) @ W2 + b2, where A_hat is the
symmetrically degree-normalized adjacency with self-loops. Everything is
float64; gradients are exact and checked against finite differences in the
test suite. The output width can grow as new classes appear, preserving the
columns of already-known classes bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import TrainingError, ValidationError
from .graph import MultiLabelGraph

NEW_COLUMN_BINIT = -2.0  # bias prior for freshly added class columns


@dataclass
class CsrMatrix:
    """Symmetric sparse matrix in CSR form with a deterministic (row, col)
    sorted layout."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    shape: tuple

    def matmul(self, dense: np.ndarray) -> np.ndarray:
        if dense.shape[0] != self.shape[1]:
            raise ValidationError(
                f"csr shape {self.shape} incompatible with dense rows {dense.shape[0]}"
            )
        return kernels.csr_dense_matmul(
            self.indptr, self.indices, self.data,
            np.ascontiguousarray(dense, dtype=np.float64),
        )

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for i in range(self.shape[0]):
            for k in range(self.indptr[i], self.indptr[i + 1]):
                out[i, self.indices[k]] = self.data[k]
        return out


def normalize_adjacency(g: MultiLabelGraph) -> CsrMatrix:
    """D^-1/2 (A + I) D^-1/2 over the graph's nodes.

    Self-loops are added here (the graph itself stores none), so isolated
    nodes get degree 1 and keep their own features.
    """
    n = g.node_count
    u, v = g.edges[:, 0], g.edges[:, 1]
    rows = np.concatenate([u, v, np.arange(n, dtype=np.int64)])
    cols = np.concatenate([v, u, np.arange(n, dtype=np.int64)])
    deg = np.bincount(rows, minlength=n).astype(np.float64)
    d_inv_sqrt = 1.0 / np.sqrt(deg)
    vals = d_inv_sqrt[rows] * d_inv_sqrt[cols]
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return CsrMatrix(indptr=indptr, indices=cols.astype(np.int64),
                     data=vals, shape=(n, n))


@dataclass
class GcnParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W2.shape[1]

    def tensors(self):
        return [("W1", self.W1), ("b1", self.b1), ("W2", self.W2), ("b2", self.b2)]

    def copy(self) -> "GcnParams":
        return GcnParams(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy())

    def allclose(self, other: "GcnParams") -> bool:
        return all(np.array_equal(a, b) for (_, a), (_, b) in
                   zip(self.tensors(), other.tensors()))


@dataclass
class Gradients:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def tensors(self):
        return [("W1", self.W1), ("b1", self.b1), ("W2", self.W2), ("b2", self.b2)]


def _glorot(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(feature_dim: int, hidden_dim: int, out_dim: int,
                rng: np.random.Generator) -> GcnParams:
    return GcnParams(
        W1=_glorot(rng, feature_dim, hidden_dim, (feature_dim, hidden_dim)),
        b1=np.zeros(hidden_dim),
        W2=_glorot(rng, hidden_dim, out_dim, (hidden_dim, out_dim)),
        b2=np.zeros(out_dim),
    )


def expand_output_dim(params: GcnParams, new_out_dim: int,
                      rng: np.random.Generator) -> GcnParams:
    """Widen the output layer for newly arrived classes.

    Existing columns are preserved bit-exactly; new columns get fan-in scaled
    Glorot weights and a negative bias (labels are sparse, so new classes
    start pessimistic).
    """
    cur = params.out_dim
    if new_out_dim < cur:
        raise ValidationError("output dimension cannot shrink")
    if new_out_dim == cur:
        return params
    extra = new_out_dim - cur
    W2 = np.concatenate(
        [params.W2, _glorot(rng, params.hidden_dim, new_out_dim,
                            (params.hidden_dim, extra))], axis=1)
    b2 = np.concatenate([params.b2, np.full(extra, NEW_COLUMN_BINIT)])
    return GcnParams(params.W1.copy(), params.b1.copy(), W2, b2)


@dataclass
class ForwardCache:
    adj: CsrMatrix
    P1: np.ndarray  # A_hat @ X
    A1: np.ndarray  # pre-activation
    P2: np.ndarray  # A_hat @ relu(A1)
    W2: np.ndarray


def forward(params: GcnParams, adj: CsrMatrix, X: np.ndarray):
    """Returns (logits, cache); the cache feeds :func:`backward`."""
    if X.shape[1] != params.W1.shape[0]:
        raise ValidationError(
            f"feature dim {X.shape[1]} != W1 rows {params.W1.shape[0]}"
        )
    P1 = adj.matmul(X)
    A1 = P1 @ params.W1 + params.b1
    R = np.maximum(A1, 0.0)
    P2 = adj.matmul(R)
    logits = P2 @ params.W2 + params.b2
    return logits, ForwardCache(adj=adj, P1=P1, A1=A1, P2=P2, W2=params.W2)


def backward(cache: ForwardCache, d_logits: np.ndarray) -> Gradients:
    """Exact gradients of the forward composition w.r.t. all parameters."""
    db2 = d_logits.sum(axis=0)
    dW2 = cache.P2.T @ d_logits
    dP2 = d_logits @ cache.W2.T
    dR = cache.adj.matmul(dP2)  # A_hat is symmetric
    dA1 = dR * (cache.A1 > 0.0)
    db1 = dA1.sum(axis=0)
    dW1 = cache.P1.T @ dA1
    return Gradients(W1=dW1, b1=db1, W2=dW2, b2=db2)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_loss_and_grad(logits: np.ndarray, targets: np.ndarray, mask: np.ndarray,
                      cols=None):
    """Mean sigmoid binary cross-entropy over masked (node, class) pairs.

    ``mask`` selects rows; ``cols`` optionally selects a column subset (the
    visible classes). Targets may be soft (probabilities). Returns
    (loss, d_logits) with the gradient scattered back to the full logits
    shape, zero outside the masked block.
    """
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValidationError("empty node mask")
    z = logits[mask]
    if cols is not None:
        cols = np.asarray(cols, dtype=np.int64)
        z = z[:, cols]
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != z.shape:
        raise ValidationError(f"target shape {t.shape} != masked logits {z.shape}")
    # max(z,0) - z*t + log(1 + exp(-|z|)) is the overflow-safe BCE form
    elem = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
    count = z.size
    loss = float(elem.sum() / count)
    dz = (sigmoid(z) - t) / count
    d_logits = np.zeros_like(logits)
    if cols is not None:
        block = np.zeros((mask.size, logits.shape[1]))
        block[:, cols] = dz
        d_logits[mask] = block
    else:
        d_logits[mask] = dz
    return loss, d_logits


def sgd_step(params: GcnParams, grads: Gradients, lr: float) -> GcnParams:
    _check_finite(grads)
    for (_, p), (_, g) in zip(params.tensors(), grads.tensors()):
        p -= lr * g
    return params


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def for_params(cls, params: GcnParams) -> "AdamState":
        return cls(m={n: np.zeros_like(p) for n, p in params.tensors()},
                   v={n: np.zeros_like(p) for n, p in params.tensors()})

    def expand_like(self, params: GcnParams):
        """Zero-pad moment tensors after an output expansion."""
        for n, p in params.tensors():
            for store in (self.m, self.v):
                if store[n].shape != p.shape:
                    padded = np.zeros_like(p)
                    sl = tuple(slice(0, s) for s in store[n].shape)
                    padded[sl] = store[n]
                    store[n] = padded


def adam_step(params: GcnParams, grads: Gradients, state: AdamState, lr: float,
              betas=(0.9, 0.999), eps=1e-8) -> GcnParams:
    _check_finite(grads)
    b1, b2 = betas
    state.step += 1
    t = state.step
    for (n, p), (_, g) in zip(params.tensors(), grads.tensors()):
        state.m[n] = b1 * state.m[n] + (1 - b1) * g
        state.v[n] = b2 * state.v[n] + (1 - b2) * g * g
        m_hat = state.m[n] / (1 - b1 ** t)
        v_hat = state.v[n] / (1 - b2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params


def _check_finite(grads: Gradients):
    for n, g in grads.tensors():
        if not np.isfinite(g).all():
            raise TrainingError(f"non-finite gradient in {n}")


_MAGIC = b"CGLKPAR1"


def save_params(params: GcnParams, path):
    """Flat binary checkpoint: magic, tensor count, then per tensor the
    number of dims, the dims, and row-major float64 values (little endian)."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        tensors = params.tensors()
        fh.write(struct.pack("<Q", len(tensors)))
        for _, arr in tensors:
            fh.write(struct.pack("<Q", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_params(path) -> GcnParams:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValidationError(f"{path}: not a parameter checkpoint")
        (count,) = struct.unpack("<Q", fh.read(8))
        if count != 4:
            raise ValidationError(f"{path}: expected 4 tensors, found {count}")
        arrays = []
        for _ in range(count):
            (ndim,) = struct.unpack("<Q", fh.read(8))
            shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
            n_items = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * n_items)
            arrays.append(np.frombuffer(buf, dtype="<f8").reshape(shape).copy())
    return GcnParams(*arrays)
