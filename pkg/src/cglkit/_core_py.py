"""Pure-numpy implementations of the hot kernels.

Same contracts as the compiled module ``cglkit._core``; used when the
extension is unavailable or ``CGLKIT_PURE_PYTHON=1`` is set.
"""

import numpy as np


def csr_dense_matmul(indptr, indices, data, dense):
    """Multiply a CSR matrix (indptr/indices/data) by a dense float64 matrix."""
    n_rows = indptr.shape[0] - 1
    out = np.zeros((n_rows, dense.shape[1]), dtype=np.float64)
    if indices.shape[0] == 0:
        return out
    rows = np.repeat(np.arange(n_rows, dtype=np.int64), np.diff(indptr))
    np.add.at(out, rows, data[:, None] * dense[indices])
    return out


def edge_jaccard(eu, ev, lab_indptr, lab_indices):
    """Jaccard similarity of the label sets at each edge's endpoints.

    Labels are given in CSR form: row v's sorted class ids are
    ``lab_indices[lab_indptr[v]:lab_indptr[v+1]]``. Edges whose endpoints are
    both label-free yield NaN.
    """
    n_nodes = lab_indptr.shape[0] - 1
    n_classes = int(lab_indices.max()) + 1 if lab_indices.shape[0] else 1
    dense = np.zeros((n_nodes, n_classes), dtype=np.float64)
    rows = np.repeat(np.arange(n_nodes, dtype=np.int64), np.diff(lab_indptr))
    dense[rows, lab_indices] = 1.0
    sizes = dense.sum(axis=1)
    inter = np.einsum("ij,ij->i", dense[eu], dense[ev])
    union = sizes[eu] + sizes[ev] - inter
    out = np.full(eu.shape[0], np.nan, dtype=np.float64)
    ok = union > 0
    out[ok] = inter[ok] / union[ok]
    return out
