# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: CSR spmm and per-edge label-set Jaccard.

These are the two inner loops that dominate runtime (GCN training and
homophily scans over task sequences). The numpy fallback in ``_core_py``
implements the identical contracts.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def csr_dense_matmul(const cnp.int64_t[::1] indptr,
                     const cnp.int64_t[::1] indices,
                     const cnp.float64_t[::1] data,
                     const cnp.float64_t[:, ::1] dense):
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    cdef Py_ssize_t n_cols = dense.shape[1]
    out_arr = np.zeros((n_rows, n_cols), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] out = out_arr
    cdef Py_ssize_t i, k, j
    cdef cnp.int64_t col
    cdef cnp.float64_t w
    for i in range(n_rows):
        for k in range(indptr[i], indptr[i + 1]):
            col = indices[k]
            w = data[k]
            for j in range(n_cols):
                out[i, j] += w * dense[col, j]
    return out_arr


def edge_jaccard(const cnp.int64_t[::1] eu,
                 const cnp.int64_t[::1] ev,
                 const cnp.int64_t[::1] lab_indptr,
                 const cnp.int64_t[::1] lab_indices):
    cdef Py_ssize_t n_edges = eu.shape[0]
    out_arr = np.empty(n_edges, dtype=np.float64)
    cdef cnp.float64_t[::1] out = out_arr
    cdef Py_ssize_t e
    cdef cnp.int64_t a, b, a_end, b_end, inter, size_a, size_b, union_
    for e in range(n_edges):
        a = lab_indptr[eu[e]]
        a_end = lab_indptr[eu[e] + 1]
        b = lab_indptr[ev[e]]
        b_end = lab_indptr[ev[e] + 1]
        size_a = a_end - a
        size_b = b_end - b
        inter = 0
        while a < a_end and b < b_end:
            if lab_indices[a] == lab_indices[b]:
                inter += 1
                a += 1
                b += 1
            elif lab_indices[a] < lab_indices[b]:
                a += 1
            else:
                b += 1
        union_ = size_a + size_b - inter
        if union_ == 0:
            out[e] = <cnp.float64_t> float("nan")
        else:
            out[e] = <cnp.float64_t> inter / <cnp.float64_t> union_
    return out_arr
