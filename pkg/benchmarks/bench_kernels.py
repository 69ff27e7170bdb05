#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

The two hot loops are the CSR spmm inside GCN training and the per-edge
label-set Jaccard scan inside homophily analysis. Run:

    python3 benchmarks/bench_kernels.py [--nodes N] [--repeats R]
"""

import argparse
import time

import numpy as np

from cglkit import _core_py

try:
    from cglkit import _core
except ImportError:
    _core = None


def build_inputs(n_nodes, avg_degree=12, feat_dim=64, n_classes=20, seed=0):
    rng = np.random.default_rng(seed)
    n_edges = n_nodes * avg_degree // 2
    pairs = set()
    while len(pairs) < n_edges:
        u, v = rng.integers(0, n_nodes, size=2)
        if u != v:
            pairs.add((min(u, v), max(u, v)))
    edges = np.array(sorted(pairs), dtype=np.int64)

    # symmetric CSR with self-loops, like the normalized adjacency
    rows = np.concatenate([edges[:, 0], edges[:, 1], np.arange(n_nodes)])
    cols = np.concatenate([edges[:, 1], edges[:, 0], np.arange(n_nodes)])
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_nodes), out=indptr[1:])
    data = rng.random(rows.size)

    dense = np.ascontiguousarray(rng.standard_normal((n_nodes, feat_dim)))

    labels = (rng.random((n_nodes, n_classes)) < 0.15).astype(np.int8)
    labels[labels.sum(axis=1) == 0, 0] = 1
    lab_rows, lab_cols = np.nonzero(labels)
    lab_indptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(lab_rows, minlength=n_nodes), out=lab_indptr[1:])
    lab_indices = lab_cols.astype(np.int64)

    return {
        "spmm": (indptr, cols.astype(np.int64), data, dense),
        "jaccard": (np.ascontiguousarray(edges[:, 0]),
                    np.ascontiguousarray(edges[:, 1]),
                    lab_indptr, lab_indices),
        "nnz": rows.size,
        "edges": edges.shape[0],
    }


def time_call(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--nodes", type=int, default=20_000)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    inputs = build_inputs(args.nodes)
    print(f"graph: {args.nodes} nodes, {inputs['edges']} edges, "
          f"{inputs['nnz']} adjacency nonzeros")
    print(f"{'kernel':<18}{'backend':<10}{'best (ms)':>12}{'speedup':>10}")

    for kernel, fn_name in (("csr_dense_matmul", "spmm"),
                            ("edge_jaccard", "jaccard")):
        py_time, py_out = time_call(getattr(_core_py, kernel),
                                    inputs[fn_name], args.repeats)
        print(f"{kernel:<18}{'python':<10}{py_time * 1e3:>12.2f}{'1.0x':>10}")
        if _core is not None:
            c_time, c_out = time_call(getattr(_core, kernel),
                                      inputs[fn_name], args.repeats)
            same = np.allclose(py_out, c_out, atol=1e-9, equal_nan=True)
            print(f"{kernel:<18}{'compiled':<10}{c_time * 1e3:>12.2f}"
                  f"{py_time / c_time:>9.1f}x  (results match: {same})")
        else:
            print(f"{kernel:<18}{'compiled':<10}{'unavailable':>12}")


if __name__ == "__main__":
    main()
