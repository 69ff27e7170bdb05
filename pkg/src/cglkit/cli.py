"""Command-line entry point.

Subcommands compose through directories: ``synth`` writes a graph,
``partition`` turns a graph into per-order task directories, ``homophily``
and ``verify-theorem`` analyze them, ``run`` trains a method and writes
performance matrices, ``metrics``/``summarize`` post-process results, and
``rerun`` re-executes any artifact directory from its manifest.

Exit codes: 0 success, 2 usage/configuration error, 3 data/validation error.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (CglkitError, ConfigError, GenerationError, ParseError,
                     StateError, TrainingError, UndefinedMetricError,
                     ValidationError)
from .experiment import (ExperimentConfig, learning_curve, run_experiment,
                         summary_row)
from .graph import load_graph_dir, save_graph
from .homophily import (graph_homophily_report, node_homophily_all,
                        performance_vs_homophily_report, verify_theorem)
from .kvio import dump_kv, read_kv, write_kv
from .metrics import (average_matrices, compute_af, compute_ap,
                      matrix_from_tsv, matrix_to_tsv)
from .graph import NodeIdMap
from .partition import (MODES, PartitionConfig, SubgraphTask, TaskSpec,
                        build_partition)
from .synth import SynthConfig, generate_with_metadata

USAGE_EXIT = 2
DATA_EXIT = 3


def _out_path(path_str: str) -> Path:
    root = os.environ.get("CGLKIT_OUT_ROOT")
    path = Path(path_str)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _fingerprint_dir(directory: Path) -> str:
    digest = hashlib.sha256()
    for name in ("edges.tsv", "labels.tsv", "features.tsv"):
        p = directory / name
        if p.exists():
            digest.update(name.encode())
            digest.update(p.read_bytes())
    return digest.hexdigest()


def _config_hash(config_pairs) -> str:
    text = dump_kv([(f"config.{k}", v) for k, v in config_pairs])
    return hashlib.sha256(text.encode()).hexdigest()


def _write_manifest(out_dir: Path, command: str, config_pairs, inputs: dict):
    pairs = [
        ("command", command),
        ("version", __version__),
        ("created_utc", datetime.now(timezone.utc).isoformat()),
        ("config_hash", _config_hash(config_pairs)),
    ]
    pairs.extend(inputs.items())
    pairs.extend((f"config.{k}", v) for k, v in config_pairs)
    write_kv(out_dir / "manifest.txt", pairs)


def _manifest_config(manifest: dict) -> dict:
    return {k[len("config."):]: v for k, v in manifest.items()
            if k.startswith("config.")}


# ---------------------------------------------------------------- synth

def cmd_synth(args) -> int:
    kv = read_kv(args.config)
    try:
        cfg = SynthConfig(
            node_count=int(kv["nodes"]),
            class_count=int(kv["classes"]),
            mean_labels_per_node=float(kv["mean_labels"]),
            target_edge_count=int(kv["edges"]),
            target_homophily=float(kv["homophily"]),
            seed=int(kv["seed"]),
            feature_noise=float(kv.get("feature_noise", "0.3")),
        )
    except KeyError as exc:
        raise ConfigError(f"synth config missing key {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ConfigError(f"bad synth config value: {exc}") from None

    out = _out_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out, "synth", sorted(kv.items()), {})
    graph, meta = generate_with_metadata(cfg)
    save_graph(graph, out)
    write_kv(out / "metadata.txt", meta)
    print(f"wrote graph: {graph.node_count} nodes, {graph.edge_count} edges, "
          f"homophily {meta['achieved_homophily']:.4f} -> {out}")
    return 0


# ------------------------------------------------------------- partition

def _partition_config_from_kv(kv: dict) -> tuple[PartitionConfig, str]:
    try:
        pcfg = PartitionConfig(
            small_class_threshold=int(kv.get("delta", "30")),
            group_size=int(kv.get("K", "2")),
            num_orders=int(kv.get("orders", "3")),
            proportions=tuple(float(x)
                              for x in kv.get("proportions", "0.6,0.2,0.2").split(",")),
            seed=int(kv.get("seed", "0")),
        )
    except ValueError as exc:
        raise ConfigError(f"bad partition config value: {exc}") from None
    mode = kv.get("mode", "taskil")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    return pcfg, mode


def cmd_partition(args) -> int:
    kv = read_kv(args.config)
    pcfg, mode = _partition_config_from_kv(kv)
    graph_dir = Path(args.graph)
    g = load_graph_dir(graph_dir)

    out = _out_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out, "partition", sorted(kv.items()),
                    {"graph_dir": str(graph_dir.resolve()),
                     "dataset_fingerprint": _fingerprint_dir(graph_dir)})

    result = build_partition(g, pcfg, mode)
    (out / "retained_classes.txt").write_text(
        ",".join(str(c) for c in result.retained_classes) + "\n", encoding="utf-8")
    for order in result.orders:
        order_dir = out / f"order_{order.order_index}"
        for task, split in zip(order.tasks, order.splits):
            task_dir = order_dir / f"task_{task.spec.time_index:02d}"
            save_graph(task.graph, task_dir)
            with open(task_dir / "nodes.tsv", "w", encoding="utf-8") as fh:
                for local, parent in enumerate(task.id_map.to_parent):
                    fh.write(f"{local}\t{parent}\n")
            with open(task_dir / "split.tsv", "w", encoding="utf-8") as fh:
                for name, ids in (("train", split.train), ("val", split.val),
                                  ("test", split.test)):
                    for v in ids:
                        fh.write(f"{v}\t{name}\n")
            task_warnings = [w for w in result.warnings
                             if w.order_index == order.order_index
                             and w.time_index == task.spec.time_index]
            write_kv(task_dir / "task.meta", [
                ("time_index", task.spec.time_index),
                ("order_index", order.order_index),
                ("mode", mode),
                ("classes", task.spec.class_set),
                ("visible_classes", task.visible_classes),
                ("warnings", "; ".join(w.kind + ":" + w.message
                                       for w in task_warnings)),
            ])
    with open(out / "warnings.log", "w", encoding="utf-8") as fh:
        for w in result.warnings:
            fh.write(w.as_line() + "\n")
    n_tasks = sum(len(o.tasks) for o in result.orders)
    print(f"wrote {len(result.orders)} orders, {n_tasks} task dirs -> {out}")
    return 0


def read_partition_dir(partition_dir: Path):
    """Rebuild the task sequences written by ``cglkit partition``."""
    manifest = read_kv(partition_dir / "manifest.txt")
    kv = _manifest_config(manifest)
    _, mode = _partition_config_from_kv(kv)
    group_size = int(kv.get("K", "2"))
    retained = [int(c) for c in
                (partition_dir / "retained_classes.txt").read_text().strip().split(",")]
    sequences = []
    for order_dir in sorted(partition_dir.glob("order_*")):
        tasks = []
        for task_dir in sorted(order_dir.glob("task_*")):
            sub = load_graph_dir(task_dir)
            meta = read_kv(task_dir / "task.meta")
            to_parent = np.loadtxt(task_dir / "nodes.tsv", dtype=np.int64,
                                   usecols=1, ndmin=1)
            visible = tuple(int(c) for c in meta["visible_classes"].split(","))
            spec = TaskSpec(
                time_index=int(meta["time_index"]),
                class_set=tuple(int(c) for c in meta["classes"].split(",")),
            )
            tasks.append(SubgraphTask(
                spec=spec, graph=sub,
                id_map=NodeIdMap.from_parent_ids(to_parent),
                projected_labels=sub.labels[:, np.asarray(visible, dtype=np.int64)].copy(),
                visible_classes=visible,
            ))
        sequences.append(tasks)
    return mode, group_size, retained, sequences, manifest


# ------------------------------------------------------------- homophily

def cmd_homophily(args) -> int:
    graph_dir = Path(args.graph)
    g = load_graph_dir(graph_dir)
    report = graph_homophily_report(g)
    out = _out_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_kv(out / "graph_homophily.txt", [
        ("graph_homophily", report.value),
        ("edge_count", g.edge_count),
        ("excluded_edges", report.excluded_edges),
    ])
    with open(out / "edge_homophily.tsv", "w", encoding="utf-8") as fh:
        for (u, v), h in zip(g.edges, report.edge_values):
            fh.write(f"{u}\t{v}\t" + ("NA" if np.isnan(h) else format(h, ".17g")) + "\n")
    node_h = node_homophily_all(g)
    with open(out / "node_homophily.tsv", "w", encoding="utf-8") as fh:
        for v, h in enumerate(node_h):
            fh.write(f"{v}\t" + ("NA" if np.isnan(h) else format(h, ".17g")) + "\n")
    if args.scores:
        scores = {}
        for line_no, line in enumerate(Path(args.scores).read_text().splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(args.scores, line_no, "expected 'node_id<TAB>score'")
            scores[int(parts[0])] = float(parts[1])
        groups = performance_vs_homophily_report(g, scores)
        with open(out / "score_groups.tsv", "w", encoding="utf-8") as fh:
            fh.write("group\tkind\tbucket\tpercent\n")
            for group in ("better", "worse"):
                for k, pct in groups.label_count_hist[group].items():
                    fh.write(f"{group}\tlabel_count\t{k}\t{pct:.6f}\n")
                for (lo, hi), pct in groups.node_homophily_hist[group].items():
                    fh.write(f"{group}\tnode_homophily\t{lo:.1f}-{hi:.1f}\t{pct:.6f}\n")
    print(f"graph homophily: {report.value:.6f} "
          f"({report.excluded_edges} label-free edges excluded)")
    return 0


def cmd_verify_theorem(args) -> int:
    g = load_graph_dir(Path(args.graph))
    mode, group_size, retained, sequences, _ = read_partition_dir(Path(args.partition))
    report = verify_theorem(g, sequences, mode, group_size,
                            retained_classes=retained)
    out = _out_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"theorem_{mode}.txt"
    path.write_text("\n".join(report.to_kv()) + "\n", encoding="utf-8")
    print(f"{report.total_occurrences()} edge occurrences, "
          f"{report.single_violations} single-label violations -> {path}")
    return 0 if report.single_violations == 0 else DATA_EXIT


# ------------------------------------------------------------------- run

def _write_run_outputs(out: Path, cfg: ExperimentConfig, result) -> None:
    for order in result.orders:
        path = out / f"M_{cfg.method}_{order.order_index}.tsv"
        path.write_text(matrix_to_tsv(order.matrix), encoding="utf-8")
    row = summary_row(result)
    with open(out / "summary.tsv", "w", encoding="utf-8") as fh:
        fh.write("method\tsetting\tAP_mean\tAP_std\tAF_mean\tAF_std\n")
        fh.write("\t".join([
            row["method"], row["setting"],
            format(row["AP_mean"], ".17g"), format(row["AP_std"], ".17g"),
            "NA" if row["AF_mean"] is None else format(row["AF_mean"], ".17g"),
            "NA" if row["AF_std"] is None else format(row["AF_std"], ".17g"),
        ]) + "\n")
    with open(out / "runtime.tsv", "w", encoding="utf-8") as fh:
        fh.write("order\ttask\tseconds\n")
        for order in result.orders:
            for t, sec in enumerate(order.task_seconds, start=1):
                fh.write(f"{order.order_index}\t{t}\t{sec:.6f}\n")
    with open(out / "warnings.log", "w", encoding="utf-8") as fh:
        for order in result.orders:
            for w in order.warnings:
                fh.write(w.as_line() + "\n")


def cmd_run(args) -> int:
    kv = read_kv(args.config)
    cfg = ExperimentConfig.from_kv(kv)
    graph_dir = Path(args.graph)
    g = load_graph_dir(graph_dir)
    out = _out_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out, "run", cfg.to_kv(),
                    {"graph_dir": str(graph_dir.resolve()),
                     "dataset_fingerprint": _fingerprint_dir(graph_dir)})
    parallel = args.parallel or int(os.environ.get("CGLKIT_PARALLEL", "1"))
    start = time.perf_counter()
    result = run_experiment(g, cfg, parallel=parallel)
    _write_run_outputs(out, cfg, result)
    row = summary_row(result)
    af_text = "NA" if row["AF_mean"] is None else f"{row['AF_mean']:.4f}"
    print(f"{cfg.method}/{cfg.mode}: AP {row['AP_mean']:.4f} AF {af_text} "
          f"({time.perf_counter() - start:.1f}s) -> {out}")
    return 0


# ----------------------------------------------------------------- metrics

def cmd_metrics(args) -> int:
    matrix = matrix_from_tsv(Path(args.matrix).read_text(encoding="utf-8"))
    print(f"AP={compute_ap(matrix):.6f}")
    try:
        print(f"AF={compute_af(matrix):.6f}")
    except UndefinedMetricError:
        print("AF=NA")
    return 0


def cmd_summarize(args) -> int:
    out = _out_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary_lines = ["method\tsetting\tAP_mean\tAP_std\tAF_mean\tAF_std"]
    curve_lines = ["method\tsetting\ttime_step\tvalue"]
    heat_lines = ["method\tsetting\trow\tcol\tvalue"]
    for run_dir in args.runs:
        run_dir = Path(run_dir)
        summary = (run_dir / "summary.tsv").read_text(encoding="utf-8").splitlines()
        summary_lines.extend(summary[1:])
        manifest = read_kv(run_dir / "manifest.txt")
        method = manifest.get("config.method", "?")
        setting = manifest.get("config.mode", "?")
        matrices = [matrix_from_tsv(p.read_text(encoding="utf-8"))
                    for p in sorted(run_dir.glob("M_*.tsv"))]
        if not matrices:
            raise ValidationError(f"{run_dir}: no performance matrices")
        avg = average_matrices(matrices)
        for t, value in learning_curve(avg):
            curve_lines.append(f"{method}\t{setting}\t{t}\t{format(value, '.17g')}")
        for i in range(avg.T):
            for k in range(i + 1):
                heat_lines.append(f"{method}\t{setting}\t{i + 1}\t{k + 1}\t"
                                  f"{format(avg.values[i, k], '.17g')}")
    (out / "combined_summary.tsv").write_text("\n".join(summary_lines) + "\n",
                                              encoding="utf-8")
    (out / "learning_curve.tsv").write_text("\n".join(curve_lines) + "\n",
                                            encoding="utf-8")
    (out / "heatmap.tsv").write_text("\n".join(heat_lines) + "\n", encoding="utf-8")
    print(f"summarized {len(args.runs)} runs -> {out}")
    return 0


# ------------------------------------------------------------------- rerun

def cmd_rerun(args) -> int:
    src = Path(args.run_dir)
    manifest = read_kv(src / "manifest.txt")
    command = manifest.get("command")
    kv = _manifest_config(manifest)
    out = _out_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg_path = out / "_rerun_config.txt"
    write_kv(cfg_path, sorted(kv.items()))
    if command == "synth":
        ns = argparse.Namespace(config=cfg_path, out=str(out))
        return cmd_synth(ns)
    if command == "partition":
        ns = argparse.Namespace(config=cfg_path, out=str(out),
                                graph=manifest["graph_dir"])
        return cmd_partition(ns)
    if command == "run":
        ns = argparse.Namespace(config=cfg_path, out=str(out),
                                graph=manifest["graph_dir"], parallel=None)
        return cmd_run(ns)
    raise ConfigError(f"manifest command {command!r} is not rerunnable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cglkit",
        description="Continual graph learning benchmark toolkit.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic multi-label graph")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("partition", help="build task sequences and splits")
    p.add_argument("--graph", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("homophily", help="graph/node/edge label homophily")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scores", help="optional node_id<TAB>score TSV for "
                                    "better/worse-than-average grouping")
    p.set_defaults(func=cmd_homophily)

    p = sub.add_parser("verify-theorem",
                       help="check subgraph homophily guarantees empirically")
    p.add_argument("--graph", required=True)
    p.add_argument("--partition", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_verify_theorem)

    p = sub.add_parser("run", help="train a method over the task sequences")
    p.add_argument("--graph", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--parallel", type=int, default=None,
                   help="worker processes for independent class orders")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("metrics", help="print AP/AF for a matrix TSV")
    p.add_argument("--matrix", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("summarize", help="combine run dirs into plot-ready tables")
    p.add_argument("runs", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("rerun", help="re-execute a directory from its manifest")
    p.add_argument("run_dir")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rerun)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (ParseError, ValidationError, GenerationError, UndefinedMetricError,
            StateError, TrainingError, OSError) as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return DATA_EXIT
    except CglkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
