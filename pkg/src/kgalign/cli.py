"""Command-line entry point.

Subcommands: prepare, synth, train, eval, sweep, ablate, dualgraph-stats.
Config files are flat ``key = value`` text; command-line flags override file
values, and the fully resolved config is echoed into the output directory.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from typing import Dict, List, Optional

import numpy as np

from . import pipeline
from .dual_graph import build_dual_graph
from .evaluation import AlignmentReport, find_triangular_entities
from .graph_model import DatasetError, load_dataset
from .network import Variant, build_index, forward
from .pipeline import RunConfig, parse_config_file, resolve_config
from .synthgen import SynthConfig, generate

OUT_ROOT_ENV = "KGALIGN_OUT_ROOT"


def _out_dir(args, command: str) -> str:
    if getattr(args, "out", None):
        path = args.out
    else:
        root = os.environ.get(OUT_ROOT_ENV, "runs")
        stamp = time.strftime("%Y%m%d-%H%M%S")
        path = os.path.join(root, f"{stamp}-{command}")
    os.makedirs(path, exist_ok=True)
    return path


def _common_overrides(args) -> Dict[str, object]:
    keys = ("dataset", "embeddings", "dim", "variant", "epochs", "rng_seed",
            "split_fraction", "split_seed", "margin", "negatives_per_side",
            "negative_refresh_epochs", "learning_rate", "optimizer",
            "direction", "candidate_pool")
    out: Dict[str, object] = {}
    for key in keys:
        if hasattr(args, key) and getattr(args, key) is not None:
            out[key] = getattr(args, key)
    if getattr(args, "ks", None):
        out["ks"] = tuple(int(k) for k in args.ks.split(","))
    return out


def _load_config(args) -> RunConfig:
    file_values = parse_config_file(args.config) if getattr(args, "config", None) else {}
    return resolve_config(file_values, _common_overrides(args))


def _report_text(report: AlignmentReport) -> str:
    lines = [f"direction: {report.direction}"]
    for k, v in sorted(report.hits.items()):
        lines.append(f"hits@{k}: {v:.6f}")
    if report.triangle_total is not None:
        lines.append(f"triangle-involved test entities: {report.triangle_total}")
        lines.append(f"triangle correct (rank 1): {report.triangle_correct}")
        if report.triangle_rate is not None:
            lines.append(f"triangle rate: {report.triangle_rate:.6f}")
    lines.append(f"config fingerprint: {report.config_fingerprint}")
    for sub in report.sub_reports:
        lines.append(f"  [{sub.direction}] " + " ".join(
            f"hits@{k}={v:.6f}" for k, v in sorted(sub.hits.items())))
    return "\n".join(lines) + "\n"


def _write_report(out_dir: str, report: AlignmentReport, config: RunConfig) -> None:
    with open(os.path.join(out_dir, "report.txt"), "w") as fh:
        fh.write(_report_text(report))
    payload = {"schema_version": 1, "report": report.to_dict(),
               "config": config.to_dict(),
               "config_fingerprint": config.fingerprint()}
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# subcommands


def cmd_prepare(args) -> int:
    dataset = load_dataset(args.dataset, split_fraction=args.split_fraction or 0.3,
                           rng_seed=args.split_seed or 0)
    g = dataset.graph
    n1 = g.kg1_entity_count
    m1 = g.kg1_relation_count
    kg1_triples = sum(1 for h, _, _ in g.triples if h < n1)
    print(f"entities: {n1} + {g.entity_count - n1}")
    print(f"relations: {m1} + {g.relation_count - m1}")
    print(f"triples: {kg1_triples} + {len(g.triples) - kg1_triples}")
    print(f"seeds: {len(dataset.seeds.train)} train / {len(dataset.seeds.test)} test")
    dual = build_dual_graph(g)
    print(f"dual graph: {dual.vertex_count} vertices, {dual.edge_count()} edges")
    return 0


def cmd_synth(args) -> int:
    out_dir = _out_dir(args, "synth")
    config = SynthConfig(
        entities_per_kg=args.entities, relation_count=args.relations,
        triple_count=args.triples, edge_dropout=args.dropout,
        name_noise=args.name_noise, embedding_dim=args.dim,
        rng_seed=args.rng_seed or 0, seed_fraction=args.seed_fraction or 0.3,
        planted_triangles=args.triangles)
    result = generate(config, out_dir)
    print(f"wrote synthetic dataset to {result.directory} "
          f"({result.base_triples} base triples)")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    out_dir = _out_dir(args, "train")
    log_path = os.path.join(out_dir, "train_log.jsonl")
    with open(log_path, "w") as log_fh:
        def log_cb(record):
            log_fh.write(json.dumps(record) + "\n")
        artifacts = pipeline.run(config, log_callback=log_cb)
    g = artifacts.dataset.graph
    pipeline.save_checkpoint(os.path.join(out_dir, "checkpoint.npz"),
                             artifacts.params, config,
                             g.entity_count, g.relation_count)
    _write_report(out_dir, artifacts.report, config)
    print(_report_text(artifacts.report), end="")
    print(f"artifacts in {out_dir}")
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args)
    out_dir = _out_dir(args, "eval")
    params, header = pipeline.load_checkpoint(args.checkpoint)
    config.dim = header["dim"]
    dataset, _ = pipeline.prepare_dataset(config)
    pipeline.check_compatible(header, dataset, params.dim)
    index = build_index(dataset.graph, build_dual_graph(dataset.graph))
    variant = Variant.parse(args.variant or header["variant"])
    x_bar, _, _ = forward(index, params, variant, requires_grad=False)
    report = pipeline.evaluate_final(x_bar.value, dataset, config,
                                     include_ranks=args.ranks)
    _write_report(out_dir, report, config)
    print(_report_text(report), end="")
    print(f"artifacts in {out_dir}")
    return 0


def _write_table(out_dir: str, rows: List[dict], name: str) -> None:
    with open(os.path.join(out_dir, f"{name}.json"), "w") as fh:
        json.dump({"schema_version": 1, "rows": rows}, fh, indent=2, sort_keys=True)


def cmd_sweep(args) -> int:
    config = _load_config(args)
    out_dir = _out_dir(args, "sweep")
    fractions = [float(f) for f in args.fractions.split(",")]
    rows = []
    failed = False
    for frac in fractions:
        cell = resolve_config({}, {**_common_overrides(args), "split_fraction": frac})
        try:
            report = pipeline.run(cell).report
            rows.append({"fraction": frac, "hits": report.to_dict()["hits"]})
            print(f"fraction {frac}: hits@1 = {report.hits[1]:.6f}")
        except Exception as exc:  # noqa: BLE001 - keep remaining cells running
            rows.append({"fraction": frac, "error": str(exc)})
            print(f"fraction {frac}: FAILED ({exc})", file=sys.stderr)
            failed = True
    _write_table(out_dir, rows, "sweep")
    return 1 if failed else 0


def cmd_ablate(args) -> int:
    config = _load_config(args)
    out_dir = _out_dir(args, "ablate")
    variants = args.variants.split(",")
    rows = []
    failed = False
    for name, report, error in pipeline.ablate(config, variants):
        if report is None:
            rows.append({"variant": name, "error": error})
            print(f"{name}: FAILED ({error})", file=sys.stderr)
            failed = True
        else:
            rows.append({"variant": name, "hits": report.to_dict()["hits"]})
            print(f"{name}: hits@1 = {report.hits[1]:.6f}")
    _write_table(out_dir, rows, "ablation")
    return 1 if failed else 0


def cmd_dualgraph_stats(args) -> int:
    dataset = load_dataset(args.dataset)
    dual = build_dual_graph(dataset.graph)
    weights = [w for (i, j), w in dual.weights.items() if i < j]
    isolated = sum(1 for nbrs in dual.neighbors if len(nbrs) == 1)
    hist, edges = np.histogram(weights, bins=10, range=(0.0, 2.0)) if weights \
        else (np.zeros(10, dtype=int), np.linspace(0, 2, 11))
    stats = {
        "vertices": dual.vertex_count,
        "edges": dual.edge_count(),
        "isolated_vertices": isolated,
        "weight_histogram": {
            f"{edges[i]:.1f}-{edges[i + 1]:.1f}": int(hist[i]) for i in range(len(hist))
        },
    }
    print(f"vertices: {stats['vertices']}")
    print(f"edges (self-edges included): {stats['edges']}")
    print(f"isolated vertices (self-edge only): {isolated}")
    for bucket, count in stats["weight_histogram"].items():
        print(f"  w {bucket}: {count}")
    if getattr(args, "out", None):
        out_dir = _out_dir(args, "dualgraph-stats")
        with open(os.path.join(out_dir, "dualgraph_stats.json"), "w") as fh:
            json.dump(stats, fh, indent=2, sort_keys=True)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--dataset", help="dataset directory")
    p.add_argument("--embeddings", help="name-embedding file")
    p.add_argument("--out", help="output directory (default: timestamped)")
    p.add_argument("--dim", type=int)
    p.add_argument("--seed", dest="rng_seed", type=int)
    p.add_argument("--variant", help="rdgcn | hgcn-s | gcn-s | rd")
    p.add_argument("--epochs", type=int)
    p.add_argument("--split-fraction", dest="split_fraction", type=float)
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.add_argument("--margin", type=float)
    p.add_argument("--negatives-per-side", dest="negatives_per_side", type=int)
    p.add_argument("--negative-refresh-epochs", dest="negative_refresh_epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--optimizer", choices=("adam", "sgd"))
    p.add_argument("--ks", help="comma-separated k list, e.g. 1,10")
    p.add_argument("--direction", choices=("kg1-kg2", "kg2-kg1", "both"))
    p.add_argument("--candidate-pool", dest="candidate_pool", choices=("test", "all"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgalign",
        description="Relation-aware entity alignment across knowledge graphs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="load and validate a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split-fraction", dest="split_fraction", type=float)
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out")
    p.add_argument("--entities", type=int, default=200)
    p.add_argument("--relations", type=int, default=20)
    p.add_argument("--triples", type=int, default=800)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--name-noise", dest="name_noise", type=float, default=0.1)
    p.add_argument("--dim", type=int, default=50)
    p.add_argument("--seed", dest="rng_seed", type=int)
    p.add_argument("--seed-fraction", dest="seed_fraction", type=float)
    p.add_argument("--triangles", type=int, default=5)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    _add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--ranks", action="store_true", help="include per-pair ranks")
    _add_run_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="seed-fraction sweep")
    p.add_argument("--fractions", required=True, help="e.g. 0.1,0.2,0.3,0.4")
    _add_run_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate", help="run model variants side by side")
    p.add_argument("--variants", default="gcn-s,hgcn-s,rd,rdgcn")
    _add_run_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("dualgraph-stats", help="dual relation graph statistics")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dualgraph_stats)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DatasetError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
