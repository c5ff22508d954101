"""Command-line entry point: train, eval, analyze, gensynth, compare."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, config_keys, read_config, set_value, validate
from .evaluation import evaluate
from .graph import (GraphFormatError, InfeasibleConfigError, MultiRelationGraph, feature_similarity,
                    generate_synthetic, label_similarity, merge_relations, read_graph, save_graph,
                    split)
from .numeric import AdamState
from .trainer import NEIGHBOR_MODES, TrainingAborted, build_model, train

logger = logging.getLogger("care_gnn")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("train", "eval", "analyze", "gensynth", "compare")


class DataError(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="care-gnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    types = {f.name: f.type for f in fields(RunConfig)}
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("-v", "--verbose", action="store_true")
        for key in config_keys():
            flags = [f"--{key}"]
            if "_" in key:
                flags.append(f"--{key.replace('_', '-')}")
            extra = {"nargs": "?", "const": "true"} if types[key] == "bool" else {}
            p.add_argument(*flags, dest=f"opt_{key}", metavar="VALUE", default=None, **extra)
    return parser


def resolve_config(args) -> tuple[RunConfig, set[str]]:
    cfg = read_config(args.config) if args.config else RunConfig()
    given = set()
    for key in config_keys():
        value = getattr(args, f"opt_{key}")
        if value is not None:
            set_value(cfg, key, value, Path.cwd())
            given.add(key)
    validate(cfg, given)
    return cfg, given


def check_paths(cfg: RunConfig) -> None:
    """Fail before any work if input files are missing."""
    if cfg.synthetic:
        return
    if not cfg.nodes:
        raise ConfigError("no node file configured (set nodes or synthetic = true)")
    if not cfg.relations:
        raise ConfigError("no relation files configured")
    for path in (cfg.nodes, *cfg.relations):
        if not Path(path).is_file():
            raise DataError(f"no such file: {path}")


def load_source(cfg: RunConfig) -> MultiRelationGraph:
    check_paths(cfg)
    if cfg.synthetic:
        return generate_synthetic(cfg.synthetic_config())
    graph, cleanups = read_graph(cfg.nodes, cfg.relations, cfg.relation_names or None)
    for name, c in zip(graph.relation_names, cleanups):
        if c.self_loops or c.duplicates:
            logger.info("%s: dropped %d self-loops and %d duplicate edges", name, c.self_loops, c.duplicates)
    return graph


def _output_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _threshold_rows(report) -> list[dict]:
    return [dict(e.as_dict(), epoch=report.epoch) for e in report.thresholds]


def _dump(fh, row: dict) -> None:
    fh.write(json.dumps(row, sort_keys=True) + "\n")
    fh.flush()


def cmd_train(cfg: RunConfig) -> int:
    graph = load_source(cfg)
    data_split = split(graph, cfg.train_fraction, cfg.split_seed)
    tcfg = cfg.train_config()
    out = _output_dir(cfg)
    ckpt = out / "checkpoint.bin"
    optimizer, start = None, 0
    if cfg.resume:
        model, optimizer, manifest = load_checkpoint(cfg.resume)
        _check_compatible(model, graph)
        if model.shape != tcfg.model_shape(graph):
            raise ConfigError("resume checkpoint was trained with a different model shape")
        start = int(manifest["epoch"])
    else:
        model = build_model(graph, tcfg)
    mode = "a" if cfg.resume else "w"
    with open(out / "metrics.jsonl", mode, encoding="utf-8", newline="\n") as metrics, \
            open(out / "thresholds.jsonl", mode, encoding="utf-8", newline="\n") as thresholds:
        if not cfg.resume:
            _dump(metrics, {"type": "config", "config": _config_row(cfg),
                            "num_train": int(data_split.train_ids.size),
                            "num_test": int(data_split.test_ids.size)})
        if optimizer is None:
            optimizer = AdamState.for_params(model.params)

        def on_epoch(report):
            _dump(metrics, report.as_dict())
            for row in _threshold_rows(report):
                _dump(thresholds, row)
            save_checkpoint(ckpt, model, optimizer, report.epoch, extra={"config": _config_row(cfg)})

        train(model, graph, data_split, tcfg, optimizer=optimizer, start_epoch=start, on_epoch=on_epoch)
    print(f"trained {tcfg.epochs - start} epochs; outputs in {out}")
    return EXIT_OK


def _check_compatible(model, graph: MultiRelationGraph) -> None:
    s = model.shape
    if s.feature_dim != graph.feature_dim or s.num_relations != graph.num_relations:
        raise DataError(f"checkpoint expects {s.feature_dim} features and {s.num_relations} relations, "
                        f"graph has {graph.feature_dim} and {graph.num_relations}")


def _config_row(cfg: RunConfig) -> dict:
    # paths are left out so that runs in different directories stay comparable
    skip = {"nodes", "relations", "output_dir", "checkpoint", "resume", "ci", "json"}
    row = {}
    for key in config_keys():
        if key not in skip:
            v = getattr(cfg, key)
            row[key] = list(v) if isinstance(v, tuple) else v
    return row


def cmd_eval(cfg: RunConfig) -> int:
    path = Path(cfg.checkpoint) if cfg.checkpoint else Path(cfg.output_dir) / "checkpoint.bin"
    if not path.is_file():
        raise DataError(f"no such checkpoint: {path}")
    graph = load_source(cfg)
    model, _, manifest = load_checkpoint(path)
    _check_compatible(model, graph)
    test_ids = split(graph, cfg.train_fraction, cfg.split_seed).test_ids
    labels = graph.labels[test_ids]
    if labels.min() == labels.max():
        raise DataError("test split lacks one of the two classes")
    reports = {head: evaluate(model, graph, test_ids, head).as_dict() for head in ("gnn", "simi")}
    if cfg.json:
        print(json.dumps({"type": "eval", "epoch": manifest["epoch"], **reports}, sort_keys=True))
    else:
        print(f"checkpoint {path} (epoch {manifest['epoch']}), {labels.size} test nodes")
        for head, r in reports.items():
            print(f"  {head:5s} AUC {r['auc']:.4f}  recall {r['recall_macro']:.4f} "
                  f"(benign {r['recall_benign']:.4f}, fraud {r['recall_fraud']:.4f})")
    return EXIT_OK


def analyze_rows(graph: MultiRelationGraph) -> list[dict]:
    """Edge count, feature similarity and label similarity per relation plus the merged graph."""
    merged = merge_relations(graph, "ALL")
    rows = []
    for g, r in [(graph, r) for r in range(graph.num_relations)] + [(merged, 0)]:
        edges = g.num_edges(r)
        row = {"relation": g.relation_names[r], "edges": edges,
               "feature_similarity": None, "label_similarity": None}
        if edges:
            row["feature_similarity"] = feature_similarity(g, r)
            row["label_similarity"] = label_similarity(g, r)
        rows.append(row)
    return rows


def cmd_analyze(cfg: RunConfig) -> int:
    rows = analyze_rows(load_source(cfg))
    if cfg.json:
        for row in rows:
            print(json.dumps(row, sort_keys=True))
        return EXIT_OK

    def fmt(v):
        return "n/a" if v is None else f"{v:.4f}"
    print(f"{'relation':<12}{'edges':>10}{'avg feat sim':>14}{'avg label sim':>15}")
    for row in rows:
        edges = "n/a" if row["edges"] == 0 else str(row["edges"])
        print(f"{row['relation']:<12}{edges:>10}{fmt(row['feature_similarity']):>14}"
              f"{fmt(row['label_similarity']):>15}")
    return EXIT_OK


def cmd_gensynth(cfg: RunConfig) -> int:
    syn = cfg.synthetic_config()
    try:
        syn.validate()
        graph = generate_synthetic(syn)
    except (InfeasibleConfigError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    out = _output_dir(cfg)
    rel_paths = [out / f"{name}.tsv" for name in graph.relation_names]
    save_graph(graph, out / "nodes.tsv", rel_paths)
    (out / "graph.cfg").write_text(
        "# written by gensynth\nnodes = nodes.tsv\n"
        f"relations = {','.join(p.name for p in rel_paths)}\n"
        f"relation_names = {','.join(graph.relation_names)}\n", encoding="utf-8")
    for name, r in zip(graph.relation_names, range(graph.num_relations)):
        h = label_similarity(graph, r) if graph.num_edges(r) else float("nan")
        print(f"{name}\tedges {graph.num_edges(r)}\thomophily {h:.4f}")
    return EXIT_OK


def compare_rows(graph: MultiRelationGraph, cfg: RunConfig) -> list[dict]:
    """Train adaptive, fixed-half and fixed-all with the same seed; one row per evaluation."""
    data_split = split(graph, cfg.train_fraction, cfg.split_seed)
    rows = []
    for mode in NEIGHBOR_MODES:
        tcfg = replace(cfg.train_config(), neighbor_mode=mode)
        model = build_model(graph, tcfg)
        _, reports = train(model, graph, data_split, tcfg)
        for rep in reports:
            if rep.eval:
                gnn = rep.eval["gnn"]
                rows.append({"type": "compare", "mode": mode, "epoch": rep.epoch, "auc": gnn["auc"],
                             "recall_macro": gnn["recall_macro"],
                             "thresholds": [e.threshold for e in rep.thresholds]})
    return rows


def cmd_compare(cfg: RunConfig) -> int:
    graph = load_source(cfg)
    rows = compare_rows(graph, cfg)
    out = _output_dir(cfg)
    with open(out / "comparison.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            _dump(fh, row)
    for mode in NEIGHBOR_MODES:
        last = [r for r in rows if r["mode"] == mode]
        if last:
            print(f"{mode:<11} epoch {last[-1]['epoch']:>3}  AUC {last[-1]['auc']:.4f}  "
                  f"recall {last[-1]['recall_macro']:.4f}")
    return EXIT_OK


HANDLERS = {"train": cmd_train, "eval": cmd_eval, "analyze": cmd_analyze,
            "gensynth": cmd_gensynth, "compare": cmd_compare}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        cfg, _ = resolve_config(args)
        return HANDLERS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError, GraphFormatError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingAborted as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
