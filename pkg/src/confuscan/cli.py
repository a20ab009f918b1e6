"""Command-line interface: index building, scanning, training, evaluation."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from datetime import datetime, timezone

from . import forest as forest_mod
from . import harness
from .candidate_index import build_index, load_index, save_index
from .features import FeatureSchemaError, read_csv
from .namevec import DEFAULT_DIMENSION, DEFAULT_SEED, EmbeddingProvider
from .pipeline import ScanConfig, ScanError, scan, scan_batch
from .registry import MetadataStore, StoreError
from .target_analysis import EcosystemStats, popularity_score

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFUSION = 2


def _parse_snapshot(value: str | None) -> datetime | None:
    if value is None:
        return None
    ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts


def _emit(doc, output_format: str, out=None) -> None:
    out = out or sys.stdout
    if output_format == "json":
        json.dump(doc, out, indent=2, sort_keys=True)
        out.write("\n")
    else:
        rows = doc if isinstance(doc, list) else [doc]
        flat = [
            {k: v for k, v in row.items() if not isinstance(v, (dict, list))}
            for row in rows
        ]
        if flat and flat[0]:
            writer = csv.DictWriter(out, fieldnames=list(flat[0]))
            writer.writeheader()
            writer.writerows(flat)


def cmd_index_build(args) -> int:
    try:
        store = MetadataStore.open(args.store)
    except StoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    records = store.all_records(args.ecosystem)
    if not records:
        print(f"error: no {args.ecosystem} records in {args.store}", file=sys.stderr)
        return EXIT_ERROR
    stats = EcosystemStats.from_records(records)
    provider = EmbeddingProvider(dimension=args.dimension, seed=args.seed)
    entries = [(r.name, popularity_score(r, stats)) for r in records]
    try:
        index = build_index(entries, provider)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    save_index(index, args.index)
    stats.save(args.stats)
    print(f"indexed {len(index)} {args.ecosystem} packages -> {args.index}")
    return EXIT_OK


def _scan_config(args) -> ScanConfig:
    store = MetadataStore.open(args.store, create=not args.offline)
    return ScanConfig(
        ecosystem=args.ecosystem,
        store=store,
        index=load_index(args.index),
        model=forest_mod.load(args.model),
        stats=EcosystemStats.load(args.stats),
        offline=args.offline,
        content_enabled=not args.no_content,
        cache_dir=args.cache_dir,
        snapshot_time=_parse_snapshot(args.snapshot_time),
    )


def cmd_scan(args) -> int:
    try:
        config = _scan_config(args)
        report = scan(config, args.name)
    except (ScanError, StoreError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    _emit(report.to_json(), args.output)
    return EXIT_CONFUSION if report.decision == "Confusion" else EXIT_OK


def cmd_scan_batch(args) -> int:
    try:
        config = _scan_config(args)
    except (StoreError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    names = list(args.names)
    if args.names_file:
        with open(args.names_file, encoding="utf-8") as fh:
            names.extend(line.strip() for line in fh if line.strip())
    results = scan_batch(config, names)
    docs = []
    any_confusion = False
    for name, result in zip(names, results):
        if isinstance(result, ScanError):
            docs.append({"input": {"name": name}, "error": str(result)})
        else:
            docs.append(result.to_json())
            any_confusion = any_confusion or result.decision == "Confusion"
    _emit(docs, args.output)
    return EXIT_CONFUSION if any_confusion else EXIT_OK


def _grid(args) -> tuple[forest_mod.Hyperparams, ...]:
    if args.grid == "small":
        return (forest_mod.Hyperparams(n_trees=100, max_depth=8, min_leaf=1),)
    return forest_mod.DEFAULT_GRID


def cmd_train(args) -> int:
    try:
        rows = read_csv(args.features)
    except FeatureSchemaError as exc:
        print(f"error: {exc}; offending columns: {exc.columns}", file=sys.stderr)
        return EXIT_ERROR
    try:
        model, best_hp, _, metrics = harness.train_model(rows, grid=_grid(args), seed=args.seed)
    except (forest_mod.DegenerateModelError, forest_mod.StratificationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    forest_mod.save(model, args.model)
    summary = {
        "hyperparams": {
            "n_trees": best_hp.n_trees,
            "max_depth": best_hp.max_depth,
            "min_leaf": best_hp.min_leaf,
        },
        "threshold": model.threshold,
        "oof_auc": metrics["auc"],
        "oof_f1_confusion": metrics["per_class"][1]["f1"],
        "oof_recall_confusion": metrics["per_class"][1]["recall"],
        "oof_precision_confusion": metrics["per_class"][1]["precision"],
        "accuracy": metrics["accuracy"],
    }
    _emit(summary, args.output)
    return EXIT_OK


def cmd_eval_tdr(args) -> int:
    index = load_index(args.index)
    pairs = harness.load_pair_dataset(args.pairs)
    ks = tuple(int(k) for k in args.k.split(","))
    strategies = [args.strategy] if args.strategy != "all" else list(harness.STRATEGIES)
    tables = [harness.tdr_table(index, pairs, strategy, ks) for strategy in strategies]
    _emit(
        [
            {"strategy": t["strategy"], "evaluated": t["evaluated"],
             **{f"tdr@{k}": v for k, v in t["tdr"].items()}}
            for t in tables
        ],
        args.output,
    )
    return EXIT_OK


def _selected_configs(args) -> tuple[harness.AblationConfig, ...]:
    if not args.configs:
        return harness.ABLATION_CONFIGS
    by_name = {c.name: c for c in harness.ABLATION_CONFIGS}
    chosen = []
    for name in args.configs:
        if name not in by_name:
            raise ValueError(f"unknown configuration {name!r}; known: {sorted(by_name)}")
        chosen.append(by_name[name])
    return tuple(chosen)


def cmd_ablate(args) -> int:
    try:
        rows = read_csv(args.features)
        configs = _selected_configs(args)
        results = harness.ablate(rows, configs=configs, grid=_grid(args), seed=args.seed)
    except (FeatureSchemaError, ValueError, forest_mod.StratificationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    _emit(results, args.output)
    return EXIT_OK


def cmd_adversarial(args) -> int:
    try:
        rows = read_csv(args.features)
        configs = _selected_configs(args)
        results = harness.adversarial_eval(rows, configs=configs, grid=_grid(args), seed=args.seed)
    except (FeatureSchemaError, ValueError, forest_mod.StratificationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    _emit(results, args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="confuscan", description="Package-confusion detection and evaluation."
    )
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--ecosystem", choices=("npm", "pypi", "cargo"), default="npm")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--output", choices=("json", "csv"), default="json")

    p = sub.add_parser("index-build", help="build the candidate index from a metadata store")
    add_common(p)
    p.add_argument("--store", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--dimension", type=int, default=DEFAULT_DIMENSION)
    p.set_defaults(func=cmd_index_build)

    for name, func, batch in (("scan", cmd_scan, False), ("scan-batch", cmd_scan_batch, True)):
        p = sub.add_parser(name, help=f"{name} package name(s)")
        add_common(p)
        p.add_argument("--store", required=True)
        p.add_argument("--index", required=True)
        p.add_argument("--stats", required=True)
        p.add_argument("--model", required=True)
        p.add_argument("--cache-dir", default=".confuscan-cache")
        p.add_argument("--offline", action="store_true")
        p.add_argument("--no-content", action="store_true")
        p.add_argument("--snapshot-time", default=None)
        if batch:
            p.add_argument("--names-file", default=None)
            p.add_argument("names", nargs="*")
        else:
            p.add_argument("name")
        p.set_defaults(func=func)

    p = sub.add_parser("train", help="cross-validate, calibrate, and fit the classifier")
    add_common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--grid", choices=("small", "full"), default="full")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval-tdr", help="target discovery rate per search strategy")
    add_common(p)
    p.add_argument("--index", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--strategy", choices=("semantic", "syntactic", "hybrid", "all"), default="all")
    p.add_argument("--k", default="1,3,30")
    p.set_defaults(func=cmd_eval_tdr)

    for name, func in (("ablate", cmd_ablate), ("adversarial", cmd_adversarial)):
        p = sub.add_parser(name, help=f"{name} over feature-group configurations")
        add_common(p)
        p.add_argument("--features", required=True)
        p.add_argument("--grid", choices=("small", "full"), default="small")
        p.add_argument("--configs", nargs="*", default=None)
        p.set_defaults(func=func)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
