"""Command-line interface: stage-wise commands plus the full pipeline runner.

Subcommands: ingest, preprocess, split, tune, train, eval, analyze, compare,
print-config, run. Exit code 0 on success; failures print a stage-tagged
diagnostic to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from ._util import derived_seed
from .analysis import co_optimality
from .config import (
    MODEL_KINDS,
    RunConfig,
    default_config_text,
    load_config,
    strip_comments,
)
from .data import ingest_manifest, load_manifest, write_log, write_manifest
from .metrics import evaluate_all, reports_to_csv
from .modelio import load_model, save_model
from .pipeline import (
    StageError,
    build_tuning_task,
    compare_runs,
    comparison_table_csv,
    fit_model,
    run_pipeline,
)
from .preprocess import apply_preprocessing, parse_filter_token, PreprocessConfig
from .sampling import SamplerConfig
from .splitting import SplitConfig, load_bundle, make_bundle, save_bundle
from .tuning import SearchSpace, records_to_jsonl, run_tuning


def _cmd_ingest(args) -> int:
    schema = {"user": args.user_col, "item": args.item_col}
    if args.value_col is not None:
        schema["value"] = args.value_col
    if args.time_col is not None:
        schema["timestamp"] = args.time_col
    manifest = write_manifest(args.output, args.input, schema, args.delimiter,
                              args.header)
    log = ingest_manifest(manifest)
    print(f"ingested {len(log)} records, {log.n_users} users, {log.n_items} items")
    print(f"manifest written to {args.output}")
    return 0


def _cmd_preprocess(args) -> int:
    manifest = load_manifest(args.input)
    log = ingest_manifest(manifest)
    mode, level = parse_filter_token(args.filter)
    config = PreprocessConfig(
        positive_threshold=args.threshold, filter_mode=mode, filter_level=level
    )
    processed = apply_preprocessing(log, config)
    data_path = os.path.splitext(args.output)[0] + ".csv"
    write_log(processed, data_path, delimiter=",")
    schema = {"user": 0, "item": 1, "value": 2}
    if processed.has_timestamps:
        schema["timestamp"] = 3
    write_manifest(args.output, data_path, schema, ",", False)
    print(
        f"kept {len(processed)} records, {processed.n_users} users, "
        f"{processed.n_items} items -> {data_path}"
    )
    return 0


def _cmd_split(args) -> int:
    manifest = load_manifest(args.input)
    log = ingest_manifest(manifest)
    config = SplitConfig.from_token(
        args.method,
        level=args.level,
        train_fraction=args.rho,
        validation_fraction=args.val_frac,
        candidate_size=args.cands,
        seed=args.seed,
    )
    bundle = make_bundle(log, config)
    save_bundle(bundle, args.output)
    print(
        f"split {len(log)} records -> train {len(bundle.train)}, "
        f"validation {len(bundle.validation)}, test {len(bundle.test)}; "
        f"candidates for {len(bundle.candidates)} test users -> {args.output}"
    )
    return 0


def _cmd_train(args) -> int:
    bundle = load_bundle(args.split)
    params = json.loads(args.params) if args.params else {}
    train_overrides = json.loads(args.train) if args.train else {}
    sampler = SamplerConfig(kind=args.sampler)
    model, trace = fit_model(args.model, params, bundle, sampler, train_overrides,
                             args.seed)
    save_model(model, args.output)
    if trace is not None and args.trace:
        with open(args.trace, "w", encoding="utf-8") as handle:
            handle.write(trace.to_jsonl())
    print(f"trained {args.model} -> {args.output}")
    return 0


def _cmd_eval(args) -> int:
    bundle = load_bundle(args.split)
    model = load_model(args.model_file)
    reports = evaluate_all(model, bundle, args.cutoffs)
    csv_text = reports_to_csv(reports)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as handle:
            handle.write(csv_text)
        print(f"metrics written to {args.output}")
    else:
        print(csv_text, end="")
    return 0


def _cmd_tune(args) -> int:
    bundle = load_bundle(args.split)
    with open(args.space, "r", encoding="utf-8") as handle:
        space = SearchSpace.from_dict(json.loads(strip_comments(handle.read())))
    config = RunConfig.from_dict({
        "dataset": "unused",
        "models": [{"kind": args.model}],
        "seed": args.seed,
        "cutoffs": args.cutoffs,
        "split": {"candidate_size": args.cands},
    })
    sampler = SamplerConfig(kind=args.sampler)
    task = build_tuning_task(config.models[0], bundle, config, sampler, args.cutoff)
    best, records, (fitted, reports) = run_tuning(
        task, space, args.strategy, args.trials,
        derived_seed(args.seed, "tune", args.model),
    )
    os.makedirs(args.output, exist_ok=True)
    with open(os.path.join(args.output, "trials.jsonl"), "w", encoding="utf-8") as f:
        f.write(records_to_jsonl(records))
    save_model(fitted, os.path.join(args.output, "model.bin"))
    with open(os.path.join(args.output, "metrics.csv"), "w", encoding="utf-8") as f:
        f.write(reports_to_csv(reports))
    with open(os.path.join(args.output, "best.json"), "w", encoding="utf-8") as f:
        json.dump({"params": best.params, "objective": best.objective,
                   "trial_id": best.trial_id}, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"best trial {best.trial_id}: objective {best.objective:.6f} "
          f"params {best.params} -> {args.output}")
    return 0


def _cmd_analyze(args) -> int:
    runs = []
    for path in args.trials:
        with open(path, "r", encoding="utf-8") as handle:
            trials = [json.loads(line) for line in handle if line.strip()]
        runs.append([t["metrics"] for t in trials if t.get("status") == "ok"])
    matrix = co_optimality(runs)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as handle:
            handle.write(matrix.to_csv())
        print(f"co-optimality matrix written to {args.output}")
    else:
        print(matrix.to_csv(), end="")
    return 0


def _cmd_compare(args) -> int:
    table, kendall = compare_runs(args.manifests)
    os.makedirs(args.output, exist_ok=True)
    table_path = os.path.join(args.output, "comparison.csv")
    with open(table_path, "w", encoding="utf-8") as handle:
        handle.write(comparison_table_csv(table))
    for cutoff, matrix in sorted(kendall.items()):
        path = os.path.join(args.output, f"kendall_N{cutoff}.csv")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(matrix.to_csv())
    print(f"comparison written to {args.output}")
    return 0


def _cmd_print_config(args) -> int:
    print(default_config_text(args.model), end="")
    return 0


def _cmd_run(args) -> int:
    config = load_config(args.config)
    manifest = run_pipeline(config)
    print(f"run complete: {len(manifest.models)} model(s) -> {config.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rankbench",
        description="Deterministic benchmarking for implicit-feedback top-N recommendation",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a delimited dataset and write its manifest")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="manifest JSON path")
    p.add_argument("--user-col", required=True, type=_col)
    p.add_argument("--item-col", required=True, type=_col)
    p.add_argument("--value-col", type=_col, default=None)
    p.add_argument("--time-col", type=_col, default=None)
    p.add_argument("--delimiter", default=",")
    p.add_argument("--header", action="store_true")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("preprocess", help="binarize and filter a dataset")
    p.add_argument("--input", required=True, help="dataset manifest")
    p.add_argument("--threshold", type=float, default=1.0)
    p.add_argument("--filter", default="origin",
                   help="origin, f<k> (one pass) or core<k> (recursive)")
    p.add_argument("--output", required=True, help="output manifest path")
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("split", help="produce train/validation/test + candidates")
    p.add_argument("--input", required=True, help="dataset manifest")
    p.add_argument("--method", required=True, choices=["rsbr", "tsbr", "rloo", "tloo"])
    p.add_argument("--rho", type=float, default=0.8)
    p.add_argument("--level", choices=["global", "user"], default="global")
    p.add_argument("--val-frac", type=float, default=0.1)
    p.add_argument("--cands", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="split directory")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train", help="fit one model with fixed parameters")
    p.add_argument("--split", required=True, help="split directory")
    p.add_argument("--model", required=True, choices=list(MODEL_KINDS))
    p.add_argument("--params", default=None, help="JSON dict of model parameters")
    p.add_argument("--train", default=None, help="JSON dict of training overrides")
    p.add_argument("--sampler", default="uniform")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="model container path")
    p.add_argument("--trace", default=None, help="optional training-trace JSONL path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model on a split's test set")
    p.add_argument("--split", required=True)
    p.add_argument("--model-file", required=True)
    p.add_argument("--cutoffs", type=int, nargs="+", default=[1, 5, 10, 20, 30, 50])
    p.add_argument("--output", default=None, help="metrics CSV path (stdout if absent)")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("tune", help="hyper-parameter search with nested validation")
    p.add_argument("--split", required=True)
    p.add_argument("--model", required=True, choices=list(MODEL_KINDS))
    p.add_argument("--strategy", choices=["grid", "random", "tpe"], default="random")
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--space", required=True, help="search-space JSON file")
    p.add_argument("--sampler", default="uniform")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cutoff", type=int, default=10, help="tuning cutoff")
    p.add_argument("--cutoffs", type=int, nargs="+", default=[1, 5, 10, 20, 30, 50])
    p.add_argument("--cands", type=int, default=1000)
    p.add_argument("--output", required=True, help="output directory")
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("analyze", help="co-optimality matrix over trial logs")
    p.add_argument("--trials", nargs="+", required=True, help="trials.jsonl files")
    p.add_argument("--output", default=None)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("compare", help="compare completed runs (shared factors only)")
    p.add_argument("--manifests", nargs="+", required=True)
    p.add_argument("--output", required=True, help="output directory")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("print-config", help="emit a commented default run config")
    p.add_argument("--model", default="mf", choices=list(MODEL_KINDS))
    p.set_defaults(func=_cmd_print_config)

    p = sub.add_parser("run", help="execute the full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_run)

    return parser


def _col(text: str):
    return int(text) if text.lstrip("-").isdigit() else text


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error [{exc.stage}]: {exc.cause}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
