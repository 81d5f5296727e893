"""End-to-end pipeline: ingest, preprocess, split, tune, retrain, evaluate,
analyze, with a run manifest tying every output together.

Every stage persists its output under the run directory; the manifest is
written last and records the config snapshot, input hashes, per-stage
output paths, and output content hashes. Two runs with the same config and
seed produce byte-identical metric and trial files.
"""

from __future__ import annotations

import datetime
import json
import os
from dataclasses import dataclass
from typing import Dict, List, Optional

from . import __version__
from ._util import derived_seed, sha256_file
from .analysis import co_optimality, kendall_matrix
from .config import DEFAULT_SPACES, ModelSpec, RunConfig
from .data import concatenate_logs, ingest_manifest, load_manifest
from .factorization import TrainConfig, config_from_params, train_fm, train_mf
from .metrics import METRICS, evaluate_all, parse_metrics_csv, reports_to_csv
from .modelio import save_model
from .preprocess import PreprocessConfig, apply_preprocessing, parse_filter_token
from .recommenders import fit_itemknn, fit_mostpop, fit_puresvd, fit_slim
from .sampling import SamplerConfig
from .splitting import SplitBundle, SplitConfig, make_bundle, save_bundle, validation_bundle
from .tuning import SearchSpace, TuningTask, records_to_jsonl, run_tuning


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunManifest:
    """Reproducibility record for one pipeline run."""

    config: Dict
    inputs: Dict
    version: str
    stages: Dict
    models: Dict
    outputs: Dict[str, str]            # relative path -> sha256
    model_independent: Dict
    created: str

    def to_json(self) -> str:
        payload = {
            "tool": "rankbench",
            "version": self.version,
            "created": self.created,
            "config": self.config,
            "inputs": self.inputs,
            "stages": self.stages,
            "models": self.models,
            "outputs": self.outputs,
            "model_independent": self.model_independent,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _preprocess_config(section: Dict) -> PreprocessConfig:
    mode, level = parse_filter_token(section.get("filter", "origin"))
    return PreprocessConfig(
        positive_threshold=float(section.get("positive_threshold", 1.0)),
        filter_mode=mode,
        filter_level=level,
        keep_subthreshold_as_negative=bool(
            section.get("keep_subthreshold_as_negative", False)
        ),
    )


def _split_config(section: Dict, seed: int) -> SplitConfig:
    return SplitConfig.from_token(
        section.get("method", "tsbr"),
        level=section.get("level", "global"),
        train_fraction=float(section.get("train_fraction", 0.8)),
        validation_fraction=float(section.get("validation_fraction", 0.1)),
        candidate_size=int(section.get("candidate_size", 1000)),
        exclude_from_candidates=section.get("exclude_from_candidates", "all"),
        seed=seed,
    )


def _sampler_config(section: Dict) -> SamplerConfig:
    return SamplerConfig(
        kind=section.get("kind", "uniform"),
        negatives_per_positive=int(section.get("negatives_per_positive", 1)),
        popularity_exponent=float(section.get("popularity_exponent", 1.0)),
    )


def fit_model(kind: str, params: Dict, bundle: SplitBundle,
              sampler: SamplerConfig, base_train: Dict, seed: int):
    """Fit any supported model kind on ``bundle.train``.

    For mf/fm the bundle's test slice (when present) drives early stopping;
    the trailing return value is the training trace, None for baselines.
    """
    if kind == "mostpop":
        return fit_mostpop(bundle.train), None
    if kind == "itemknn":
        return fit_itemknn(bundle.train, **params), None
    if kind == "puresvd":
        return fit_puresvd(bundle.train, seed=seed, **params), None
    if kind == "slim":
        return fit_slim(bundle.train, **params), None
    if kind in ("mf", "fm"):
        merged = dict(base_train)
        merged.update(params)
        merged["seed"] = seed
        config = config_from_params(TrainConfig(), merged)
        sampler_cfg = SamplerConfig(
            kind=sampler.kind,
            negatives_per_positive=config.effective_negatives,
            popularity_exponent=sampler.popularity_exponent,
        )
        trainer = train_mf if kind == "mf" else train_fm
        return trainer(bundle, sampler_cfg, config)
    raise ValueError(f"unknown model kind {kind!r}")


def _empty_like(log):
    import numpy as np

    return log.take(np.empty(0, dtype=np.int64))


def build_tuning_task(model: ModelSpec, bundle: SplitBundle, config: RunConfig,
                      sampler: SamplerConfig, tuning_cutoff: int) -> TuningTask:
    """Wire a model spec into trial evaluation and final retrain callables.

    Nested mode: trials fit on the inner train and score on validation
    candidates; the final model refits on train + validation for the best
    trial's epoch budget and scores on test candidates. The unsafe
    tune-on-test mode fits trials on the full training data, scores them on
    the test candidates directly, and reports the winning trial's numbers.
    """
    base_train = dict(config.train)
    base_train.update(model.train)
    aux: Dict[str, Dict] = {}

    def params_key(params: Dict) -> str:
        return json.dumps(params, sort_keys=True, default=str)

    if config.unsafe_tune_on_test:
        full_train = concatenate_logs(bundle.train, bundle.validation)
        test_view = SplitBundle(full_train, _empty_like(full_train), bundle.test,
                                bundle.candidates)

        def evaluate_trial(params: Dict, trial_seed: int) -> Dict[str, float]:
            fitted, _ = fit_model(model.kind, params, test_view, sampler,
                                  base_train, trial_seed)
            reports = evaluate_all(fitted, test_view, config.cutoffs)
            aux[params_key(params)] = {"reports": reports, "model": fitted}
            return reports[tuning_cutoff].means

        def retrain_and_test(params: Dict, retrain_seed: int):
            cached = aux[params_key(params)]
            return cached["model"], cached["reports"]

        return TuningTask(evaluate_trial, retrain_and_test)

    val_view = validation_bundle(bundle, config.split.get("candidate_size", 1000),
                                 derived_seed(config.seed, "valcands"))

    def evaluate_trial(params: Dict, trial_seed: int) -> Dict[str, float]:
        fitted, trace = fit_model(model.kind, params, val_view, sampler,
                                  base_train, trial_seed)
        reports = evaluate_all(fitted, val_view, [tuning_cutoff])
        aux[params_key(params)] = {
            "best_epoch": None if trace is None else trace.best_epoch,
        }
        return reports[tuning_cutoff].means

    def retrain_and_test(params: Dict, retrain_seed: int):
        full_train = concatenate_logs(bundle.train, bundle.validation)
        outer_view = SplitBundle(full_train, _empty_like(full_train), bundle.test,
                                 bundle.candidates)
        retrain_base = dict(base_train)
        best_epoch = aux.get(params_key(params), {}).get("best_epoch")
        if best_epoch is not None:
            # no holdout remains, so rerun exactly the epoch budget that won
            retrain_base["epochs_max"] = best_epoch + 1
            retrain_base["early_stop_patience"] = 0
        fitted, _ = fit_model(model.kind, params, outer_view, sampler,
                              retrain_base, retrain_seed)
        return fitted, evaluate_all(fitted, outer_view, config.cutoffs)

    return TuningTask(evaluate_trial, retrain_and_test)


def _model_space(model: ModelSpec, config: RunConfig) -> SearchSpace:
    if model.space is not None:
        return SearchSpace.from_dict(model.space)
    shared = config.search.get("space")
    if shared is not None and model.kind in ("mf", "fm"):
        return SearchSpace.from_dict(shared)
    return SearchSpace.from_dict(DEFAULT_SPACES[model.kind])


def _run_stage(name: str, func):
    try:
        return func()
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def run_pipeline(config: RunConfig) -> RunManifest:
    """Execute the whole chain for every model in the config.

    Single-model runs place trials.jsonl / model.bin / metrics.csv at the
    run root; multi-model runs nest them under models/<name>/. Partial
    outputs are kept when a stage fails.
    """
    out_dir = config.output
    os.makedirs(out_dir, exist_ok=True)
    outputs: Dict[str, str] = {}

    def persist(rel_path: str, text: Optional[str] = None) -> str:
        path = os.path.join(out_dir, rel_path)
        os.makedirs(os.path.dirname(path) or out_dir, exist_ok=True)
        if text is not None:
            with open(path, "w", encoding="utf-8") as handle:
                handle.write(text)
        outputs[rel_path] = sha256_file(path)
        return path

    dataset_manifest = _run_stage(
        "ingest", lambda: load_manifest(config.dataset_manifest)
    )
    log = _run_stage("ingest", lambda: ingest_manifest(dataset_manifest))

    pre_config = _preprocess_config(config.preprocess)
    processed = _run_stage("preprocess", lambda: apply_preprocessing(log, pre_config))

    split_config = _split_config(config.split, derived_seed(config.seed, "split"))
    bundle = _run_stage("split", lambda: make_bundle(processed, split_config))
    _run_stage("split", lambda: save_bundle(bundle, os.path.join(out_dir, "split")))
    for name in ("train.csv", "validation.csv", "test.csv", "candidates.txt",
                 "users.txt", "items.txt"):
        persist(os.path.join("split", name))

    sampler = _sampler_config(config.sampler)
    tuning_cutoff = int(config.search.get("tuning_cutoff", 10))
    strategy = config.search.get("strategy", "random")
    n_trials = int(config.search.get("n_trials", 30))
    objective = config.search.get("objective", "ndcg")

    single = len(config.models) == 1
    model_entries: Dict[str, Dict] = {}
    run_trial_sets: List[List[Dict[str, float]]] = []
    methods_table: Dict[str, Dict[str, float]] = {}

    for model in config.models:
        prefix = "" if single else os.path.join("models", model.name)
        task = build_tuning_task(model, bundle, config, sampler, tuning_cutoff)
        space = _model_space(model, config)
        best, records, result = _run_stage(
            f"tune[{model.name}]",
            lambda task=task, space=space: run_tuning(
                task, space, strategy, n_trials,
                derived_seed(config.seed, "tune", model.name),
                objective_metric=objective,
            ),
        )
        fitted, reports = result
        trials_rel = os.path.join(prefix, "trials.jsonl")
        persist(trials_rel, records_to_jsonl(records))
        model_rel = os.path.join(prefix, "model.bin")
        _run_stage(f"retrain[{model.name}]",
                   lambda: save_model(fitted, os.path.join(out_dir, model_rel)))
        persist(model_rel)
        metrics_rel = os.path.join(prefix, "metrics.csv")
        persist(metrics_rel, reports_to_csv(reports))

        model_entries[model.name] = {
            "kind": model.kind,
            "trials": trials_rel,
            "model": model_rel,
            "metrics": metrics_rel,
            "best_params": best.params,
            "best_objective": best.objective,
            "n_trials": len(records),
        }
        run_trial_sets.append([r.metrics for r in records if r.status == "ok"])
        methods_table[model.name] = reports[tuning_cutoff].means

    def analyze():
        matrix = co_optimality(run_trial_sets)
        persist(os.path.join("analysis", "co_optimality.csv"), matrix.to_csv())
        if len(config.models) >= 2:
            kendall = kendall_matrix(methods_table)
            persist(os.path.join("analysis", f"kendall_N{tuning_cutoff}.csv"),
                    kendall.to_csv())
            persist(os.path.join("analysis", "methods_table.csv"),
                    _methods_table_csv(methods_table))

    _run_stage("analyze", analyze)

    manifest = RunManifest(
        config=config.to_dict(),
        inputs={
            "dataset_manifest": dataset_manifest,
            "dataset_sha256": dataset_manifest.get("sha256"),
        },
        version=__version__,
        stages={
            "preprocess": {
                "records": len(processed),
                "users": processed.n_users,
                "items": processed.n_items,
            },
            "split": {
                "train": len(bundle.train),
                "validation": len(bundle.validation),
                "test": len(bundle.test),
                "directory": "split",
            },
        },
        models=model_entries,
        outputs=outputs,
        model_independent=dict(
            config.model_independent_factors(),
            dataset_sha256=dataset_manifest.get("sha256"),
        ),
        created=datetime.datetime.now(datetime.timezone.utc).isoformat(),
    )
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as handle:
        handle.write(manifest.to_json())
    return manifest


def _methods_table_csv(table: Dict[str, Dict[str, float]]) -> str:
    lines = ["method," + ",".join(METRICS)]
    for method in sorted(table):
        cells = ",".join(repr(float(table[method][m])) for m in METRICS)
        lines.append(f"{method},{cells}")
    return "\n".join(lines) + "\n"


def load_run_manifest(path: str) -> Dict:
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def compare_runs(manifest_paths: List[str]):
    """Cross-run comparison table plus metric rank correlations.

    Refuses to compare runs whose model-independent factors differ, naming
    the first differing factor.
    """
    if len(manifest_paths) < 2:
        raise ValueError("need at least two run manifests to compare")
    manifests = [(path, load_run_manifest(path)) for path in manifest_paths]
    reference_path, reference = manifests[0]
    ref_factors = reference.get("model_independent", {})
    for path, manifest in manifests[1:]:
        factors = manifest.get("model_independent", {})
        for key in sorted(set(ref_factors) | set(factors)):
            if ref_factors.get(key) != factors.get(key):
                raise ValueError(
                    f"model-independent factor mismatch: {key} "
                    f"({reference_path} vs {path})"
                )

    table: Dict[int, Dict[str, Dict[str, float]]] = {}
    for path, manifest in manifests:
        base = os.path.dirname(os.path.abspath(path))
        for name, entry in manifest["models"].items():
            metrics_path = os.path.join(base, entry["metrics"])
            with open(metrics_path, "r", encoding="utf-8") as handle:
                per_cutoff = parse_metrics_csv(handle.read())
            method = name if len(manifests) == 1 else f"{name}@{os.path.basename(base)}"
            for cutoff, values in per_cutoff.items():
                table.setdefault(cutoff, {})[method] = values
    kendall = {
        cutoff: kendall_matrix(methods)
        for cutoff, methods in table.items()
        if len(methods) >= 2
    }
    return table, kendall


def comparison_table_csv(table: Dict[int, Dict[str, Dict[str, float]]]) -> str:
    lines = ["method,N," + ",".join(METRICS)]
    for cutoff in sorted(table):
        for method in sorted(table[cutoff]):
            cells = ",".join(repr(float(table[cutoff][method][m])) for m in METRICS)
            lines.append(f"{method},{cutoff},{cells}")
    return "\n".join(lines) + "\n"
