"""Run configuration: JSON schema, evaluation-mode presets, defaults.

A run config is one JSON document describing the whole chain (dataset,
preprocessing, split, sampler, models, search, cutoffs, seed). Config files
may contain comment lines starting with ``#``; the loader strips them, and
``print-config`` emits fully commented defaults in the same dialect.

Evaluation modes constrain which model-dependent settings may vary per
model: hard_strict pins loss, initializer, optimizer, and search space
globally; mixed pins initializer and optimizer but frees per-model losses
and spaces; relax and soft_strict free everything model-dependent.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

MODES = ("relax", "hard_strict", "soft_strict", "mixed")
MODEL_KINDS = ("mostpop", "itemknn", "puresvd", "slim", "mf", "fm")

DEFAULT_CUTOFFS = (1, 5, 10, 20, 30, 50)

SEED_ENV_VAR = "RANKBENCH_SEED"

# per-mode: which keys a per-model entry may not override
_FORBIDDEN_OVERRIDES = {
    "relax": frozenset(),
    "soft_strict": frozenset(),
    "mixed": frozenset({"initializer", "optimizer"}),
    "hard_strict": frozenset({"loss", "initializer", "optimizer", "space"}),
}

DEFAULT_SPACES: Dict[str, Dict] = {
    "mostpop": {},
    "itemknn": {
        "n_neighbors": {"type": "categorical", "values": [10, 20, 50, 100, 200]},
    },
    "puresvd": {
        "rank": {"type": "categorical", "values": [8, 16, 32, 64, 128]},
    },
    "slim": {
        "l1_reg": {"type": "log_uniform", "low": 1e-4, "high": 1.0},
        "l2_reg": {"type": "log_uniform", "low": 1e-4, "high": 1.0},
    },
    "mf": {
        "learning_rate": {"type": "log_uniform", "low": 1e-3, "high": 0.3},
        "num_factors": {"type": "categorical", "values": [16, 32, 64]},
        "l2_reg": {"type": "log_uniform", "low": 1e-5, "high": 0.1},
    },
    "fm": {
        "learning_rate": {"type": "log_uniform", "low": 1e-3, "high": 0.3},
        "num_factors": {"type": "categorical", "values": [16, 32, 64]},
        "l2_reg": {"type": "log_uniform", "low": 1e-5, "high": 0.1},
    },
}


@dataclass
class ModelSpec:
    """One model to run: kind, fixed params, optional per-model overrides."""

    kind: str
    name: Optional[str] = None
    params: Dict = field(default_factory=dict)        # fixed, not searched
    train: Dict = field(default_factory=dict)         # TrainConfig overrides (mf/fm)
    space: Optional[Dict] = None                      # per-model search space

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.name is None:
            self.name = self.kind

    @classmethod
    def from_dict(cls, entry: Dict) -> "ModelSpec":
        return cls(
            kind=entry["kind"],
            name=entry.get("name"),
            params=dict(entry.get("params", {})),
            train=dict(entry.get("train", {})),
            space=entry.get("space"),
        )

    def to_dict(self) -> Dict:
        out = {"kind": self.kind, "name": self.name}
        if self.params:
            out["params"] = self.params
        if self.train:
            out["train"] = self.train
        if self.space is not None:
            out["space"] = self.space
        return out


@dataclass
class RunConfig:
    """Everything a pipeline run needs, resolved and validated."""

    dataset_manifest: str
    preprocess: Dict = field(default_factory=dict)
    split: Dict = field(default_factory=dict)
    sampler: Dict = field(default_factory=dict)
    train: Dict = field(default_factory=dict)          # shared TrainConfig defaults
    models: List[ModelSpec] = field(default_factory=list)
    search: Dict = field(default_factory=dict)
    cutoffs: List[int] = field(default_factory=lambda: list(DEFAULT_CUTOFFS))
    seed: int = 0
    mode: str = "mixed"
    output: str = "run"
    unsafe_tune_on_test: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown evaluation mode {self.mode!r}")
        if not self.models:
            raise ValueError("config names no models")
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate model names: {names}")
        validate_mode(self.mode, self.models)

    @classmethod
    def from_dict(cls, raw: Dict) -> "RunConfig":
        raw = dict(raw)
        if "model" in raw and "models" not in raw:
            raw["models"] = [raw.pop("model")]
        models = [ModelSpec.from_dict(entry) for entry in raw.get("models", [])]
        seed = int(os.environ.get(SEED_ENV_VAR, raw.get("seed", 0)))
        return cls(
            dataset_manifest=raw["dataset"],
            preprocess=dict(raw.get("preprocess", {})),
            split=dict(raw.get("split", {})),
            sampler=dict(raw.get("sampler", {})),
            train=dict(raw.get("train", {})),
            models=models,
            search=dict(raw.get("search", {})),
            cutoffs=[int(c) for c in raw.get("cutoffs", DEFAULT_CUTOFFS)],
            seed=seed,
            mode=raw.get("mode", "mixed"),
            output=raw.get("output", "run"),
            unsafe_tune_on_test=bool(raw.get("unsafe_tune_on_test", False)),
        )

    def to_dict(self) -> Dict:
        return {
            "dataset": self.dataset_manifest,
            "preprocess": self.preprocess,
            "split": self.split,
            "sampler": self.sampler,
            "train": self.train,
            "models": [m.to_dict() for m in self.models],
            "search": self.search,
            "cutoffs": self.cutoffs,
            "seed": self.seed,
            "mode": self.mode,
            "output": self.output,
            "unsafe_tune_on_test": self.unsafe_tune_on_test,
        }

    def model_independent_factors(self) -> Dict:
        """The settings that must match before two runs may be compared."""
        return {
            "preprocess": self.preprocess,
            "split": self.split,
            "cutoffs": self.cutoffs,
            "seed": self.seed,
        }


def validate_mode(mode: str, models: List[ModelSpec]) -> None:
    """Reject per-model overrides the evaluation mode pins globally."""
    forbidden = _FORBIDDEN_OVERRIDES[mode]
    for model in models:
        for key in ("loss", "initializer", "optimizer"):
            if key in forbidden and key in model.train:
                raise ValueError(f"mode forbids per-model {key} (model {model.name!r})")
        if "space" in forbidden and model.space is not None:
            raise ValueError(f"mode forbids per-model space (model {model.name!r})")


def strip_comments(text: str) -> str:
    """Drop lines whose first non-blank character is '#'."""
    kept = [line for line in text.splitlines() if not line.lstrip().startswith("#")]
    return "\n".join(kept)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as handle:
        raw = json.loads(strip_comments(handle.read()))
    return RunConfig.from_dict(raw)


def default_config_text(model_kind: str = "mf") -> str:
    """A fully commented default config for one model, ready to edit.

    The output is accepted verbatim by the config loader (comment lines are
    stripped before JSON parsing).
    """
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}")
    space = json.dumps(DEFAULT_SPACES[model_kind])
    lines = [
        "# Full-pipeline run configuration. Lines starting with '#' are comments.",
        "{",
        '# Dataset manifest written by the ingest command (path, schema, hash).',
        '"dataset": "dataset.manifest.json",',
        "",
        "# Binarization threshold and activity filter:",
        "#   filter is one of origin, f<k> (one-pass), core<k> (recursive).",
        '"preprocess": {"positive_threshold": 1.0, "filter": "origin"},',
        "",
        "# Splitting: method rsbr|tsbr|rloo|tloo, ratio split level global|user,",
        "# validation share carved from train, candidate list size per test user.",
        '"split": {"method": "tsbr", "train_fraction": 0.8, "level": "global",',
        '          "validation_fraction": 0.1, "candidate_size": 1000},',
        "",
        "# Training-time negative sampler: uniform, high_pop, low_pop,",
        "# uniform_high_pop, uniform_low_pop.",
        '"sampler": {"kind": "uniform", "popularity_exponent": 1.0},',
        "",
        "# Shared gradient-training defaults (mf/fm models only).",
        '"train": {"loss": "bpr_log", "optimizer": "sgd", "initializer": "normal",',
        '          "epochs_max": 200, "early_stop_patience": 5, "batch_size": 256},',
        "",
        "# Models to run. Per-model keys: params (fixed), train (overrides),",
        "# space (per-model search space). The evaluation mode below may forbid",
        "# some overrides.",
        f'"models": [{{"kind": "{model_kind}"}}],',
        "",
        "# Hyper-parameter search: grid | random | tpe, trial budget, objective",
        "# metric, and the shared search space.",
        f'"search": {{"strategy": "tpe", "n_trials": 30, "objective": "ndcg",',
        f'           "space": {space}}},',
        "",
        "# Ranking cutoffs for the final report.",
        '"cutoffs": [1, 5, 10, 20, 30, 50],',
        "",
        "# Master seed; every stage derives its own stream from it.",
        '"seed": 42,',
        "",
        "# Evaluation mode: relax | hard_strict | soft_strict | mixed.",
        '"mode": "mixed",',
        "",
        '"output": "runs/demo"',
        "}",
    ]
    return "\n".join(lines) + "\n"
