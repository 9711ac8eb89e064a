"""Declarative pipeline configuration.

One JSON file drives every subcommand; unknown keys are rejected so typos
fail loudly, and relative paths resolve against the config file location.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigError

SCHEMA_VERSION = 1

_SCHEMA: dict[str, dict[str, type | tuple]] = {
    "paths": {
        "workdir": str, "corpus": str, "preprocessed": str, "lexicon": str,
        "random_keywords": str, "masked": str, "masked_random": str,
        "encoder": str, "checkpoint": str, "report": str, "predictions": str,
    },
    "ingest": {
        "repo_query": str, "window_start": str, "window_end": str,
        "quota": int, "per_class": int, "balance_seed": int,
        "tag_file": (str, type(None)), "allow_file": (str, type(None)),
        "deny_file": (str, type(None)), "match_mode": str,
        "fixture_dir": (str, type(None)), "project_filter": (dict, type(None)),
    },
    "preprocess": {
        "stop_words_file": (str, type(None)),
        "symbol_density_threshold": (int, float),
        "trace_score_threshold": (int, float),
        "lemmatizer_backend": str,
    },
    "surrogates": {
        "k": int, "random_seed": int,
        "allow_file": (str, type(None)), "deny_file": (str, type(None)),
        "extra_miner_stops": list,
    },
    "encoder": {
        "hidden_size": int, "num_layers": int, "num_heads": int,
        "ffn_size": int, "max_positions": int, "dropout": (int, float),
        "seed": int, "pretrain_epochs": int, "pretrain_mask_rate": (int, float),
        "pretrain_learning_rate": (int, float), "pretrain_batch_size": int,
    },
    "train": {
        "epochs": int, "batch_size": int, "learning_rate": (int, float),
        "max_sequence_length": int, "seed": int, "data_workers": int,
        "cls_loss_weight": (int, float), "weight_decay": (int, float),
        "gradient_clip": (int, float),
    },
    "evaluate": {
        "folds": int, "fold_seed": int, "threshold": (int, float), "plots": bool,
    },
    "classify": {"threshold": (int, float)},
}

_PROJECT_FILTER_KEYS = {
    "min_stars", "active_within_days", "exclude_forks", "min_commits",
    "min_contributors", "min_merged_prs", "enabled",
}

_PATH_VALUED = {
    ("ingest", "tag_file"), ("ingest", "allow_file"), ("ingest", "deny_file"),
    ("ingest", "fixture_dir"), ("preprocess", "stop_words_file"),
    ("surrogates", "allow_file"), ("surrogates", "deny_file"),
}

DEFAULTS: dict[str, dict[str, Any]] = {
    "paths": {
        "workdir": "artifacts",
        "corpus": "artifacts/corpus.jsonl",
        "preprocessed": "artifacts/preprocessed.jsonl",
        "lexicon": "artifacts/lexicon.json",
        "random_keywords": "artifacts/random_keywords.json",
        "masked": "artifacts/masked.jsonl",
        "masked_random": "artifacts/masked_random.jsonl",
        "encoder": "artifacts/encoder",
        "checkpoint": "artifacts/checkpoint",
        "report": "artifacts/eval_report.json",
        "predictions": "artifacts/predictions.jsonl",
    },
    "ingest": {
        "repo_query": "", "window_start": "2022-01-01", "window_end": "2024-03-01",
        "quota": 1000, "per_class": 500, "balance_seed": 0,
        "tag_file": None, "allow_file": None, "deny_file": None,
        "match_mode": "slash-segments", "fixture_dir": None, "project_filter": None,
    },
    "preprocess": {
        "stop_words_file": None, "symbol_density_threshold": 0.30,
        "trace_score_threshold": 0.50, "lemmatizer_backend": "builtin",
    },
    "surrogates": {
        "k": 50, "random_seed": 0, "allow_file": None, "deny_file": None,
        "extra_miner_stops": [],
    },
    "encoder": {
        "hidden_size": 96, "num_layers": 2, "num_heads": 4, "ffn_size": 192,
        "max_positions": 512, "dropout": 0.1, "seed": 11, "pretrain_epochs": 4,
        "pretrain_mask_rate": 0.15, "pretrain_learning_rate": 1e-3,
        "pretrain_batch_size": 32,
    },
    "train": {
        "epochs": 6, "batch_size": 32, "learning_rate": 2e-5,
        "max_sequence_length": 512, "seed": 0, "data_workers": 2,
        "cls_loss_weight": 1.0, "weight_decay": 0.01, "gradient_clip": 1.0,
    },
    "evaluate": {"folds": 10, "fold_seed": 0, "threshold": 0.5, "plots": False},
    "classify": {"threshold": 0.5},
}


@dataclass
class PipelineConfig:
    sections: dict[str, dict[str, Any]]
    base_dir: Path
    schema_version: int = SCHEMA_VERSION

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.sections[section]

    def path(self, name: str) -> Path:
        return self._resolve(self.sections["paths"][name])

    def optional_path(self, section: str, key: str) -> Optional[Path]:
        value = self.sections[section].get(key)
        return self._resolve(value) if value else None

    def _resolve(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else (self.base_dir / p)

    def snapshot(self) -> dict:
        return {"schema_version": self.schema_version, **self.sections}


def _check_section(name: str, given: dict, schema: dict[str, type | tuple]) -> dict:
    unknown = set(given) - set(schema)
    if unknown:
        raise ConfigError(f"unknown keys in section {name!r}: {sorted(unknown)}", path=name)
    merged = dict(DEFAULTS[name])
    for key, value in given.items():
        expected = schema[key]
        if not isinstance(value, expected if isinstance(expected, tuple) else (expected,)):
            raise ConfigError(
                f"{name}.{key} has wrong type {type(value).__name__}", path=f"{name}.{key}"
            )
        merged[key] = value
    return merged


def load_config(path: str | Path) -> PipelineConfig:
    """Parse and validate a pipeline configuration file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist", path=str(path))
    try:
        raw = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}", path=str(path)) from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object", path=str(path))

    version = raw.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}",
                          path="schema_version")
    unknown_sections = set(raw) - set(_SCHEMA)
    if unknown_sections:
        raise ConfigError(f"unknown sections: {sorted(unknown_sections)}")

    sections = {}
    for name, schema in _SCHEMA.items():
        sections[name] = _check_section(name, raw.get(name, {}), schema)

    pf = sections["ingest"]["project_filter"]
    if pf is not None:
        unknown = set(pf) - _PROJECT_FILTER_KEYS
        if unknown:
            raise ConfigError(f"unknown project_filter keys: {sorted(unknown)}",
                              path="ingest.project_filter")

    config = PipelineConfig(sections=sections, base_dir=path.parent.resolve())
    for section, key in _PATH_VALUED:
        value = sections[section].get(key)
        if value and not config._resolve(value).exists():
            raise ConfigError(f"{section}.{key} references missing path {value!r}",
                              path=f"{section}.{key}")
    return config


def write_default_config(path: str | Path) -> Path:
    doc = {"schema_version": SCHEMA_VERSION, **DEFAULTS}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
    return Path(path)
