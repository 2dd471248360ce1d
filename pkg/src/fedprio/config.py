"""Experiment configuration: a single YAML file, validated before any compute.

Flag overrides beat file values, which beat defaults. The study mode picks
the aggregation strategy and whether the priority ordering is adjusted
online:

* ``fedavg-baseline``  -- dataset-size weighting, no criteria machinery
* ``individual``       -- prioritized with exactly one criterion
* ``mca-fixed``        -- prioritized, ordering fixed for the whole run
* ``final-adjusted``   -- prioritized with online ordering adjustment

Unknown keys anywhere in the file are rejected.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import yaml

from . import data, model, orchestrator
from .criteria import DEFAULT_CRITERIA, default_registry
from .errors import ConfigurationError

STUDIES = ("fedavg-baseline", "individual", "mca-fixed", "final-adjusted")

_SYNTH_DEFAULTS = {
    "class_count": 10,
    "feature_dim": 20,
    "client_count": 40,
    "samples_per_client": [30, 60],
    "labels_per_client": [1, 3],
    "test_fraction": 0.25,
    "seed": 0,
    "feature_noise": 1.0,
}
_LEAF_DEFAULTS = {
    "train_path": None,
    "test_path": None,
    "test_fraction": 0.2,
    "split_seed": 0,
    "class_count": None,
}
_MODEL_DEFAULTS = {"hidden_units": 32, "activation": "relu"}
_TRAINING_DEFAULTS = {"learning_rate": 0.01, "local_epochs": 5, "batch_size": 10}
_FEDERATION_DEFAULTS = {
    "client_fraction": 0.1,
    "max_rounds": None,  # 1000 for leaf, 200 for synth
    "target_accuracies": [0.75, 0.80],
    "eval_fraction": 1.0,
    "seed": 0,
}


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value: Any) -> bool:
    return _is_int(value) or isinstance(value, float)


def _merged(defaults: Mapping[str, Any], section: Mapping[str, Any],
            path: str, violations: list[str]) -> dict[str, Any]:
    for key in section:
        if key not in defaults and key != "kind":
            violations.append(f"{path}.{key}: unknown key")
    out = dict(defaults)
    out.update({k: v for k, v in section.items() if k in defaults})
    return out


def _check_range(pair: Any, path: str, violations: list[str]) -> None:
    if (not isinstance(pair, (list, tuple)) or len(pair) != 2
            or not all(_is_int(v) for v in pair)):
        violations.append(f"{path}: expected a [low, high] integer pair")
    elif pair[0] > pair[1]:
        violations.append(f"{path}: low {pair[0]} exceeds high {pair[1]}")


def validate_config_dict(raw: Mapping[str, Any]) -> tuple[list[str], dict[str, Any]]:
    """Collect every violation (with its field path) and return the merged
    effective config alongside."""
    violations: list[str] = []
    if not isinstance(raw, Mapping):
        return ["config root must be a mapping"], {}
    for key in raw:
        if key not in ("dataset", "model", "training", "federation",
                       "criteria", "study", "output"):
            violations.append(f"{key}: unknown key")

    # dataset ----------------------------------------------------------
    dataset = raw.get("dataset") or {}
    if not isinstance(dataset, Mapping):
        violations.append("dataset: must be a mapping")
        dataset = {}
    kind = dataset.get("kind", "synth")
    if kind not in ("synth", "leaf"):
        violations.append(f"dataset.kind: expected 'synth' or 'leaf', got {kind!r}")
        kind = "synth"
    defaults = _SYNTH_DEFAULTS if kind == "synth" else _LEAF_DEFAULTS
    ds = _merged(defaults, dataset, "dataset", violations)
    ds["kind"] = kind
    if kind == "synth":
        if not _is_int(ds["class_count"]) or ds["class_count"] < 2:
            violations.append("dataset.class_count: must be an integer >= 2")
        if not _is_int(ds["client_count"]) or ds["client_count"] < 1:
            violations.append("dataset.client_count: must be an integer >= 1")
        if not _is_int(ds["feature_dim"]) or ds["feature_dim"] < 1:
            violations.append("dataset.feature_dim: must be an integer >= 1")
        _check_range(ds["samples_per_client"], "dataset.samples_per_client", violations)
        _check_range(ds["labels_per_client"], "dataset.labels_per_client", violations)
        if not _is_number(ds["test_fraction"]) or not (0 < ds["test_fraction"] < 1):
            violations.append("dataset.test_fraction: must be within (0, 1)")
        if not _is_number(ds["feature_noise"]) or ds["feature_noise"] <= 0:
            violations.append("dataset.feature_noise: must be > 0")
        if not _is_int(ds["seed"]):
            violations.append("dataset.seed: must be an integer")
    else:
        if not isinstance(ds["train_path"], str) or not ds["train_path"]:
            violations.append("dataset.train_path: required for leaf datasets")
        if ds["test_path"] is not None and not isinstance(ds["test_path"], str):
            violations.append("dataset.test_path: must be a path or null")
        if not _is_number(ds["test_fraction"]) or not (0 < ds["test_fraction"] < 1):
            violations.append("dataset.test_fraction: must be within (0, 1)")
        if not _is_int(ds["split_seed"]):
            violations.append("dataset.split_seed: must be an integer")
        if ds["class_count"] is not None and (
                not _is_int(ds["class_count"]) or ds["class_count"] < 2):
            violations.append("dataset.class_count: must be an integer >= 2 or null")

    # model / training ---------------------------------------------------
    mdl = _merged(_MODEL_DEFAULTS, raw.get("model") or {}, "model", violations)
    if not _is_int(mdl["hidden_units"]) or mdl["hidden_units"] < 1:
        violations.append("model.hidden_units: must be an integer >= 1")
    if mdl["activation"] not in ("relu", "tanh"):
        violations.append("model.activation: must be 'relu' or 'tanh'")

    train = _merged(_TRAINING_DEFAULTS, raw.get("training") or {}, "training", violations)
    if not _is_number(train["learning_rate"]) or train["learning_rate"] <= 0:
        violations.append("training.learning_rate: must be > 0")
    if not _is_int(train["local_epochs"]) or train["local_epochs"] < 1:
        violations.append("training.local_epochs: must be an integer >= 1")
    if not _is_int(train["batch_size"]) or train["batch_size"] < 1:
        violations.append("training.batch_size: must be an integer >= 1")

    # federation -----------------------------------------------------------
    fed = _merged(_FEDERATION_DEFAULTS, raw.get("federation") or {}, "federation", violations)
    if fed["max_rounds"] is None:
        fed["max_rounds"] = 200 if kind == "synth" else 1000
    if not _is_number(fed["client_fraction"]) or not (0 < fed["client_fraction"] <= 1):
        violations.append("federation.client_fraction: must be within (0, 1]")
    if not _is_int(fed["max_rounds"]) or fed["max_rounds"] < 1:
        violations.append("federation.max_rounds: must be an integer >= 1")
    if not _is_number(fed["eval_fraction"]) or not (0 < fed["eval_fraction"] <= 1):
        violations.append("federation.eval_fraction: must be within (0, 1]")
    if not _is_int(fed["seed"]):
        violations.append("federation.seed: must be an integer")
    targets = fed["target_accuracies"]
    if (not isinstance(targets, (list, tuple)) or not targets
            or not all(_is_number(t) and 0 < t <= 1 for t in targets)):
        violations.append("federation.target_accuracies: must be a list of values in (0, 1]")

    # criteria ------------------------------------------------------------
    crit = raw.get("criteria") or {}
    if not isinstance(crit, Mapping):
        violations.append("criteria: must be a mapping")
        crit = {}
    for key in crit:
        if key not in ("ids", "ordering"):
            violations.append(f"criteria.{key}: unknown key")
    known = default_registry().ids()
    ids = crit.get("ids", list(DEFAULT_CRITERIA))
    if not isinstance(ids, (list, tuple)) or not ids:
        violations.append("criteria.ids: must be a non-empty list")
        ids = list(DEFAULT_CRITERIA)
    for cid in ids:
        if cid not in known:
            violations.append(f"criteria.ids: unknown criterion {cid!r}")
    if len(set(ids)) != len(ids):
        violations.append("criteria.ids: duplicate entries")
    ordering = crit.get("ordering", list(ids))
    if not isinstance(ordering, (list, tuple)):
        violations.append("criteria.ordering: must be a list")
        ordering = list(ids)
    elif sorted(ordering) != sorted(ids):
        violations.append(
            f"criteria.ordering: must be a permutation of criteria.ids {list(ids)}"
        )
        ordering = list(ids)

    # study / output --------------------------------------------------------
    study = raw.get("study", "mca-fixed")
    if study not in STUDIES:
        violations.append(f"study: expected one of {STUDIES}, got {study!r}")
        study = "mca-fixed"
    if study == "individual" and len(ids) != 1:
        violations.append("criteria.ids: 'individual' study requires exactly one criterion")

    output = raw.get("output") or {}
    if not isinstance(output, Mapping):
        violations.append("output: must be a mapping")
        output = {}
    for key in output:
        if key != "dir":
            violations.append(f"output.{key}: unknown key")
    out_dir = output.get("dir", "runs/experiment")
    if not isinstance(out_dir, str) or not out_dir:
        violations.append("output.dir: must be a non-empty path")
        out_dir = "runs/experiment"

    effective = {
        "dataset": ds,
        "model": mdl,
        "training": train,
        "federation": fed,
        "criteria": {"ids": list(ids), "ordering": list(ordering)},
        "study": study,
        "output": {"dir": out_dir},
    }
    return violations, effective


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully validated, fully defaulted experiment description."""

    effective: dict[str, Any]

    @property
    def study(self) -> str:
        return self.effective["study"]

    @property
    def criteria_ids(self) -> tuple[str, ...]:
        return tuple(self.effective["criteria"]["ids"])

    @property
    def ordering_ids(self) -> tuple[str, ...]:
        return tuple(self.effective["criteria"]["ordering"])

    @property
    def output_dir(self) -> Path:
        return Path(self.effective["output"]["dir"])

    @property
    def seed(self) -> int:
        return self.effective["federation"]["seed"]

    @property
    def aggregator(self) -> str:
        return self.effective["federation"]["aggregator"]

    def config_hash(self) -> str:
        canonical = json.dumps(self.effective, sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    # -- component builders ------------------------------------------------

    def load_dataset(self) -> data.FederatedDataset:
        ds = self.effective["dataset"]
        if ds["kind"] == "synth":
            return data.synth_noniid(
                class_count=ds["class_count"],
                feature_dim=ds["feature_dim"],
                client_count=ds["client_count"],
                samples_per_client_range=tuple(ds["samples_per_client"]),
                labels_per_client_range=tuple(ds["labels_per_client"]),
                test_fraction=ds["test_fraction"],
                seed=ds["seed"],
                feature_noise=ds["feature_noise"],
            )
        return data.load_leaf_json(
            ds["train_path"],
            ds["test_path"],
            test_fraction=ds["test_fraction"],
            split_seed=ds["split_seed"],
            class_count=ds["class_count"],
        )

    def build_model_spec(self, dataset: data.FederatedDataset) -> model.ModelSpec:
        mdl = self.effective["model"]
        return model.ModelSpec(
            input_dim=dataset.feature_dim,
            class_count=dataset.class_count,
            hidden_units=mdl["hidden_units"],
            activation=mdl["activation"],
        )

    def build_training(self) -> model.TrainingConfig:
        train = self.effective["training"]
        return model.TrainingConfig(
            learning_rate=train["learning_rate"],
            local_epochs=train["local_epochs"],
            batch_size=train["batch_size"],
        )

    def build_federation(self) -> orchestrator.FederationConfig:
        fed = self.effective["federation"]
        ids = self.criteria_ids
        ordering = tuple(ids.index(c) for c in self.ordering_ids)
        return orchestrator.FederationConfig(
            client_fraction=fed["client_fraction"],
            max_rounds=fed["max_rounds"],
            target_accuracies=tuple(fed["target_accuracies"]),
            aggregator=fed["aggregator"],
            criteria=ids,
            initial_ordering=ordering if fed["aggregator"] == "prioritized" else None,
            adjustment_enabled=fed["adjustment_enabled"],
            seed=fed["seed"],
            eval_fraction=fed["eval_fraction"],
        )


def _resolve_study(effective: dict[str, Any], aggregator_override: str | None) -> None:
    study = effective["study"]
    if aggregator_override is not None:
        aggregator = aggregator_override
    elif study == "fedavg-baseline":
        aggregator = "fedavg"
    else:
        aggregator = "prioritized"
    effective["federation"]["aggregator"] = aggregator
    effective["federation"]["adjustment_enabled"] = study == "final-adjusted"


def apply_overrides(raw: dict[str, Any], overrides: Mapping[str, Any]) -> dict[str, Any]:
    """Fold CLI overrides into the raw config mapping (flags beat file)."""
    raw = {k: (dict(v) if isinstance(v, Mapping) else v) for k, v in raw.items()}
    if overrides.get("seed") is not None:
        raw.setdefault("federation", {})["seed"] = overrides["seed"]
    if overrides.get("rounds") is not None:
        raw.setdefault("federation", {})["max_rounds"] = overrides["rounds"]
    if overrides.get("study") is not None:
        raw["study"] = overrides["study"]
    if overrides.get("ordering") is not None:
        raw.setdefault("criteria", {})["ordering"] = list(overrides["ordering"])
    if overrides.get("out") is not None:
        raw.setdefault("output", {})["dir"] = overrides["out"]
    return raw


def _read_yaml(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        loaded = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: YAML parse error: {exc}") from exc
    if loaded is None:
        loaded = {}
    if not isinstance(loaded, dict):
        raise ConfigurationError(f"{path}: config root must be a mapping")
    return loaded


def validate_config(path: str | Path) -> list[str]:
    """Validate without side effects; returns all violations (empty = valid)."""
    violations, _ = validate_config_dict(_read_yaml(path))
    return violations


def load_config(
    path: str | Path, overrides: Mapping[str, Any] | None = None
) -> ExperimentConfig:
    raw = _read_yaml(path)
    overrides = dict(overrides or {})
    raw = apply_overrides(raw, overrides)
    violations, effective = validate_config_dict(raw)
    aggregator_override = overrides.get("aggregator")
    if aggregator_override is not None and aggregator_override not in ("fedavg", "prioritized"):
        violations.append(
            f"aggregator: expected 'fedavg' or 'prioritized', got {aggregator_override!r}"
        )
    if violations:
        raise ConfigurationError(
            "invalid config:\n" + "\n".join(f"  - {v}" for v in violations)
        )
    _resolve_study(effective, aggregator_override)
    return ExperimentConfig(effective)
