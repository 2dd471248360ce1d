import json
import math

import pytest
import yaml

from fedprio.cli import main
from fedprio.config import load_config, validate_config
from fedprio.errors import ConfigurationError

BASE_CONFIG = {
    "dataset": {
        "kind": "synth",
        "class_count": 5,
        "feature_dim": 6,
        "client_count": 8,
        "samples_per_client": [10, 16],
        "labels_per_client": [1, 3],
        "test_fraction": 0.25,
        "seed": 3,
    },
    "training": {"learning_rate": 0.05, "local_epochs": 2, "batch_size": 5},
    "federation": {"client_fraction": 0.25, "max_rounds": 4, "seed": 5},
    "study": "final-adjusted",
}


def write_config(tmp_path, overrides=None, name="exp.yaml"):
    cfg = json.loads(json.dumps(BASE_CONFIG))  # deep copy
    for key, value in (overrides or {}).items():
        section, _, field = key.partition(".")
        if field:
            cfg.setdefault(section, {})[field] = value
        else:
            cfg[section] = value
    cfg.setdefault("output", {})["dir"] = str(tmp_path / "out")
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return path


# ----------------------------------------------------------------------
# validation
# ----------------------------------------------------------------------

def test_validate_clean_config_is_empty_report(tmp_path):
    path = write_config(tmp_path)
    assert validate_config(path) == []


def test_validate_lists_violations_with_field_paths(tmp_path):
    path = write_config(tmp_path, {
        "federation.client_fraction": 0,
        "criteria": {"ids": ["ds", "ld", "md"], "ordering": ["ds", "ld", "nope"]},
        "training.learning_rate": 0,
    })
    report = validate_config(path)
    assert any("federation.client_fraction" in v for v in report)
    assert any("criteria.ordering" in v for v in report)
    assert any("training.learning_rate" in v for v in report)


def test_validate_rejects_unknown_keys(tmp_path):
    path = write_config(tmp_path, {"dataset.wibble": 3, "extra_section": {"a": 1}})
    report = validate_config(path)
    assert any("dataset.wibble" in v for v in report)
    assert any("extra_section" in v for v in report)


def test_validate_unknown_criterion_id(tmp_path):
    path = write_config(tmp_path, {"criteria": {"ids": ["ds", "trust"]}})
    assert any("trust" in v for v in validate_config(path))


def test_validate_zero_rounds(tmp_path):
    path = write_config(tmp_path, {"federation.max_rounds": 0})
    assert any("max_rounds" in v for v in validate_config(path))


def test_individual_study_needs_single_criterion(tmp_path):
    path = write_config(tmp_path, {"study": "individual"})
    assert any("individual" in v for v in validate_config(path))
    path = write_config(tmp_path, {
        "study": "individual",
        "criteria": {"ids": ["ld"], "ordering": ["ld"]},
    })
    assert validate_config(path) == []


def test_load_config_raises_on_violations(tmp_path):
    path = write_config(tmp_path, {"federation.max_rounds": 0})
    with pytest.raises(ConfigurationError, match="max_rounds"):
        load_config(path)


def test_defaults_shrink_for_synth(tmp_path):
    path = tmp_path / "minimal.yaml"
    path.write_text(yaml.safe_dump({"dataset": {"kind": "synth"}}))
    cfg = load_config(path)
    assert cfg.effective["federation"]["max_rounds"] == 200
    assert cfg.effective["dataset"]["client_count"] == 40
    assert cfg.effective["federation"]["client_fraction"] == 0.1
    assert cfg.effective["training"]["batch_size"] == 10
    assert cfg.effective["training"]["local_epochs"] == 5
    assert cfg.effective["training"]["learning_rate"] == 0.01
    assert cfg.effective["federation"]["target_accuracies"] == [0.75, 0.80]


def test_study_resolution_sets_aggregator(tmp_path):
    path = write_config(tmp_path, {"study": "fedavg-baseline"})
    cfg = load_config(path)
    assert cfg.aggregator == "fedavg"
    assert cfg.effective["federation"]["adjustment_enabled"] is False

    path = write_config(tmp_path, {"study": "mca-fixed"})
    cfg = load_config(path)
    assert cfg.aggregator == "prioritized"
    assert cfg.effective["federation"]["adjustment_enabled"] is False

    path = write_config(tmp_path, {"study": "final-adjusted"})
    cfg = load_config(path)
    assert cfg.effective["federation"]["adjustment_enabled"] is True


# ----------------------------------------------------------------------
# runs
# ----------------------------------------------------------------------

def test_run_smoke_writes_artifacts(tmp_path, capsys):
    path = write_config(tmp_path)
    out = tmp_path / "run"
    code = main(["--config", str(path), "--study", "fedavg-baseline",
                 "--seed", "1", "--out", str(out)])
    assert code == 0
    assert (out / "rounds.csv").exists()
    assert (out / "manifest.json").exists()
    assert (out / "accuracy.png").exists()
    assert "completed 4 rounds" in capsys.readouterr().out


def test_manifest_records_overrides_verbatim(tmp_path):
    path = write_config(tmp_path)
    out = tmp_path / "run"
    code = main(["--config", str(path), "--study", "mca-fixed",
                 "--ordering", "ds,ld,md", "--seed", "9",
                 "--rounds", "3", "--out", str(out)])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["ordering"] == ["ds", "ld", "md"]
    assert manifest["seed"] == 9
    assert manifest["study"] == "mca-fixed"
    assert manifest["config"]["federation"]["max_rounds"] == 3
    assert manifest["config"]["federation"]["seed"] == 9
    assert manifest["config"]["output"]["dir"] == str(out)
    # Every effective parameter is present.
    for section in ("dataset", "model", "training", "federation", "criteria", "output"):
        assert section in manifest["config"]
    assert {"fedprio", "numpy", "python"} <= set(manifest["versions"])
    assert len(manifest["config_hash"]) == 64


def test_runs_are_byte_identical_for_same_seed(tmp_path):
    path = write_config(tmp_path)
    out_a, out_b, out_c = (tmp_path / n for n in ("a", "b", "c"))
    for out in (out_a, out_b):
        assert main(["--config", str(path), "--seed", "21", "--out", str(out)]) == 0
    assert (out_a / "rounds.csv").read_bytes() == (out_b / "rounds.csv").read_bytes()
    # Manifests agree on everything except the output path itself.
    manifests = []
    for out in (out_a, out_b):
        manifest = json.loads((out / "manifest.json").read_text())
        manifest["config"]["output"]["dir"] = "<out>"
        manifest["config_hash"] = "<hash>"
        manifests.append(manifest)
    assert manifests[0] == manifests[1]

    assert main(["--config", str(path), "--seed", "22", "--out", str(out_c)]) == 0
    assert (out_a / "rounds.csv").read_bytes() != (out_c / "rounds.csv").read_bytes()


def test_sweep_creates_factorial_run_directories(tmp_path):
    path = write_config(tmp_path, {"federation.max_rounds": 2})
    out = tmp_path / "sweep"
    code = main(["--config", str(path), "--study", "mca-fixed",
                 "--sweep-orderings", "--out", str(out)])
    assert code == 0
    run_dirs = [p for p in out.iterdir() if p.is_dir()]
    assert len(run_dirs) == math.factorial(3)
    for run_dir in run_dirs:
        assert (run_dir / "rounds.csv").exists()
        assert (run_dir / "manifest.json").exists()
    assert (out / "study_table.csv").exists()
    assert (out / "study_rounds.png").exists()


def test_validate_only_reports_and_exits(tmp_path, capsys):
    good = write_config(tmp_path)
    assert main(["--config", str(good), "--validate-only"]) == 0
    assert "config ok" in capsys.readouterr().out

    bad = write_config(tmp_path, {"federation.client_fraction": 2}, name="bad.yaml")
    assert main(["--config", str(bad), "--validate-only"]) == 1
    assert "client_fraction" in capsys.readouterr().out


def test_missing_config_is_an_error(tmp_path, capsys):
    assert main(["--config", str(tmp_path / "nope.yaml")]) == 1
    assert "not found" in capsys.readouterr().err
