"""Configuration-driven experiment runner.

A run writes its artifacts into the output directory:

* ``rounds.csv``    per-round log plus a rounds-to-target summary block
* ``manifest.json`` every effective parameter, the config hash, versions
* ``accuracy.png``  accuracy-trajectory figure

With ``--sweep-orderings`` the run is repeated once per priority ordering
(m! subdirectories) and a combined ``study_table.csv`` plus comparison
figure land at the output root. Thread count is controlled only by the
``FEDPRIO_THREADS`` environment variable.
"""

from __future__ import annotations

import argparse
import itertools
import json
import platform
import sys
from pathlib import Path

import numpy

from . import __version__, metrics, report
from .config import ExperimentConfig, load_config, validate_config
from .errors import FedPrioError
from .orchestrator import ExperimentLog, FederatedSimulation


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedprio",
        description="Deterministic federated-learning simulator with prioritized "
                    "multi-criteria aggregation and online priority-order adjustment.",
    )
    parser.add_argument("--config", required=True, help="Path to the YAML experiment config.")
    parser.add_argument("--seed", type=int, default=None, help="Override federation.seed.")
    parser.add_argument(
        "--study", default=None,
        choices=["fedavg-baseline", "individual", "mca-fixed", "final-adjusted"],
        help="Override the study mode.",
    )
    parser.add_argument(
        "--ordering", default=None,
        help="Override the priority ordering as comma-separated criterion ids, "
             "e.g. 'ds,ld,md'.",
    )
    parser.add_argument(
        "--aggregator", default=None, choices=["fedavg", "prioritized"],
        help="Force the aggregation strategy regardless of study mode.",
    )
    parser.add_argument("--rounds", type=int, default=None, help="Override federation.max_rounds.")
    parser.add_argument("--out", default=None, help="Override output.dir.")
    parser.add_argument(
        "--validate-only", action="store_true",
        help="Validate the config and print violations without running anything.",
    )
    parser.add_argument(
        "--sweep-orderings", action="store_true",
        help="Run once per priority ordering of the configured criteria.",
    )
    return parser


def _overrides_from_args(args: argparse.Namespace) -> dict:
    ordering = None
    if args.ordering is not None:
        ordering = [part.strip() for part in args.ordering.split(",") if part.strip()]
    return {
        "seed": args.seed,
        "study": args.study,
        "ordering": ordering,
        "aggregator": args.aggregator,
        "rounds": args.rounds,
        "out": args.out,
    }


def _write_manifest(cfg: ExperimentConfig, out_dir: Path) -> None:
    manifest = {
        "config": cfg.effective,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "study": cfg.study,
        "ordering": list(cfg.ordering_ids),
        "versions": {
            "fedprio": __version__,
            "numpy": numpy.__version__,
            "python": platform.python_version(),
        },
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _run_single(cfg: ExperimentConfig, out_dir: Path) -> ExperimentLog:
    dataset = cfg.load_dataset()
    sim = FederatedSimulation(
        dataset,
        cfg.build_model_spec(dataset),
        cfg.build_training(),
        cfg.build_federation(),
    )
    log = sim.run()
    _write_manifest(cfg, out_dir)
    targets = cfg.effective["federation"]["target_accuracies"]
    metrics.export_csv(log, out_dir / "rounds.csv", targets=targets)
    report.save_accuracy_figure(
        log, out_dir / "accuracy.png",
        title=f"{cfg.study} ({log.ordering_label(log.records[-1].accepted_ordering) or cfg.aggregator})",
    )
    return log


def _run_sweep(config_path: str, overrides: dict, cfg: ExperimentConfig) -> int:
    ids = cfg.criteria_ids
    out_root = cfg.output_dir
    rows = []
    targets = cfg.effective["federation"]["target_accuracies"]
    max_rounds = cfg.effective["federation"]["max_rounds"]
    for ordering in itertools.permutations(ids):
        label = ">".join(ordering)
        sub_overrides = dict(overrides)
        sub_overrides["ordering"] = list(ordering)
        sub_overrides["out"] = str(out_root / label.replace(">", "-"))
        sub_cfg = load_config(config_path, sub_overrides)
        log = _run_single(sub_cfg, sub_cfg.output_dir)
        rows.append(
            report.StudyRow.from_logs(sub_cfg.study, label, [log], targets, max_rounds)
        )
    report.write_study_table(rows, out_root / "study_table.csv", targets=targets)
    report.save_study_figure(
        rows, out_root / "study_rounds.png", targets[0], max_rounds=max_rounds
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.validate_only:
        try:
            violations = validate_config(args.config)
        except FedPrioError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        if violations:
            print("invalid config:")
            for violation in violations:
                print(f"  - {violation}")
            return 1
        print("config ok")
        return 0

    overrides = _overrides_from_args(args)
    try:
        cfg = load_config(args.config, overrides)
        if args.sweep_orderings:
            return _run_sweep(args.config, overrides, cfg)
        log = _run_single(cfg, cfg.output_dir)
    except FedPrioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    final = log.records[-1]
    print(
        f"completed {len(log.records)} rounds"
        f" | final weighted accuracy {final.accepted_accuracy:.4f}"
        f" | artifacts in {cfg.output_dir}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
