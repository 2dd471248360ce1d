"""Figures and study-level summary tables rendered next to the CSV output.

A run report is an accuracy-trajectory figure (weighted global accuracy with
the 10th-90th percentile band, fallback rounds marked). A study report is a
rounds-to-target table whose rows are study variants and whose columns group
device percentages into low / mid / high bands with pairwise means, plus a
bar-chart figure of the per-variant means.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from . import metrics  # noqa: E402

STUDY_HEADER = (
    "study",
    "variant",
    "target",
    "pct_20", "pct_30", "low_mean",
    "pct_40", "pct_50", "mid_mean",
    "pct_70", "pct_75", "high_mean",
)


def save_accuracy_figure(log, path: str | Path, title: str | None = None) -> Path:
    """Render the run's accuracy trajectory to a PNG file."""
    snapshots = log.snapshots()
    rounds = [s.round_index for s in snapshots]
    global_acc = [metrics.weighted_global_accuracy(s) for s in snapshots]
    p10 = [metrics.percentile_accuracy(s, 10) for s in snapshots]
    p90 = [metrics.percentile_accuracy(s, 90) for s in snapshots]
    fallback_rounds = [r.round_index for r in log.records if r.fallback]
    fallback_acc = [r.accepted_accuracy for r in log.records if r.fallback]

    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.fill_between(rounds, p10, p90, alpha=0.2, label="p10-p90 band")
    ax.plot(rounds, global_acc, lw=1.5, label="weighted global accuracy")
    if fallback_rounds:
        ax.scatter(fallback_rounds, fallback_acc, s=12, color="tab:red",
                   zorder=3, label="least-worst fallback")
    ax.set_xlabel("round of communication")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.0)
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def mean_rounds(logs: Sequence, target: float, pct: int, max_rounds: int) -> float:
    """Mean first-crossing round over seeds; unreached runs count as
    ``max_rounds`` so variants that never arrive are penalized, not hidden."""
    values = []
    for log in logs:
        rtt = metrics.rounds_to_target(log.snapshots(), target, (pct,))
        first = rtt.first_rounds[0]
        values.append(max_rounds if first is None else first)
    return sum(values) / len(values)


def table_mean(
    logs: Sequence,
    target: float,
    max_rounds: int,
    device_pcts: Sequence[int] = metrics.DEVICE_PCTS,
) -> float:
    """Mean of ``mean_rounds`` across all device percentages."""
    return sum(mean_rounds(logs, target, p, max_rounds) for p in device_pcts) / len(device_pcts)


@dataclass(frozen=True)
class StudyRow:
    """One table row: a study variant aggregated over its seed runs."""

    study: str
    variant: str
    cells: dict  # (target, pct) -> mean rounds, or None when no seed reached

    @staticmethod
    def from_logs(
        study: str,
        variant: str,
        logs: Sequence,
        targets: Sequence[float],
        max_rounds: int,
        device_pcts: Sequence[int] = metrics.DEVICE_PCTS,
    ) -> "StudyRow":
        cells = {}
        for target in targets:
            per_log = [metrics.rounds_to_target(log.snapshots(), target, device_pcts)
                       for log in logs]
            for i, pct in enumerate(device_pcts):
                firsts = [rtt.first_rounds[i] for rtt in per_log]
                if all(f is None for f in firsts):
                    cells[(target, pct)] = None
                else:
                    cells[(target, pct)] = sum(
                        max_rounds if f is None else f for f in firsts
                    ) / len(firsts)
        return StudyRow(study, variant, cells)


def _cell(value: float | None) -> str:
    return metrics.NOT_REACHED if value is None else repr(round(float(value), 4))


def _band_mean(a: float | None, b: float | None) -> str:
    if a is None or b is None:
        return metrics.NOT_REACHED
    return repr(round((a + b) / 2.0, 4))


def write_study_table(
    rows: Sequence[StudyRow],
    path: str | Path,
    targets: Sequence[float] = (0.75, 0.80),
) -> Path:
    """Write the study comparison table as CSV, one row per (variant, target)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(STUDY_HEADER)
        for target in targets:
            for row in rows:
                record = [row.study, row.variant, repr(float(target))]
                for low, high in ((20, 30), (40, 50), (70, 75)):
                    a, b = row.cells.get((target, low)), row.cells.get((target, high))
                    record.extend([_cell(a), _cell(b), _band_mean(a, b)])
                writer.writerow(record)
    return path


def save_study_figure(
    rows: Sequence[StudyRow],
    path: str | Path,
    target: float,
    device_pcts: Sequence[int] = metrics.DEVICE_PCTS,
    max_rounds: int | None = None,
) -> Path:
    """Bar chart of mean rounds-to-target per study variant."""
    labels = [f"{r.study}:{r.variant}" for r in rows]
    means = []
    for row in rows:
        values = [row.cells.get((target, p)) for p in device_pcts]
        if max_rounds is not None:
            values = [max_rounds if v is None else v for v in values]
        else:
            values = [v for v in values if v is not None]
        means.append(sum(values) / len(values) if values else 0.0)

    fig, ax = plt.subplots(figsize=(7, 0.45 * len(rows) + 1.5))
    ax.barh(range(len(rows)), means, color="tab:blue", alpha=0.8)
    ax.set_yticks(range(len(rows)))
    ax.set_yticklabels(labels, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlabel(f"mean rounds to {target:.0%} target accuracy")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
