"""Evaluation metrics over experiment logs.

The headline measurement is rounds-to-target: the first round of
communication at which a given percentage of all participating devices
reaches a target local test accuracy. Per-round summaries use the test-set
size-weighted global accuracy plus the 10th/90th accuracy percentiles.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import MetricError

DEVICE_PCTS = (20, 30, 40, 50, 70, 75)
NOT_REACHED = "---"


@dataclass(frozen=True)
class AccuracySnapshot:
    """Per-client local accuracy at one round; NaN marks clients with no
    test data (they carry zero weight in the global average)."""

    round_index: int
    client_ids: tuple[str, ...]
    accuracies: tuple[float, ...]
    test_sizes: tuple[int, ...]


def weighted_global_accuracy(snapshot: AccuracySnapshot) -> float:
    """Average of local accuracies weighted by local test set size."""
    accs = np.asarray(snapshot.accuracies, dtype=float)
    sizes = np.asarray(snapshot.test_sizes, dtype=float)
    mask = sizes > 0
    if not mask.any():
        raise MetricError("every client has an empty test set")
    return float(np.sum(accs[mask] * sizes[mask]) / np.sum(sizes[mask]))


def percentile_accuracy(snapshot: AccuracySnapshot, p: float) -> float:
    """Nearest-rank percentile of per-client accuracies (unweighted).

    Clients without test data have no accuracy and are excluded.
    """
    values = np.asarray(snapshot.accuracies, dtype=float)
    values = np.sort(values[~np.isnan(values)])
    if values.size == 0:
        raise MetricError("no client accuracies available")
    rank = min(values.size, max(1, math.ceil(p / 100.0 * values.size)))
    return float(values[rank - 1])


@dataclass(frozen=True)
class RoundsToTarget:
    """First round at which each device percentage met the target, or None."""

    target: float
    device_pcts: tuple[int, ...]
    first_rounds: tuple[int | None, ...]

    def validate(self) -> None:
        previous = 0
        for pct, first in zip(self.device_pcts, self.first_rounds):
            if first is None:
                previous = None
                continue
            if previous is None:
                raise MetricError(
                    f"{pct}% reached at round {first} although a smaller percentage never was"
                )
            if first < previous:
                raise MetricError("first-round values must be non-decreasing in device %")
            previous = first


def rounds_to_target(
    snapshots: Sequence[AccuracySnapshot],
    target: float,
    device_pcts: Sequence[int] = DEVICE_PCTS,
) -> RoundsToTarget:
    """Scan round snapshots for the first round where at least
    ceil(pct% of clients) hit the target accuracy in that same round."""
    if not snapshots:
        raise MetricError("need at least one round of trajectories")
    n_clients = len(snapshots[0].client_ids)
    counts = []
    for snap in snapshots:
        accs = np.asarray(snap.accuracies, dtype=float)
        counts.append((snap.round_index, int(np.sum(accs >= target))))
    firsts = []
    for pct in device_pcts:
        needed = math.ceil(pct / 100.0 * n_clients)
        first = next((r for r, c in counts if c >= needed), None)
        firsts.append(first)
    result = RoundsToTarget(target, tuple(int(p) for p in device_pcts), tuple(firsts))
    result.validate()
    return result


def _fmt(value: float) -> str:
    return repr(float(value))


def _pair_mean(a: int | None, b: int | None) -> str:
    if a is None or b is None:
        return NOT_REACHED
    return _fmt((a + b) / 2.0)


ROUND_HEADER = ("round", "ordering", "attempts", "global_accuracy", "p10", "p90")
SUMMARY_HEADER = (
    "target",
    "pct_20", "pct_30", "low_mean",
    "pct_40", "pct_50", "mid_mean",
    "pct_70", "pct_75", "high_mean",
)


def export_csv(log, path: str | Path, targets: Sequence[float] = (0.75, 0.80)) -> None:
    """Write per-round rows plus a rounds-to-target summary block.

    ``log`` is an experiment log exposing ``records`` (with ordering labels
    and attempt counts) and ``snapshots()``. The summary block groups the
    device percentages as 20/30, 40/50 and 70/75 with their pairwise means;
    percentages never reached are marked ``---``.
    """
    snapshots = log.snapshots()
    rows = []
    for record, snap in zip(log.records, snapshots):
        rows.append(
            (
                record.round_index,
                log.ordering_label(record.accepted_ordering),
                len(record.attempts),
                _fmt(weighted_global_accuracy(snap)),
                _fmt(percentile_accuracy(snap, 10)),
                _fmt(percentile_accuracy(snap, 90)),
            )
        )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(ROUND_HEADER)
        writer.writerows(rows)
        if not snapshots:
            return
        writer.writerow(())
        writer.writerow(SUMMARY_HEADER)
        for target in targets:
            rtt = rounds_to_target(snapshots, target)  # validates monotonicity
            by_pct = dict(zip(rtt.device_pcts, rtt.first_rounds))
            cells: list[str] = [_fmt(target)]
            for low, high in ((20, 30), (40, 50), (70, 75)):
                for pct in (low, high):
                    first = by_pct[pct]
                    cells.append(NOT_REACHED if first is None else str(first))
                cells.append(_pair_mean(by_pct[low], by_pct[high]))
            writer.writerow(cells)
