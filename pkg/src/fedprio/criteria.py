"""Per-round, per-client criterion evaluation.

Three built-in criteria score each selected client in [0, 1]:

* ``ds`` — training set size relative to the cohort total,
* ``ld`` — number of distinct labels relative to the cohort total,
* ``md`` — inverse-square-root penalty of the client model's L2 distance
  from the broadcast global model.

Raw values are normalized so each criterion column sums to 1 over the
cohort. Additional criteria can be registered; orderings and the
backtracking search adapt to the registered count automatically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .data import ClientDataset
from .errors import CriterionError, DimensionError, FedPrioError
from .model import model_l2_distance


@dataclass(frozen=True)
class RoundContext:
    """Read-only view of one round handed to criterion measures."""

    round_index: int
    cohort: tuple[str, ...]
    datasets: Mapping[str, ClientDataset]
    global_model: np.ndarray | None = None
    local_models: Mapping[str, np.ndarray] | None = None


CriterionFn = Callable[[RoundContext], np.ndarray]


def normalize_column(raw: np.ndarray) -> tuple[np.ndarray, bool]:
    """Scale raw non-negative values to sum to 1.

    An all-zero column falls back to the uniform distribution and is
    flagged as degenerate so the round log can record it.
    """
    raw = np.asarray(raw, dtype=float)
    total = raw.sum()
    if total == 0.0:
        return np.full(raw.size, 1.0 / raw.size), True
    return raw / total, False


def _require_cohort(cohort: Sequence[str]) -> tuple[str, ...]:
    cohort = tuple(cohort)
    if not cohort:
        raise CriterionError("empty cohort")
    return cohort


def raw_dataset_sizes(ctx: RoundContext) -> np.ndarray:
    return np.array([ctx.datasets[k].train_size for k in ctx.cohort], dtype=float)


def raw_label_diversity(ctx: RoundContext) -> np.ndarray:
    return np.array(
        [ctx.datasets[k].distinct_train_labels if ctx.datasets[k].train_size else 0
         for k in ctx.cohort],
        dtype=float,
    )


def raw_divergence_penalty(ctx: RoundContext) -> np.ndarray:
    """phi_k = 1 / sqrt(||w_global - w_k|| + 1), always in (0, 1]."""
    if ctx.global_model is None or ctx.local_models is None:
        raise CriterionError("divergence criterion needs global and local models")
    phis = np.empty(len(ctx.cohort))
    for i, k in enumerate(ctx.cohort):
        try:
            dist = model_l2_distance(ctx.global_model, ctx.local_models[k])
        except DimensionError as exc:
            raise CriterionError(f"client {k!r}: {exc}") from exc
        phis[i] = 1.0 / np.sqrt(dist + 1.0)
    return phis


def eval_dataset_size(
    cohort: Sequence[str], datasets: Mapping[str, ClientDataset]
) -> np.ndarray:
    """Normalized training set sizes; local datasets are disjoint, so the
    cohort union size is the plain sum."""
    cohort = _require_cohort(cohort)
    raw = raw_dataset_sizes(RoundContext(0, cohort, datasets))
    column, degenerate = normalize_column(raw)
    if degenerate:
        raise CriterionError("every selected client has an empty training set")
    return column


def eval_label_diversity(
    cohort: Sequence[str], datasets: Mapping[str, ClientDataset]
) -> np.ndarray:
    """Normalized distinct-label counts over the cohort."""
    cohort = _require_cohort(cohort)
    raw = raw_label_diversity(RoundContext(0, cohort, datasets))
    column, degenerate = normalize_column(raw)
    if degenerate:
        raise CriterionError("no selected client holds any labeled data")
    return column


def eval_model_divergence(
    cohort: Sequence[str],
    global_model: np.ndarray,
    local_models: Mapping[str, np.ndarray],
) -> np.ndarray:
    """Normalized divergence penalties, measured against the round's
    broadcast global model (the pre-update one)."""
    cohort = _require_cohort(cohort)
    ctx = RoundContext(0, cohort, {}, global_model, local_models)
    column, _ = normalize_column(raw_divergence_penalty(ctx))
    return column


class CriterionRegistry:
    """Named raw-measure functions; ids select and order matrix columns."""

    def __init__(self, measures: Mapping[str, CriterionFn] | None = None):
        self._measures: dict[str, CriterionFn] = dict(measures or {})

    def register(self, criterion_id: str, fn: CriterionFn, *, replace: bool = False) -> None:
        if not replace and criterion_id in self._measures:
            raise CriterionError(f"criterion id {criterion_id!r} already registered")
        self._measures[criterion_id] = fn

    def ids(self) -> tuple[str, ...]:
        return tuple(self._measures)

    def resolve(self, ids: Sequence[str]) -> list[tuple[str, CriterionFn]]:
        unknown = [i for i in ids if i not in self._measures]
        if unknown:
            raise CriterionError(f"unknown criterion ids: {unknown}")
        return [(i, self._measures[i]) for i in ids]


DEFAULT_CRITERIA = ("ds", "ld", "md")


def default_registry() -> CriterionRegistry:
    return CriterionRegistry(
        {
            "ds": raw_dataset_sizes,
            "ld": raw_label_diversity,
            "md": raw_divergence_penalty,
        }
    )


@dataclass(frozen=True)
class CriteriaMatrix:
    """Cohort-by-criterion evaluations, one normalized column per criterion."""

    round_index: int
    cohort: tuple[str, ...]
    criterion_ids: tuple[str, ...]
    values: np.ndarray
    degenerate: tuple[str, ...] = ()

    def validate(self) -> None:
        n, m = len(self.cohort), len(self.criterion_ids)
        if self.values.shape != (n, m):
            raise CriterionError(f"matrix shape {self.values.shape} != ({n}, {m})")
        if self.values.min() < 0.0 or self.values.max() > 1.0 + 1e-12:
            raise CriterionError("matrix entries outside [0, 1]")
        sums = self.values.sum(axis=0)
        if np.abs(sums - 1.0).max() > 1e-9:
            raise CriterionError(f"criterion columns must sum to 1, got {sums}")

    def row(self, client_id: str) -> np.ndarray:
        return self.values[self.cohort.index(client_id)]


def build_criteria_matrix(
    ctx: RoundContext, providers: Sequence[tuple[str, CriterionFn]]
) -> CriteriaMatrix:
    """Measure every registered criterion once for the round's cohort.

    Provider errors propagate tagged with the criterion id. The matrix is
    meant to be built once per round and reused across ordering retries.
    """
    cohort = _require_cohort(ctx.cohort)
    if not providers:
        raise CriterionError("no criteria selected")
    columns = []
    degenerate = []
    for criterion_id, fn in providers:
        try:
            raw = np.asarray(fn(ctx), dtype=float)
        except FedPrioError as exc:
            raise CriterionError(f"criterion {criterion_id!r}: {exc}") from exc
        if raw.shape != (len(cohort),):
            raise CriterionError(
                f"criterion {criterion_id!r}: expected {len(cohort)} values, got shape {raw.shape}"
            )
        if not np.isfinite(raw).all() or raw.min() < 0.0:
            raise CriterionError(
                f"criterion {criterion_id!r}: raw values must be finite and non-negative"
            )
        column, fell_back = normalize_column(raw)
        if fell_back:
            degenerate.append(criterion_id)
        columns.append(column)
    matrix = CriteriaMatrix(
        round_index=ctx.round_index,
        cohort=cohort,
        criterion_ids=tuple(i for i, _ in providers),
        values=np.column_stack(columns),
        degenerate=tuple(degenerate),
    )
    matrix.validate()
    return matrix
