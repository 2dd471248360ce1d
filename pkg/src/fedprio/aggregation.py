"""Client scoring and model averaging strategies.

The prioritized operator folds a client's criterion evaluations into one
score following a strict priority order: each position's importance weight
is the running product of every higher-priority satisfaction degree,

    score = sum_i lambda_i * c_(i),   lambda_1 = 1,
    lambda_i = lambda_{i-1} * c_(i-1)

so an unfulfilled high-priority criterion cannot be compensated further
down the order. Scores are normalized into convex weights and applied as a
weighted average of the local parameter vectors. The ``fedavg`` strategy
weights purely by training set size.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .criteria import CriteriaMatrix, eval_dataset_size
from .data import ClientDataset
from .errors import AggregationError, ValidationError

PriorityOrdering = tuple[int, ...]


def validate_ordering(ordering: Sequence[int], m: int) -> tuple[int, ...]:
    ordering = tuple(int(i) for i in ordering)
    if sorted(ordering) != list(range(m)):
        raise ValidationError(
            f"ordering {ordering} is not a permutation of 0..{m - 1}"
        )
    return ordering


def all_orderings(m: int) -> list[tuple[int, ...]]:
    """Every priority ordering of ``m`` criteria, lexicographic."""
    return list(itertools.permutations(range(m)))


def ordering_label(ordering: Sequence[int], criterion_ids: Sequence[str]) -> str:
    return ">".join(criterion_ids[i] for i in ordering)


def prioritized_score(
    criteria_row: Sequence[float], ordering: Sequence[int]
) -> tuple[float, np.ndarray]:
    """Score one client's criterion evaluations under a priority ordering.

    Returns ``(score, lambdas)`` where ``lambdas[i]`` is the importance
    weight of the i-th priority position. The score lives in [0, m] and is
    0 exactly when the top-priority evaluation is 0.
    """
    row = np.asarray(criteria_row, dtype=float)
    ordering = validate_ordering(ordering, row.size)
    if not np.isfinite(row).all() or row.min() < 0.0 or row.max() > 1.0:
        raise ValidationError(f"criteria evaluations must lie in [0, 1], got {row}")
    lambdas = np.empty(row.size)
    running = 1.0
    for position, index in enumerate(ordering):
        lambdas[position] = running
        running *= row[index]
    score = float(np.sum(lambdas * row[list(ordering)]))
    return score, lambdas


@dataclass(frozen=True)
class ClientWeights:
    """Normalized per-client aggregation weights with their provenance."""

    client_ids: tuple[str, ...]
    weights: np.ndarray
    scores: np.ndarray
    lambdas: np.ndarray | None = None
    degenerate: bool = False

    def validate(self) -> None:
        n = len(self.client_ids)
        if self.weights.shape != (n,) or self.scores.shape != (n,):
            raise ValidationError("weights/scores length mismatch with client ids")
        if self.weights.min() < 0.0:
            raise ValidationError("negative aggregation weight")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValidationError(f"weights sum to {self.weights.sum()}, expected 1")


def scores_to_weights(client_ids: Sequence[str], scores: Sequence[float]) -> ClientWeights:
    """Normalize non-negative scores into convex weights.

    An all-zero cohort has no defined normalization, so it falls back to
    uniform weights and is flagged as degenerate for the round log.
    """
    client_ids = tuple(client_ids)
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0 or scores.size != len(client_ids):
        raise ValidationError("need one score per client, at least one client")
    if not np.isfinite(scores).all() or scores.min() < 0.0:
        raise ValidationError("scores must be finite and non-negative")
    total = scores.sum()
    if total == 0.0:
        weights = np.full(scores.size, 1.0 / scores.size)
        degenerate = True
    else:
        weights = scores / total
        degenerate = False
    weights = weights / weights.sum()  # absorb division rounding
    result = ClientWeights(client_ids, weights, scores, degenerate=degenerate)
    result.validate()
    return result


def prioritized_weights(matrix: CriteriaMatrix, ordering: Sequence[int]) -> ClientWeights:
    """Score every cohort row under ``ordering`` and normalize."""
    ordering = validate_ordering(ordering, len(matrix.criterion_ids))
    scores = np.empty(len(matrix.cohort))
    lambdas = np.empty((len(matrix.cohort), len(matrix.criterion_ids)))
    for i in range(len(matrix.cohort)):
        scores[i], lambdas[i] = prioritized_score(matrix.values[i], ordering)
    return replace(scores_to_weights(matrix.cohort, scores), lambdas=lambdas)


def fedavg_weights(
    cohort: Sequence[str], datasets: Mapping[str, ClientDataset]
) -> ClientWeights:
    """Baseline weights proportional to local training set size."""
    cohort = tuple(cohort)
    return scores_to_weights(cohort, eval_dataset_size(cohort, datasets))


def aggregate_models(
    local_models: Sequence[np.ndarray], weights: ClientWeights
) -> np.ndarray:
    """Convex combination of local parameter vectors.

    Accumulates in the given (client-id-sorted) order so results are
    bit-reproducible regardless of how the local updates were computed.
    """
    if len(local_models) != len(weights.client_ids):
        raise AggregationError(
            f"{len(local_models)} models for {len(weights.client_ids)} weights"
        )
    vectors = [np.asarray(m, dtype=float) for m in local_models]
    length = vectors[0].size
    for v in vectors:
        if v.ndim != 1 or v.size != length:
            raise AggregationError("local models have mismatched dimensions")
    combined = np.zeros(length)
    for weight, vector in zip(weights.weights, vectors):
        combined += weight * vector
    if not np.isfinite(combined).all():
        raise AggregationError("aggregated model contains non-finite entries")
    return combined


AGGREGATORS = ("fedavg", "prioritized")


def validate_aggregator(name: str) -> str:
    if name not in AGGREGATORS:
        raise ValidationError(f"unknown aggregator {name!r}; expected one of {AGGREGATORS}")
    return name
