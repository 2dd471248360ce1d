"""Simulated federated training loop with online priority-order adjustment.

Each round: sample a cohort, train every cohort client once on the broadcast
global model, measure all criteria once, then build a candidate global model
with the current priority ordering. The candidate is scored by the test-size
weighted accuracy over all clients; if it fails to match the previous
round's accuracy, the remaining orderings are tried against the cached local
models (never retraining), and if every ordering falls short the least-worst
candidate is kept. Everything is deterministic given the federation seed.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from . import aggregation, criteria, metrics, model
from .data import FederatedDataset
from .errors import (
    ConfigurationError,
    EmptyTrainingSetError,
    RoundAbortError,
    ValidationError,
)
from .seeding import derive_seed

THREAD_ENV_VAR = "FEDPRIO_THREADS"


@dataclass(frozen=True)
class FederationConfig:
    client_fraction: float = 0.1
    max_rounds: int = 1000
    target_accuracies: tuple[float, ...] = (0.75, 0.80)
    aggregator: str = "prioritized"
    criteria: tuple[str, ...] = criteria.DEFAULT_CRITERIA
    initial_ordering: tuple[int, ...] | None = None
    adjustment_enabled: bool = True
    seed: int = 0
    eval_fraction: float = 1.0

    def validate(self) -> None:
        if not (0.0 < self.client_fraction <= 1.0):
            raise ConfigurationError(
                f"client_fraction must be in (0, 1], got {self.client_fraction}"
            )
        if self.max_rounds < 1:
            raise ConfigurationError(f"max_rounds must be >= 1, got {self.max_rounds}")
        if not (0.0 < self.eval_fraction <= 1.0):
            raise ConfigurationError(
                f"eval_fraction must be in (0, 1], got {self.eval_fraction}"
            )
        for target in self.target_accuracies:
            if not (0.0 < target <= 1.0):
                raise ConfigurationError(f"target accuracy {target} outside (0, 1]")
        try:
            aggregation.validate_aggregator(self.aggregator)
            if self.aggregator == "prioritized" and self.initial_ordering is not None:
                aggregation.validate_ordering(self.initial_ordering, len(self.criteria))
        except ValidationError as exc:
            raise ConfigurationError(str(exc)) from exc
        if self.aggregator == "prioritized" and not self.criteria:
            raise ConfigurationError("prioritized aggregation needs at least one criterion")


@dataclass(frozen=True)
class FederationState:
    """Server-side state carried between rounds."""

    round_index: int
    global_model: np.ndarray
    accuracy: float
    ordering: tuple[int, ...]


@dataclass(frozen=True)
class AttemptRecord:
    ordering: tuple[int, ...]
    accuracy: float


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    cohort: tuple[str, ...]
    attempts: tuple[AttemptRecord, ...]
    accepted_ordering: tuple[int, ...]
    accepted_accuracy: float
    backtracks: int
    fallback: bool
    degenerate_weights: bool
    degenerate_criteria: tuple[str, ...]
    client_accuracies: tuple[float, ...]
    trained_clients: int
    skipped_clients: tuple[str, ...] = ()


@dataclass(frozen=True)
class ExperimentLog:
    """Full run history: per-round records plus the evaluation roster."""

    criterion_ids: tuple[str, ...]
    eval_client_ids: tuple[str, ...]
    eval_test_sizes: tuple[int, ...]
    records: tuple[RoundRecord, ...]
    config: FederationConfig

    def ordering_label(self, ordering: Sequence[int]) -> str:
        return aggregation.ordering_label(ordering, self.criterion_ids)

    def snapshots(self) -> list[metrics.AccuracySnapshot]:
        return [
            metrics.AccuracySnapshot(
                record.round_index,
                self.eval_client_ids,
                record.client_accuracies,
                self.eval_test_sizes,
            )
            for record in self.records
        ]

    def global_accuracies(self) -> list[float]:
        return [record.accepted_accuracy for record in self.records]


def sample_cohort(
    client_ids: Sequence[str], fraction: float, round_index: int, seed: int
) -> tuple[str, ...]:
    """Choose ceil(fraction * |clients|) distinct clients uniformly without
    replacement; deterministic in (seed, round) and returned sorted."""
    client_ids = tuple(client_ids)
    if not client_ids:
        raise ConfigurationError("no clients to sample from")
    if not (0.0 < fraction <= 1.0):
        raise ConfigurationError(f"fraction must be in (0, 1], got {fraction}")
    count = min(len(client_ids), max(1, math.ceil(fraction * len(client_ids) - 1e-9)))
    rng = np.random.default_rng(derive_seed(seed, "cohort", round_index))
    picked = rng.choice(len(client_ids), size=count, replace=False)
    return tuple(sorted(client_ids[i] for i in picked))


def _thread_count() -> int:
    raw = os.environ.get(THREAD_ENV_VAR, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class _Attempt:
    ordering: tuple[int, ...]
    weights: aggregation.ClientWeights
    candidate: np.ndarray
    client_accuracies: tuple[float, ...]
    accuracy: float


class FederatedSimulation:
    """Binds a dataset, model spec, and configs into a runnable experiment."""

    def __init__(
        self,
        dataset: FederatedDataset,
        model_spec: model.ModelSpec,
        training: model.TrainingConfig,
        federation: FederationConfig,
        registry: criteria.CriterionRegistry | None = None,
    ):
        model_spec.validate()
        training.validate()
        federation.validate()
        if not dataset.clients:
            raise ConfigurationError("dataset has no clients")
        self.dataset = dataset
        self.spec = model_spec
        self.training = training
        self.federation = federation
        self.clients = {c.client_id: c for c in dataset.clients}
        self.all_ids = dataset.client_ids

        if federation.aggregator == "prioritized":
            registry = registry or criteria.default_registry()
            self.providers = registry.resolve(federation.criteria)
        else:
            self.providers = []

        if federation.eval_fraction < 1.0:
            self.eval_ids = sample_cohort(
                self.all_ids, federation.eval_fraction, 0, derive_seed(federation.seed, "eval")
            )
        else:
            self.eval_ids = self.all_ids
        self.eval_test_sizes = tuple(self.clients[k].test_size for k in self.eval_ids)

    # -- state ---------------------------------------------------------

    def initial_state(self) -> FederationState:
        """Round-0 state: seeded init model, accuracy 0 (so the first
        candidate is always accepted), configured initial ordering."""
        ordering = self.federation.initial_ordering
        if ordering is None:
            ordering = tuple(range(len(self.providers)))
        w0 = model.init_model(self.spec, derive_seed(self.federation.seed, "init"))
        return FederationState(0, w0, 0.0, ordering)

    # -- per-round pieces ------------------------------------------------

    def _train_cohort(
        self, cohort: Sequence[str], global_model: np.ndarray, round_index: int
    ) -> tuple[dict[str, np.ndarray], list[str]]:
        def train_one(client_id: str):
            ds = self.clients[client_id]
            cfg = replace(
                self.training,
                rng_seed=derive_seed(self.federation.seed, client_id, round_index),
            )
            try:
                return client_id, model.local_update(
                    self.spec, global_model, ds.train_x, ds.train_y, cfg
                )
            except EmptyTrainingSetError:
                return client_id, None

        threads = _thread_count()
        if threads > 1 and len(cohort) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(train_one, cohort))
        else:
            results = [train_one(k) for k in cohort]

        local = {k: update for k, update in results if update is not None}
        skipped = [k for k, update in results if update is None]
        return local, skipped

    def _evaluate(self, candidate: np.ndarray) -> tuple[float, ...]:
        def accuracy_of(client_id: str) -> float:
            ds = self.clients[client_id]
            if ds.test_size == 0:
                return float("nan")
            return model.local_test_accuracy(self.spec, candidate, ds.test_x, ds.test_y)

        threads = _thread_count()
        if threads > 1 and len(self.eval_ids) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                return tuple(pool.map(accuracy_of, self.eval_ids))
        return tuple(accuracy_of(k) for k in self.eval_ids)

    def _attempt(
        self,
        ordering: tuple[int, ...],
        matrix: criteria.CriteriaMatrix | None,
        cohort: tuple[str, ...],
        local: Mapping[str, np.ndarray],
        round_index: int,
    ) -> _Attempt:
        if self.federation.aggregator == "fedavg":
            weights = aggregation.fedavg_weights(cohort, self.clients)
        else:
            weights = aggregation.prioritized_weights(matrix, ordering)
        candidate = aggregation.aggregate_models(
            [local[k] for k in weights.client_ids], weights
        )
        accuracies = self._evaluate(candidate)
        accuracy = metrics.weighted_global_accuracy(
            metrics.AccuracySnapshot(
                round_index, self.eval_ids, accuracies, self.eval_test_sizes
            )
        )
        return _Attempt(ordering, weights, candidate, accuracies, accuracy)

    # -- the round -------------------------------------------------------

    def run_round(self, state: FederationState) -> tuple[FederationState, RoundRecord]:
        """Advance one round of communication, adjusting the priority
        ordering when enabled and a better candidate exists."""
        round_index = state.round_index + 1
        cohort = sample_cohort(
            self.all_ids, self.federation.client_fraction, round_index, self.federation.seed
        )
        local, skipped = self._train_cohort(cohort, state.global_model, round_index)
        if not local:
            raise RoundAbortError(f"round {round_index}: no client produced a local update")
        trained = tuple(k for k in cohort if k in local)

        matrix = None
        if self.federation.aggregator == "prioritized":
            ctx = criteria.RoundContext(
                round_index, trained, self.clients, state.global_model, local
            )
            matrix = criteria.build_criteria_matrix(ctx, self.providers)
            plan = [state.ordering]
            if self.federation.adjustment_enabled:
                plan += [
                    o for o in aggregation.all_orderings(len(self.providers))
                    if o != state.ordering
                ]
        else:
            plan = [()]

        attempts: list[_Attempt] = []
        accepted: _Attempt | None = None
        fallback = False
        for ordering in plan:
            attempt = self._attempt(ordering, matrix, trained, local, round_index)
            attempts.append(attempt)
            if not self.federation.adjustment_enabled or self.federation.aggregator == "fedavg":
                accepted = attempt
                break
            if attempt.accuracy >= state.accuracy:
                accepted = attempt
                break
        if accepted is None:
            # Every ordering fell short: keep the least-worst candidate,
            # breaking ties toward the lexicographically smallest ordering.
            accepted = min(attempts, key=lambda a: (-a.accuracy, a.ordering))
            fallback = True

        record = RoundRecord(
            round_index=round_index,
            cohort=trained,
            attempts=tuple(AttemptRecord(a.ordering, a.accuracy) for a in attempts),
            accepted_ordering=accepted.ordering,
            accepted_accuracy=accepted.accuracy,
            backtracks=len(attempts) - 1,
            fallback=fallback,
            degenerate_weights=accepted.weights.degenerate,
            degenerate_criteria=matrix.degenerate if matrix is not None else (),
            client_accuracies=accepted.client_accuracies,
            trained_clients=len(trained),
            skipped_clients=tuple(skipped),
        )
        new_state = FederationState(
            round_index=round_index,
            global_model=accepted.candidate,
            accuracy=accepted.accuracy,
            ordering=accepted.ordering if matrix is not None else state.ordering,
        )
        return new_state, record

    # -- the experiment ----------------------------------------------------

    def run(self) -> ExperimentLog:
        state = self.initial_state()
        records = []
        for _ in range(self.federation.max_rounds):
            state, record = self.run_round(state)
            records.append(record)
        return ExperimentLog(
            criterion_ids=tuple(i for i, _ in self.providers),
            eval_client_ids=self.eval_ids,
            eval_test_sizes=self.eval_test_sizes,
            records=tuple(records),
            config=self.federation,
        )


def run_experiment(
    dataset: FederatedDataset,
    model_spec: model.ModelSpec,
    training: model.TrainingConfig,
    federation: FederationConfig,
    registry: criteria.CriterionRegistry | None = None,
) -> ExperimentLog:
    """Convenience wrapper: validate configs, run all rounds, return the log."""
    return FederatedSimulation(dataset, model_spec, training, federation, registry).run()
