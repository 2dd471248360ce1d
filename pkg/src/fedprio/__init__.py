"""Deterministic federated-learning simulator with prioritized multi-criteria
client weighting and online priority-order adjustment."""

__version__ = "0.1.0"

from .aggregation import (
    ClientWeights,
    aggregate_models,
    all_orderings,
    fedavg_weights,
    prioritized_score,
    prioritized_weights,
    scores_to_weights,
)
from .criteria import (
    CriteriaMatrix,
    CriterionRegistry,
    RoundContext,
    build_criteria_matrix,
    default_registry,
    eval_dataset_size,
    eval_label_diversity,
    eval_model_divergence,
)
from .data import (
    ClientDataset,
    FederatedDataset,
    dataset_stats,
    load_leaf_json,
    synth_noniid,
)
from .errors import FedPrioError
from .metrics import (
    AccuracySnapshot,
    RoundsToTarget,
    export_csv,
    percentile_accuracy,
    rounds_to_target,
    weighted_global_accuracy,
)
from .model import (
    ConvSpec,
    ModelSpec,
    TrainingConfig,
    init_model,
    local_test_accuracy,
    local_update,
    model_l2_distance,
)
from .orchestrator import (
    ExperimentLog,
    FederatedSimulation,
    FederationConfig,
    FederationState,
    RoundRecord,
    run_experiment,
    sample_cohort,
)

__all__ = [
    "AccuracySnapshot",
    "ClientDataset",
    "ClientWeights",
    "ConvSpec",
    "CriteriaMatrix",
    "CriterionRegistry",
    "ExperimentLog",
    "FedPrioError",
    "FederatedDataset",
    "FederatedSimulation",
    "FederationConfig",
    "FederationState",
    "ModelSpec",
    "RoundContext",
    "RoundRecord",
    "RoundsToTarget",
    "TrainingConfig",
    "aggregate_models",
    "all_orderings",
    "build_criteria_matrix",
    "dataset_stats",
    "default_registry",
    "eval_dataset_size",
    "eval_label_diversity",
    "eval_model_divergence",
    "export_csv",
    "fedavg_weights",
    "init_model",
    "load_leaf_json",
    "local_test_accuracy",
    "local_update",
    "model_l2_distance",
    "percentile_accuracy",
    "prioritized_score",
    "prioritized_weights",
    "rounds_to_target",
    "run_experiment",
    "sample_cohort",
    "scores_to_weights",
    "synth_noniid",
    "weighted_global_accuracy",
]
