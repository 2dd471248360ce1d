"""Exception hierarchy used across the package."""


class FedPrioError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(FedPrioError):
    """Invalid model spec, training config, or federation config."""


class ValidationError(FedPrioError):
    """An operation received out-of-contract values (e.g. scores < 0)."""


class DimensionError(FedPrioError):
    """Parameter vectors or feature matrices with mismatched shapes."""


class IngestionError(FedPrioError):
    """A dataset file could not be parsed or violates format invariants."""


class CriterionError(FedPrioError):
    """A criterion could not be evaluated on the selected cohort."""


class AggregationError(FedPrioError):
    """Model averaging failed (shape mismatch or non-finite output)."""


class MetricError(FedPrioError):
    """A metric is undefined for the given input (e.g. no test data)."""


class EmptyTrainingSetError(FedPrioError):
    """Client selected for training has no training samples (client skip)."""


class EmptyTestSetError(FedPrioError):
    """Accuracy requested on a client without test samples."""


class RoundAbortError(FedPrioError):
    """No client in the round produced a usable local update."""
