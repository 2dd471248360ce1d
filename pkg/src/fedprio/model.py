"""Flat-parameter classifier substrate.

Every client trains the same architecture, described by a spec whose
parameters live in a single flat float64 vector. The trainable architecture
is a one-hidden-layer MLP with a softmax head and cross-entropy loss; a
convolutional spec is also expressible for analytic parameter counting, but
it is not trainable here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    DimensionError,
    EmptyTestSetError,
    EmptyTrainingSetError,
)

_ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class ModelSpec:
    """One-hidden-layer MLP: input -> hidden (relu/tanh) -> softmax logits."""

    input_dim: int
    class_count: int
    hidden_units: int = 32
    activation: str = "relu"

    def validate(self) -> None:
        if self.input_dim < 1:
            raise ConfigurationError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.class_count < 2:
            raise ConfigurationError(f"class_count must be >= 2, got {self.class_count}")
        if self.hidden_units < 1:
            raise ConfigurationError(f"hidden_units must be >= 1, got {self.hidden_units}")
        if self.activation not in _ACTIVATIONS:
            raise ConfigurationError(
                f"unknown activation {self.activation!r}; expected one of {_ACTIVATIONS}"
            )

    def weight_segments(self) -> list[tuple[int, int]]:
        """(weight count, bias count) per layer, in flat-vector order."""
        return [
            (self.input_dim * self.hidden_units, self.hidden_units),
            (self.hidden_units * self.class_count, self.class_count),
        ]

    @property
    def parameter_count(self) -> int:
        return sum(w + b for w, b in self.weight_segments())


@dataclass(frozen=True)
class ConvSpec:
    """Conv net descriptor, used only for analytic parameter counting.

    Each conv layer uses square ``kernel_size`` filters and is followed by a
    2x2 max pool (padding preserves the side length, pooling halves it).
    """

    input_side: int = 28
    input_channels: int = 1
    conv_channels: tuple[int, ...] = (32, 64)
    kernel_size: int = 5
    dense_units: tuple[int, ...] = (2048,)
    class_count: int = 62

    def validate(self) -> None:
        if self.input_side < 1 or self.input_channels < 1:
            raise ConfigurationError("input_side and input_channels must be >= 1")
        if self.class_count < 2:
            raise ConfigurationError(f"class_count must be >= 2, got {self.class_count}")
        if not self.conv_channels or any(c < 1 for c in self.conv_channels):
            raise ConfigurationError("conv_channels must be non-empty positive ints")
        if any(u < 1 for u in self.dense_units):
            raise ConfigurationError("dense_units must be positive ints")

    def weight_segments(self) -> list[tuple[int, int]]:
        segments = []
        side = self.input_side
        channels = self.input_channels
        for out_channels in self.conv_channels:
            segments.append((self.kernel_size**2 * channels * out_channels, out_channels))
            channels = out_channels
            side //= 2
        fan_in = side * side * channels
        for units in (*self.dense_units, self.class_count):
            segments.append((fan_in * units, units))
            fan_in = units
        return segments

    @property
    def parameter_count(self) -> int:
        return sum(w + b for w, b in self.weight_segments())


@dataclass(frozen=True)
class TrainingConfig:
    """Local SGD hyperparameters.

    ``learning_rate == 0`` is tolerated as a test-only identity mode; the
    experiment config validator rejects it for real runs.
    """

    learning_rate: float = 0.01
    local_epochs: int = 5
    batch_size: int = 10
    rng_seed: int = 0

    def validate(self) -> None:
        if self.learning_rate < 0:
            raise ConfigurationError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.local_epochs < 1:
            raise ConfigurationError(f"local_epochs must be >= 1, got {self.local_epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")


def init_model(spec, seed: int) -> np.ndarray:
    """Seeded flat parameter vector: weights uniform in [-0.05, 0.05], biases zero."""
    spec.validate()
    rng = np.random.default_rng(seed)
    parts = []
    for weight_count, bias_count in spec.weight_segments():
        parts.append(rng.uniform(-0.05, 0.05, weight_count))
        parts.append(np.zeros(bias_count))
    return np.concatenate(parts)


def _unpack(spec: ModelSpec, params: np.ndarray):
    if params.ndim != 1 or params.size != spec.parameter_count:
        raise DimensionError(
            f"parameter vector has length {params.size}, spec requires {spec.parameter_count}"
        )
    n_in, hidden, classes = spec.input_dim, spec.hidden_units, spec.class_count
    offset = n_in * hidden
    w1 = params[:offset].reshape(n_in, hidden)
    b1 = params[offset : offset + hidden]
    offset += hidden
    w2 = params[offset : offset + hidden * classes].reshape(hidden, classes)
    b2 = params[offset + hidden * classes :]
    return w1, b1, w2, b2


def _forward(spec: ModelSpec, params: np.ndarray, features: np.ndarray):
    w1, b1, w2, b2 = _unpack(spec, params)
    if features.ndim != 2 or features.shape[1] != spec.input_dim:
        raise DimensionError(
            f"features have shape {features.shape}, expected (n, {spec.input_dim})"
        )
    pre_hidden = features @ w1 + b1
    if spec.activation == "relu":
        hidden = np.maximum(pre_hidden, 0.0)
    else:
        hidden = np.tanh(pre_hidden)
    logits = hidden @ w2 + b2
    return pre_hidden, hidden, logits


def predict_logits(spec: ModelSpec, params: np.ndarray, features: np.ndarray) -> np.ndarray:
    return _forward(spec, params, np.asarray(features, dtype=float))[2]


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy_loss(
    spec: ModelSpec, params: np.ndarray, features: np.ndarray, labels: np.ndarray
) -> float:
    """Mean cross-entropy of the softmax classifier over the batch."""
    logits = predict_logits(spec, params, features)
    log_probs = _log_softmax(logits)
    labels = np.asarray(labels, dtype=np.int64)
    return float(-log_probs[np.arange(labels.size), labels].mean())


def loss_gradient(
    spec: ModelSpec, params: np.ndarray, features: np.ndarray, labels: np.ndarray
) -> np.ndarray:
    """Flat gradient of the mean cross-entropy over the batch."""
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    pre_hidden, hidden, logits = _forward(spec, params, features)
    probs = np.exp(_log_softmax(logits))
    n = labels.size
    d_logits = probs
    d_logits[np.arange(n), labels] -= 1.0
    d_logits /= n

    _, _, w2, _ = _unpack(spec, params)
    grad_w2 = hidden.T @ d_logits
    grad_b2 = d_logits.sum(axis=0)
    d_hidden = d_logits @ w2.T
    if spec.activation == "relu":
        d_pre = d_hidden * (pre_hidden > 0.0)
    else:
        d_pre = d_hidden * (1.0 - hidden**2)
    grad_w1 = features.T @ d_pre
    grad_b1 = d_pre.sum(axis=0)
    return np.concatenate(
        [grad_w1.ravel(), grad_b1, grad_w2.ravel(), grad_b2]
    )


def minibatch_sgd(initial, sample_count: int, gradient_fn, cfg: TrainingConfig) -> np.ndarray:
    """Run seeded mini-batch SGD and return the updated parameter vector.

    ``gradient_fn(params, batch_indices)`` must return the mean gradient over
    the indexed samples. Sample order is reshuffled each epoch from a single
    generator seeded with ``cfg.rng_seed``; the final partial batch is kept.
    The input vector is never modified.
    """
    cfg.validate()
    if sample_count < 1:
        raise EmptyTrainingSetError("no training samples")
    params = np.array(initial, dtype=float, copy=True)
    rng = np.random.default_rng(cfg.rng_seed)
    for _ in range(cfg.local_epochs):
        order = rng.permutation(sample_count)
        for start in range(0, sample_count, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            params -= cfg.learning_rate * gradient_fn(params, batch)
    return params


def local_update(
    spec: ModelSpec,
    params: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    cfg: TrainingConfig,
) -> np.ndarray:
    """Local training pass: ``cfg.local_epochs`` epochs of mini-batch SGD.

    Deterministic given ``cfg.rng_seed``; the broadcast model is left
    untouched and a fresh vector is returned.
    """
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if features.shape[0] == 0:
        raise EmptyTrainingSetError("client has an empty training set")
    _unpack(spec, np.asarray(params, dtype=float))  # shape check up front

    def grad(p: np.ndarray, batch: np.ndarray) -> np.ndarray:
        return loss_gradient(spec, p, features[batch], labels[batch])

    updated = minibatch_sgd(params, features.shape[0], grad, cfg)
    if not np.isfinite(updated).all():
        raise ConfigurationError(
            "local training produced non-finite parameters; lower the learning rate"
        )
    return updated


def local_test_accuracy(
    spec: ModelSpec, params: np.ndarray, features: np.ndarray, labels: np.ndarray
) -> float:
    """Fraction of samples whose argmax predicted class matches the label."""
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if features.shape[0] == 0:
        raise EmptyTestSetError("client has an empty test set")
    logits = predict_logits(spec, params, features)
    return float((logits.argmax(axis=1) == labels).mean())


def model_l2_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between two flat parameter vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))
