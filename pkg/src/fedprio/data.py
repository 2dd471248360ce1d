"""Federated dataset ingestion and synthesis.

Supports the LEAF JSON convention (top-level ``users``, ``num_samples``,
``user_data`` with per-user ``x``/``y`` lists) and a synthetic non-IID
generator with controllable label skew. Client order is always sorted by
client id so that downstream reductions are reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, IngestionError
from .seeding import derive_seed


@dataclass(frozen=True)
class ClientDataset:
    """One client's private train/test samples."""

    client_id: str
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray

    @property
    def train_size(self) -> int:
        return int(self.train_x.shape[0])

    @property
    def test_size(self) -> int:
        return int(self.test_x.shape[0])

    @property
    def distinct_train_labels(self) -> int:
        """Number of different class labels present in the training split."""
        return int(np.unique(self.train_y).size)


@dataclass(frozen=True)
class FederatedDataset:
    clients: tuple[ClientDataset, ...]
    class_count: int
    feature_dim: int

    @property
    def client_ids(self) -> tuple[str, ...]:
        return tuple(c.client_id for c in self.clients)

    def by_id(self, client_id: str) -> ClientDataset:
        try:
            return self._index[client_id]
        except AttributeError:
            index = {c.client_id: c for c in self.clients}
            object.__setattr__(self, "_index", index)
            return index[client_id]


def make_federated_dataset(
    clients: list[ClientDataset], class_count: int, feature_dim: int
) -> FederatedDataset:
    """Sort clients by id and check cross-client invariants."""
    ids = [c.client_id for c in clients]
    if len(set(ids)) != len(ids):
        raise IngestionError("duplicate client ids")
    ordered = tuple(sorted(clients, key=lambda c: c.client_id))
    for client in ordered:
        for x, y, split in (
            (client.train_x, client.train_y, "train"),
            (client.test_x, client.test_y, "test"),
        ):
            if x.shape[0] != y.shape[0]:
                raise IngestionError(
                    f"user {client.client_id!r}: {split} has {x.shape[0]} feature rows "
                    f"but {y.shape[0]} labels"
                )
            if x.shape[0] and x.shape[1] != feature_dim:
                raise IngestionError(
                    f"user {client.client_id!r}: {split} feature dimension "
                    f"{x.shape[1]} != {feature_dim}"
                )
            if y.size and (y.min() < 0 or y.max() >= class_count):
                raise IngestionError(
                    f"user {client.client_id!r}: {split} labels outside [0, {class_count})"
                )
    return FederatedDataset(ordered, class_count, feature_dim)


# ----------------------------------------------------------------------
# LEAF JSON ingestion
# ----------------------------------------------------------------------

def _read_leaf_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise IngestionError(f"{path}: malformed JSON ({exc})") from exc
    for key in ("users", "num_samples", "user_data"):
        if key not in payload:
            raise IngestionError(f"{path}: missing top-level key {key!r}")
    return payload


def _extract_user(payload: dict, user: str, origin: str):
    data = payload["user_data"].get(user)
    if data is None or "x" not in data or "y" not in data:
        raise IngestionError(f"user {user!r}: missing x/y entries in {origin}")
    xs, ys = data["x"], data["y"]
    if len(xs) != len(ys):
        raise IngestionError(
            f"user {user!r}: {len(xs)} feature rows but {len(ys)} labels in {origin}"
        )
    try:
        declared = payload["num_samples"][payload["users"].index(user)]
    except ValueError:
        declared = len(xs)  # user present in user_data only; nothing declared
    if declared != len(xs):
        raise IngestionError(
            f"user {user!r}: file declares {declared} samples but holds {len(xs)} in {origin}"
        )
    for label in ys:
        if isinstance(label, bool) or not isinstance(label, int):
            raise IngestionError(f"user {user!r}: non-integer label {label!r} in {origin}")
        if label < 0:
            raise IngestionError(f"user {user!r}: negative label {label} in {origin}")
    try:
        x = np.asarray(xs, dtype=float)
    except ValueError as exc:
        raise IngestionError(f"user {user!r}: ragged feature rows in {origin}") from exc
    if x.size and x.ndim != 2:
        raise IngestionError(f"user {user!r}: ragged feature rows in {origin}")
    return x.reshape(len(xs), -1) if x.size else x.reshape(0, 0), np.asarray(ys, dtype=np.int64)


def load_leaf_json(
    train_path: str | Path,
    test_path: str | Path | None = None,
    *,
    test_fraction: float = 0.2,
    split_seed: int = 0,
    class_count: int | None = None,
) -> FederatedDataset:
    """Build a FederatedDataset from LEAF JSON files.

    With ``test_path`` the pre-split train/test files are used as is;
    otherwise each user's samples are split with a seeded shuffle at
    ``test_fraction``. Features are min-max rescaled to [0, 1] over the
    whole ingested dataset.
    """
    train = _read_leaf_file(train_path)
    test = _read_leaf_file(test_path) if test_path is not None else None

    users = list(train["users"])
    if len(set(users)) != len(users):
        raise IngestionError("duplicate users in train file")

    per_user: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = {}
    feature_dim: int | None = None
    for user in users:
        x, y = _extract_user(train, user, "train file")
        if test is not None:
            if user in test["user_data"]:
                tx, ty = _extract_user(test, user, "test file")
            else:
                tx, ty = np.zeros((0, x.shape[1] if x.size else 0)), np.zeros(0, np.int64)
        else:
            if not (0.0 < test_fraction < 1.0):
                raise IngestionError(f"test_fraction must be in (0, 1), got {test_fraction}")
            n = x.shape[0]
            rng = np.random.default_rng(derive_seed(split_seed, "leaf-split", user))
            order = rng.permutation(n)
            n_test = min(n - 1, max(1, int(round(n * test_fraction)))) if n >= 2 else 0
            test_idx, train_idx = order[:n_test], order[n_test:]
            x, y, tx, ty = x[train_idx], y[train_idx], x[test_idx], y[test_idx]
        if x.size:
            if feature_dim is None:
                feature_dim = x.shape[1]
            elif x.shape[1] != feature_dim:
                raise IngestionError(
                    f"user {user!r}: feature dimension {x.shape[1]} != {feature_dim}"
                )
        if tx.size and feature_dim is not None and tx.shape[1] != feature_dim:
            raise IngestionError(
                f"user {user!r}: test feature dimension {tx.shape[1]} != {feature_dim}"
            )
        per_user[user] = (x, y, tx, ty)

    if feature_dim is None:
        raise IngestionError("no samples in any user")

    all_labels = np.concatenate(
        [np.concatenate([y, ty]) for _, y, _, ty in per_user.values() if y.size or ty.size]
    )
    inferred = int(all_labels.max()) + 1 if all_labels.size else 0
    if class_count is None:
        class_count = max(inferred, 2)
    elif inferred > class_count:
        offender = next(
            u for u, (_, y, _, ty) in per_user.items()
            if (y.size and y.max() >= class_count) or (ty.size and ty.max() >= class_count)
        )
        raise IngestionError(f"user {offender!r}: label >= class_count {class_count}")

    # Min-max rescale to [0, 1] over every ingested feature value.
    stacked = np.concatenate(
        [arr.ravel() for x, _, tx, _ in per_user.values() for arr in (x, tx) if arr.size]
    )
    lo, hi = float(stacked.min()), float(stacked.max())
    scale = (hi - lo) or 1.0

    clients = []
    for user, (x, y, tx, ty) in per_user.items():
        tx = tx.reshape(tx.shape[0], feature_dim) if tx.size else np.zeros((0, feature_dim))
        x = x.reshape(x.shape[0], feature_dim) if x.size else np.zeros((0, feature_dim))
        clients.append(
            ClientDataset(str(user), (x - lo) / scale, y, (tx - lo) / scale, ty)
        )
    return make_federated_dataset(clients, class_count, feature_dim)


# ----------------------------------------------------------------------
# Synthetic non-IID generation
# ----------------------------------------------------------------------

def synth_noniid(
    class_count: int,
    feature_dim: int,
    client_count: int,
    samples_per_client_range: tuple[int, int],
    labels_per_client_range: tuple[int, int],
    test_fraction: float,
    seed: int,
    *,
    feature_noise: float = 1.0,
) -> FederatedDataset:
    """Generate label-skewed clients with Gaussian class-conditional features.

    Each client draws a label subset whose size falls in
    ``labels_per_client_range``; every assigned label is guaranteed at least
    one sample, so the realized label set equals the assignment. Fully
    deterministic given ``seed``.
    """
    lo_s, hi_s = samples_per_client_range
    lo_l, hi_l = labels_per_client_range
    if class_count < 2:
        raise ConfigurationError(f"class_count must be >= 2, got {class_count}")
    if feature_dim < 1 or client_count < 1:
        raise ConfigurationError("feature_dim and client_count must be >= 1")
    if not (1 <= lo_l <= hi_l <= class_count):
        raise ConfigurationError(
            f"labels_per_client_range {labels_per_client_range} not within [1, {class_count}]"
        )
    if not (2 <= lo_s <= hi_s):
        raise ConfigurationError(
            f"samples_per_client_range {samples_per_client_range} must satisfy 2 <= lo <= hi"
        )
    if lo_s < hi_l:
        raise ConfigurationError(
            "samples_per_client_range min must cover labels_per_client_range max"
        )
    if not (0.0 < test_fraction < 1.0):
        raise ConfigurationError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if feature_noise <= 0:
        raise ConfigurationError(f"feature_noise must be > 0, got {feature_noise}")

    rng = np.random.default_rng(seed)
    class_means = rng.normal(0.0, 1.0, (class_count, feature_dim))
    width = len(str(client_count - 1))

    clients = []
    for k in range(client_count):
        n_labels = int(rng.integers(lo_l, hi_l + 1))
        label_subset = np.sort(rng.choice(class_count, n_labels, replace=False))
        n = int(rng.integers(lo_s, hi_s + 1))
        extra = rng.choice(label_subset, n - n_labels) if n > n_labels else np.zeros(0, np.int64)
        labels = np.concatenate([label_subset, extra]).astype(np.int64)
        rng.shuffle(labels)
        features = class_means[labels] + rng.normal(0.0, feature_noise, (n, feature_dim))

        order = rng.permutation(n)
        n_test = min(n - 1, max(1, int(round(n * test_fraction))))
        test_idx, train_idx = order[:n_test], order[n_test:]
        clients.append(
            ClientDataset(
                f"client_{k:0{width}d}",
                features[train_idx],
                labels[train_idx],
                features[test_idx],
                labels[test_idx],
            )
        )
    return make_federated_dataset(clients, class_count, feature_dim)


# ----------------------------------------------------------------------
# Summaries
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ClientStats:
    client_id: str
    train_size: int
    test_size: int
    train_label_counts: dict[int, int]
    distinct_labels: int
    empty_test: bool


@dataclass(frozen=True)
class DatasetStats:
    clients: tuple[ClientStats, ...]
    total_train: int
    total_test: int
    class_count: int
    feature_dim: int


def dataset_stats(fd: FederatedDataset) -> DatasetStats:
    """Per-client sizes, training label histograms, and distinct-label counts.

    ``distinct_labels`` is the same count the label-diversity criterion uses.
    """
    stats = []
    for client in fd.clients:
        labels, counts = np.unique(client.train_y, return_counts=True)
        stats.append(
            ClientStats(
                client_id=client.client_id,
                train_size=client.train_size,
                test_size=client.test_size,
                train_label_counts={int(l): int(c) for l, c in zip(labels, counts)},
                distinct_labels=client.distinct_train_labels,
                empty_test=client.test_size == 0,
            )
        )
    return DatasetStats(
        clients=tuple(stats),
        total_train=sum(s.train_size for s in stats),
        total_test=sum(s.test_size for s in stats),
        class_count=fd.class_count,
        feature_dim=fd.feature_dim,
    )
