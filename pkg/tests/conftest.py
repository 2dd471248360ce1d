import json

import numpy as np
import pytest

from fedprio.data import ClientDataset, make_federated_dataset, synth_noniid
from fedprio.model import ModelSpec, TrainingConfig


@pytest.fixture
def tiny_spec() -> ModelSpec:
    return ModelSpec(input_dim=4, class_count=3, hidden_units=5)


@pytest.fixture
def fast_training() -> TrainingConfig:
    return TrainingConfig(learning_rate=0.05, local_epochs=2, batch_size=4, rng_seed=0)


@pytest.fixture
def small_dataset():
    """8 clients, 5 classes, 1-3 labels each; large enough to exercise
    cohort sampling yet cheap enough for round-trip tests."""
    return synth_noniid(
        class_count=5,
        feature_dim=4,
        client_count=8,
        samples_per_client_range=(12, 20),
        labels_per_client_range=(1, 3),
        test_fraction=0.25,
        seed=11,
    )


def make_clients(sizes, labels_per_client, feature_dim=3, class_count=6, seed=0):
    """Hand-built clients with exact train sizes and label sets."""
    rng = np.random.default_rng(seed)
    clients = []
    for i, (size, labels) in enumerate(zip(sizes, labels_per_client)):
        labels = list(labels)
        y = np.array([labels[j % len(labels)] for j in range(size)], dtype=np.int64)
        x = rng.normal(size=(size, feature_dim))
        tx = rng.normal(size=(2, feature_dim))
        ty = np.array([labels[0], labels[-1]], dtype=np.int64)
        clients.append(ClientDataset(f"c{i:02d}", x, y, tx, ty))
    return make_federated_dataset(clients, class_count, feature_dim)


@pytest.fixture
def client_factory():
    return make_clients


@pytest.fixture
def leaf_files(tmp_path):
    """Minimal LEAF-convention train/test JSON pair: 2 users, 3 and 5 samples."""
    train = {
        "users": ["u_a", "u_b"],
        "num_samples": [3, 5],
        "user_data": {
            "u_a": {"x": [[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]], "y": [0, 1, 0]},
            "u_b": {
                "x": [[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0], [5.0, 5.0]],
                "y": [1, 1, 0, 2, 2],
            },
        },
    }
    test = {
        "users": ["u_a", "u_b"],
        "num_samples": [1, 2],
        "user_data": {
            "u_a": {"x": [[0.5, 0.5]], "y": [1]},
            "u_b": {"x": [[1.5, 1.5], [2.5, 2.5]], "y": [0, 2]},
        },
    }
    train_path = tmp_path / "train.json"
    test_path = tmp_path / "test.json"
    train_path.write_text(json.dumps(train))
    test_path.write_text(json.dumps(test))
    return train_path, test_path
