import json

import numpy as np
import pytest

from fedprio.data import dataset_stats, load_leaf_json, synth_noniid
from fedprio.errors import ConfigurationError, IngestionError


def test_leaf_pair_roundtrip(leaf_files):
    train_path, test_path = leaf_files
    fd = load_leaf_json(train_path, test_path)
    assert fd.client_ids == ("u_a", "u_b")
    assert [c.train_size for c in fd.clients] == [3, 5]
    assert [c.test_size for c in fd.clients] == [1, 2]
    assert fd.feature_dim == 2
    assert fd.class_count == 3


def test_leaf_ingestion_totals_match_declared(leaf_files):
    train_path, test_path = leaf_files
    fd = load_leaf_json(train_path, test_path)
    declared = json.loads(train_path.read_text())["num_samples"]
    assert sum(c.train_size for c in fd.clients) == sum(declared)


def test_leaf_features_rescaled_to_unit_interval(leaf_files):
    train_path, test_path = leaf_files
    fd = load_leaf_json(train_path, test_path)
    everything = np.concatenate(
        [np.concatenate([c.train_x.ravel(), c.test_x.ravel()]) for c in fd.clients]
    )
    assert everything.min() == 0.0
    assert everything.max() == 1.0


def test_leaf_mismatched_lengths_names_user(tmp_path):
    bad = {
        "users": ["good", "broken"],
        "num_samples": [1, 2],
        "user_data": {
            "good": {"x": [[1.0]], "y": [0]},
            "broken": {"x": [[1.0], [2.0]], "y": [0]},
        },
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    with pytest.raises(IngestionError, match="broken"):
        load_leaf_json(path, test_fraction=0.5)


def test_leaf_declared_count_mismatch_names_user(tmp_path):
    bad = {
        "users": ["u1"],
        "num_samples": [4],
        "user_data": {"u1": {"x": [[1.0], [2.0]], "y": [0, 1]}},
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    with pytest.raises(IngestionError, match="u1"):
        load_leaf_json(path, test_fraction=0.5)


def test_leaf_inconsistent_feature_dim_names_user(tmp_path):
    bad = {
        "users": ["u1", "u2"],
        "num_samples": [1, 1],
        "user_data": {
            "u1": {"x": [[1.0, 2.0]], "y": [0]},
            "u2": {"x": [[1.0, 2.0, 3.0]], "y": [0]},
        },
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    with pytest.raises(IngestionError, match="u2"):
        load_leaf_json(path, None, test_fraction=0.5)


def test_leaf_unknown_label_rejected(tmp_path):
    bad = {
        "users": ["u1"],
        "num_samples": [2],
        "user_data": {"u1": {"x": [[1.0], [2.0]], "y": [0, "a"]}},
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    with pytest.raises(IngestionError, match="u1"):
        load_leaf_json(path, test_fraction=0.5)


def test_leaf_malformed_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(IngestionError, match="malformed"):
        load_leaf_json(path)


def test_leaf_split_rule_is_deterministic_and_disjoint(leaf_files):
    train_path, _ = leaf_files
    fd1 = load_leaf_json(train_path, test_fraction=0.4, split_seed=3)
    fd2 = load_leaf_json(train_path, test_fraction=0.4, split_seed=3)
    for a, b in zip(fd1.clients, fd2.clients):
        assert np.array_equal(a.train_x, b.train_x)
        assert np.array_equal(a.test_x, b.test_x)
    for client in fd1.clients:
        # Train and test partition the user's samples.
        total = client.train_size + client.test_size
        declared = {"u_a": 3, "u_b": 5}[client.client_id]
        assert total == declared
        assert client.train_size >= 1
        merged = np.concatenate([client.train_x, client.test_x])
        assert np.unique(merged, axis=0).shape[0] == merged.shape[0]


def test_synth_full_label_range_forced():
    fd = synth_noniid(10, 4, 6, (15, 20), (10, 10), 0.2, seed=0)
    for client in fd.clients:
        combined = np.concatenate([client.train_y, client.test_y])
        assert np.unique(combined).size == 10


def test_synth_single_label_clients():
    fd = synth_noniid(6, 4, 5, (10, 12), (1, 1), 0.2, seed=0)
    for client in fd.clients:
        combined = np.concatenate([client.train_y, client.test_y])
        assert np.unique(combined).size == 1


def test_synth_deterministic():
    a = synth_noniid(5, 3, 7, (8, 14), (1, 3), 0.25, seed=42)
    b = synth_noniid(5, 3, 7, (8, 14), (1, 3), 0.25, seed=42)
    for ca, cb in zip(a.clients, b.clients):
        assert ca.client_id == cb.client_id
        assert np.array_equal(ca.train_x, cb.train_x)
        assert np.array_equal(ca.train_y, cb.train_y)
        assert np.array_equal(ca.test_x, cb.test_x)
    c = synth_noniid(5, 3, 7, (8, 14), (1, 3), 0.25, seed=43)
    assert not np.array_equal(a.clients[0].train_x, c.clients[0].train_x)


def test_synth_label_fidelity_and_sizes():
    fd = synth_noniid(8, 3, 12, (10, 18), (2, 4), 0.3, seed=5)
    for client in fd.clients:
        combined = np.concatenate([client.train_y, client.test_y])
        distinct = np.unique(combined).size
        assert 2 <= distinct <= 4
        assert 10 <= combined.size <= 18
        assert client.train_size >= 1 and client.test_size >= 1


def test_synth_rejects_infeasible_ranges():
    with pytest.raises(ConfigurationError):
        synth_noniid(5, 3, 4, (10, 12), (0, 2), 0.2, seed=0)
    with pytest.raises(ConfigurationError):
        synth_noniid(5, 3, 4, (10, 12), (2, 6), 0.2, seed=0)  # labels > classes
    with pytest.raises(ConfigurationError):
        synth_noniid(5, 3, 4, (2, 12), (3, 3), 0.2, seed=0)  # samples < labels
    with pytest.raises(ConfigurationError):
        synth_noniid(5, 3, 4, (10, 12), (1, 2), 1.2, seed=0)


def test_dataset_stats_counts_and_delta(small_dataset):
    stats = dataset_stats(small_dataset)
    assert len(stats.clients) == len(small_dataset.clients)
    for stat, client in zip(stats.clients, small_dataset.clients):
        assert stat.train_size == client.train_size
        assert stat.distinct_labels == client.distinct_train_labels
        assert sum(stat.train_label_counts.values()) == stat.train_size
        assert len(stat.train_label_counts) == stat.distinct_labels
        assert stat.empty_test == (client.test_size == 0)
    assert stats.total_train == sum(c.train_size for c in small_dataset.clients)


def test_dataset_stats_simple_histogram():
    from fedprio.data import ClientDataset, make_federated_dataset

    client = ClientDataset(
        "only",
        train_x=np.zeros((3, 2)),
        train_y=np.array([1, 1, 2]),
        test_x=np.zeros((0, 2)),
        test_y=np.zeros(0, dtype=np.int64),
    )
    fd = make_federated_dataset([client], class_count=3, feature_dim=2)
    stats = dataset_stats(fd)
    assert stats.clients[0].train_size == 3
    assert stats.clients[0].distinct_labels == 2
    assert stats.clients[0].train_label_counts == {1: 2, 2: 1}
    assert stats.clients[0].empty_test is True


def test_synth_histogram_matches_generator_bookkeeping():
    # Re-derive the generator's label plan with the same stream and compare
    # against the realized per-client histograms.
    class_count, feature_dim, client_count = 6, 3, 9
    lo_s, hi_s, lo_l, hi_l = 10, 15, 2, 3
    seed = 99
    fd = synth_noniid(class_count, feature_dim, client_count,
                      (lo_s, hi_s), (lo_l, hi_l), 0.25, seed=seed)

    rng = np.random.default_rng(seed)
    rng.normal(0.0, 1.0, (class_count, feature_dim))  # class means
    for client in fd.clients:
        n_labels = int(rng.integers(lo_l, hi_l + 1))
        label_subset = np.sort(rng.choice(class_count, n_labels, replace=False))
        n = int(rng.integers(lo_s, hi_s + 1))
        extra = rng.choice(label_subset, n - n_labels) if n > n_labels else np.zeros(0, np.int64)
        labels = np.concatenate([label_subset, extra]).astype(np.int64)
        rng.shuffle(labels)
        rng.normal(0.0, 1.0, (n, feature_dim))  # features
        rng.permutation(n)  # split order

        realized = np.sort(np.concatenate([client.train_y, client.test_y]))
        assert np.array_equal(realized, np.sort(labels))
        assert np.array_equal(np.unique(realized), label_subset)
