import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import brute_ari, brute_nmi, set_partitions
from dkgccl.errors import DegenerateProbeError
from dkgccl.evaluator import (
    ProbeParams,
    accuracy,
    ari,
    evaluate_classification,
    evaluate_clustering,
    kmeans,
    nmi,
    per_class_split,
    ratio_split,
    train_probe,
)
from dkgccl.graph import LabelVector, SplitSpec


def blobs(seed=0, n=40, sep=50.0):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, 2))
    b = rng.normal(size=(n, 2)) + sep
    return np.vstack([a, b]), np.repeat([0, 1], n)


# -- probe ---------------------------------------------------------------------------


def test_probe_separable_1d():
    z = np.array([[-3.0], [-2.0], [-1.0], [1.0], [2.0], [3.0]])
    y = np.array([0, 0, 0, 1, 1, 1])
    probe = train_probe(z, y, np.arange(6))
    assert accuracy(probe, z, y, np.arange(6)) == 1.0


def test_probe_chance_on_random_labels():
    accs = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        z = rng.normal(size=(400, 5))
        y = rng.permutation(np.repeat([0, 1], 200))
        split = ratio_split(400, 0.5, 0.0, seed=seed)
        accs.append(accuracy(train_probe(z, y, split), z, y, split.test))
    assert 0.35 <= np.mean(accs) <= 0.65


def test_probe_reordered_train_set_same_accuracy():
    z, y = blobs(sep=1.5)
    split = ratio_split(len(y), 0.5, 0.0, seed=0)
    base = accuracy(train_probe(z, y, split), z, y, split.test)
    shuffled = SplitSpec(np.random.default_rng(1).permutation(split.train), split.valid, split.test)
    assert accuracy(train_probe(z, y, shuffled), z, y, split.test) == base


def test_probe_single_class_rejected():
    z = np.ones((4, 2))
    with pytest.raises(DegenerateProbeError):
        train_probe(z, np.array([1, 1, 0, 0]), np.array([0, 1]))
    with pytest.raises(DegenerateProbeError):
        train_probe(z, np.array([1, 1, 0, 0]), np.array([], dtype=int))


def test_probe_rotation_invariance():
    rng = np.random.default_rng(0)
    y = np.repeat(np.arange(3), 100)
    z = rng.normal(size=(300, 6)) + 1.2 * np.eye(6)[y * 2]
    q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    split = per_class_split(y, 20, 30, 200, seed=0)
    a = accuracy(train_probe(z, y, split), z, y, split.test)
    b = accuracy(train_probe(z @ q, y, split), z @ q, y, split.test)
    assert abs(a - b) <= 0.005


def test_probe_standardizes_on_train_only():
    z = np.arange(10.0)[:, None]
    probe = train_probe(z, np.array([0, 1] * 5), np.array([0, 1, 2, 3]), epochs=1)
    assert probe.mean[0] == 1.5 and probe.scale[0] == pytest.approx(np.std([0, 1, 2, 3]))


def test_accuracy_counts_and_ties():
    probe = ProbeParams(np.eye(2), np.zeros(2), np.zeros(2), np.ones(2))
    z = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    assert accuracy(probe, z, np.array([0, 1, 0, 1]), np.arange(4)) == 1.0
    assert accuracy(probe, z, np.array([1, 0, 1, 0]), np.arange(4)) == 0.0
    assert accuracy(probe, z, np.array([0, 1, 0, 0]), np.arange(4)) == 0.75
    tie = np.array([[1.0, 1.0]])
    assert accuracy(probe, tie, np.array([0]), [0]) == 1.0
    with pytest.raises(ValueError):
        accuracy(probe, z, np.zeros(4, dtype=int), [])


def test_splits():
    y = LabelVector(np.repeat(np.arange(7), 100))
    s = per_class_split(y, 20, 500, 100, seed=3)
    s.validate(700)
    assert s.train.size == 140 and s.valid.size == 500 and s.test.size == 60
    assert np.all(np.bincount(y.labels[s.train]) == 20)
    r = ratio_split(100, 0.1, 0.1, seed=0)
    r.validate(100)
    assert (r.train.size, r.valid.size, r.test.size) == (10, 10, 80)


def test_evaluate_classification_on_blobs():
    z, y = blobs(sep=10)
    labels = LabelVector(y)
    mean, std, accs = evaluate_classification(z, labels, [per_class_split(y, 5, 10, 40, s) for s in range(3)])
    assert mean == 1.0 and std == 0.0 and len(accs) == 3


# -- k-means ------------------------------------------------------------------------


def test_kmeans_far_blobs():
    z, y = blobs()
    res = kmeans(z, 2, seed=0)
    assert ari(y, res.assignment) == 1.0
    within = sum(((z[y == c] - z[y == c].mean(0)) ** 2).sum() for c in (0, 1))
    assert res.inertia == pytest.approx(within, rel=1e-12)


def test_kmeans_every_point_own_cluster():
    z = np.random.default_rng(0).normal(size=(12, 3))
    res = kmeans(z, 12, seed=0)
    assert res.inertia == 0.0
    assert np.unique(res.assignment).size == 12


def test_kmeans_duplicated_dataset_same_inertia_per_point():
    z, _ = blobs(seed=1, n=30, sep=20)
    a = kmeans(z, 2, seed=0)
    b = kmeans(np.vstack([z, z]), 2, seed=0)
    assert b.inertia / (2 * len(z)) == pytest.approx(a.inertia / len(z), rel=1e-9)


def test_kmeans_deterministic_and_guarded():
    z = np.random.default_rng(0).normal(size=(50, 4))
    a, b = kmeans(z, 4, seed=3), kmeans(z, 4, seed=3)
    assert np.array_equal(a.assignment, b.assignment) and a.inertia == b.inertia
    with pytest.raises(ValueError):
        kmeans(z, 51)


def test_evaluate_clustering_blobs():
    z, y = blobs()
    assert evaluate_clustering(z, LabelVector(y)) == (1.0, 1.0)


# -- NMI / ARI ---------------------------------------------------------------------------


def test_identical_and_relabelled():
    a = np.array([0, 0, 1, 1, 2, 2, 2])
    assert nmi(a, a) == 1.0 and ari(a, a) == 1.0
    b = np.array([5, 5, 9, 9, 1, 1, 1])
    assert nmi(a, b) == 1.0 and ari(a, b) == 1.0


def test_single_cluster_vs_balanced_pair():
    a = np.zeros(10, dtype=int)
    b = np.repeat([0, 1], 5)
    assert ari(a, b) == 0.0
    assert nmi(a, b) == 0.0


def test_length_mismatch():
    with pytest.raises(ValueError):
        nmi([0, 1], [0])


@given(st.lists(st.integers(0, 3), min_size=2, max_size=30), st.data())
def test_metric_ranges_symmetry_and_label_invariance(a, data):
    b = data.draw(st.lists(st.integers(0, 4), min_size=len(a), max_size=len(a)))
    a, b = np.array(a), np.array(b)
    assert 0.0 <= nmi(a, b) <= 1.0 + 1e-12
    assert -1.0 <= ari(a, b) <= 1.0
    assert nmi(a, b) == nmi(b, a)
    assert ari(a, b) == ari(b, a)
    relabel = np.array([7, 3, 11, 0])
    assert ari(relabel[a], b) == ari(a, b)
    assert abs(nmi(relabel[a], b) - nmi(a, b)) <= 1e-15


def test_exhaustive_against_brute_force_five_elements():
    parts = list(set_partitions(5))
    assert len(parts) == 52
    for a in parts:
        for b in parts:
            assert nmi(a, b) == brute_nmi(a, b)
            assert ari(a, b) == brute_ari(a, b)
