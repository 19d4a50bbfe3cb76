import numpy as np
import pytest

from osld.discovery import KMeans, kmeans, select_k, silhouette
from osld.errors import OsldError


def blobs(rng, centers, n_per, sigma):
    centers = np.asarray(centers, dtype=np.float64)
    X = np.vstack(
        [c + sigma * rng.normal(size=(n_per, centers.shape[1])) for c in centers]
    )
    y = np.repeat(np.arange(len(centers)), n_per)
    return X, y


def purity(labels, truth):
    total = 0
    for c in np.unique(labels):
        members = truth[labels == c]
        total += np.bincount(members).max()
    return total / len(truth)


def test_two_point_masses_exact_fit():
    X = np.array([[0.0, 0.0]] * 4 + [[10.0, 0.0]] * 4)
    result = kmeans(X, 2, seed=0)
    assert result.inertia == pytest.approx(0.0, abs=1e-18)
    got = {tuple(c) for c in np.round(result.centroids, 6)}
    assert got == {(0.0, 0.0), (10.0, 0.0)}


def test_k1_is_mean_and_total_scatter():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(30, 4))
    result = kmeans(X, 1, seed=0)
    assert np.allclose(result.centroids[0], X.mean(axis=0), atol=1e-6)
    expected = ((X - X.mean(axis=0)) ** 2).sum()
    assert result.inertia == pytest.approx(expected, rel=1e-9)


def test_three_blobs_recovered_pure():
    rng = np.random.default_rng(2)
    X, truth = blobs(rng, np.eye(3), n_per=40, sigma=0.05)
    result = kmeans(X, 3, seed=0)
    assert purity(result.labels, truth) == 1.0


def test_inertia_monotone_nonincreasing():
    rng = np.random.default_rng(3)
    for trial in range(30):
        X = rng.normal(size=(rng.integers(10, 60), rng.integers(2, 6)))
        k = int(rng.integers(1, 6))
        if len(X) < k:
            continue
        result = kmeans(X, k, seed=trial)
        hist = np.array(result.inertia_history)
        assert np.all(np.diff(hist) <= 1e-9)


def test_kmeans_deterministic_and_nonempty():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(50, 3))
    a = kmeans(X, 4, seed=7)
    b = kmeans(X, 4, seed=7)
    assert np.array_equal(a.labels, b.labels)
    assert a.inertia == b.inertia
    assert all((a.labels == j).sum() > 0 for j in range(4))


def test_n_less_than_k_rejected():
    with pytest.raises(OsldError):
        kmeans(np.zeros((2, 2)), 3, seed=0)


def test_empty_cluster_repair_on_duplicates():
    # all points identical: k-means++ puts every centroid on the same spot
    X = np.zeros((6, 2))
    result = kmeans(X, 3, seed=0)
    assert all((result.labels == j).sum() > 0 for j in range(3))
    assert result.inertia == pytest.approx(0.0)


def test_estimator_interface():
    est = KMeans(n_clusters=2, seed=0)
    assert est.get_params()["n_clusters"] == 2
    X = np.array([[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]])
    est.fit(X)
    assert est.inertia_ is not None
    assert sorted(np.unique(est.predict(X))) == [0, 1]


# --- silhouette -------------------------------------------------------


def test_silhouette_duplicated_far_groups_is_one():
    X = np.array([[0.0, 0.0]] * 3 + [[9.0, 9.0]] * 3)
    labels = np.array([0, 0, 0, 1, 1, 1])
    assert silhouette(X, labels) == pytest.approx(1.0)


def test_silhouette_identical_points_is_zero():
    X = np.zeros((6, 2))
    labels = np.array([0, 0, 0, 1, 1, 1])
    assert silhouette(X, labels) == pytest.approx(0.0)


def test_silhouette_hand_case_four_points_on_line():
    # points {0, 1, 9, 10}, clusters {0,1} and {9,10}:
    #   s(0) = (9.5-1)/9.5, s(1) = (8.5-1)/8.5, symmetric for 9, 10
    X = np.array([[0.0], [1.0], [9.0], [10.0]])
    X = np.hstack([X, np.zeros((4, 1))])
    labels = np.array([0, 0, 1, 1])
    expected = (8.5 / 9.5 + 7.5 / 8.5) / 2
    assert silhouette(X, labels) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.8885448916408669, abs=1e-12)


def test_silhouette_range_random():
    rng = np.random.default_rng(5)
    for trial in range(30):
        n = int(rng.integers(4, 40))
        X = rng.normal(size=(n, 3))
        labels = rng.integers(0, 3, size=n)
        if np.unique(labels).size < 2:
            continue
        s = silhouette(X, labels)
        assert -1.0 <= s <= 1.0


def test_silhouette_singleton_contributes_zero():
    X = np.array([[0.0, 0.0], [0.0, 0.1], [9.0, 9.0]])
    labels = np.array([0, 0, 1])
    # two near points score ~1; singleton adds 0 -> mean ~ 2/3
    s = silhouette(X, labels)
    assert s == pytest.approx(2.0 / 3.0, abs=0.02)


def test_silhouette_requires_two_clusters():
    with pytest.raises(OsldError):
        silhouette(np.zeros((3, 2)), np.zeros(3, dtype=int))


def test_silhouette_subsample_cap_deterministic():
    rng = np.random.default_rng(6)
    X, y = blobs(rng, np.eye(2) * 5, n_per=60, sigma=0.1)
    a = silhouette(X, y, sample_cap=50, seed=3)
    b = silhouette(X, y, sample_cap=50, seed=3)
    assert a == b
    assert a > 0.8


# --- select_k ---------------------------------------------------------


def test_select_k_three_blobs():
    rng = np.random.default_rng(7)
    X, _ = blobs(rng, np.eye(3) * 2, n_per=30, sigma=0.1)
    result = select_k(X, seed=0)
    assert result.k == 3
    assert set(result.scores) == set(range(2, 9))


def test_select_k_truncates_small_samples():
    X = np.array([[0.0, 0.0], [5.0, 5.0], [10.0, 0.0]])
    result = select_k(X, kmin=2, kmax=8, seed=0)
    assert result.k in (2, 3)
    assert max(result.scores) <= 3


def test_select_k_tie_returns_smaller_k():
    # identical points: silhouette is 0 for every candidate, so ties all
    # the way down and the smallest k wins
    X = np.zeros((10, 2))
    result = select_k(X, seed=1)
    assert result.k == 2


def test_select_k_needs_two_points():
    with pytest.raises(OsldError):
        select_k(np.zeros((1, 2)), seed=0)


def test_select_k_deterministic():
    rng = np.random.default_rng(8)
    X, _ = blobs(rng, np.eye(4) * 3, n_per=12, sigma=0.2)
    a = select_k(X, seed=5)
    b = select_k(X, seed=5)
    assert a.k == b.k
    assert np.array_equal(a.assignment.labels, b.assignment.labels)
