import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import centroid_loop, kmeans_brute_force
from seisfacies.clustering import (
    ClusterConfig,
    ClusterResult,
    FuzzyCMeans,
    KMeans,
    fuzzy_cmeans,
    fuzzy_memberships,
    harden,
    kmeans,
    objective,
    update_centroids,
)


def test_two_pairs():
    X = np.array([[0, 0], [0, 1], [10, 10], [10, 11]], dtype=float)
    res = kmeans(X, ClusterConfig(2, seed=0))
    assert res.labels[0] == res.labels[1] != res.labels[2] == res.labels[3]
    got = sorted(map(tuple, res.centroids))
    assert got == [(0.0, 0.5), (10.0, 10.5)]


def test_n_equals_c_gives_zero_objective(rng):
    X = rng.normal(size=(4, 3))
    res = kmeans(X, ClusterConfig(4, seed=1))
    assert res.objective == pytest.approx(0.0, abs=1e-24)
    assert len(set(res.labels)) == 4


@pytest.mark.parametrize("seed", range(10))
def test_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(int(rng.integers(3, 9)), 2))
    res = kmeans(X, ClusterConfig(2, seed=seed))
    assert res.objective == pytest.approx(kmeans_brute_force(X), rel=1e-9, abs=1e-12)


def test_objective_history_non_increasing(rng):
    X = np.vstack([rng.normal(loc, 1.0, size=(40, 3)) for loc in (0, 4, 8)])
    res = kmeans(X, ClusterConfig(3, seed=0, n_init=1))
    assert np.all(np.diff(res.objective_history) <= 1e-12 * res.objective_history[0])


def test_kmeans_errors():
    with pytest.raises(ValueError):
        kmeans(np.zeros((1, 2)), ClusterConfig(2))
    with pytest.raises(ValueError):
        kmeans(np.array([[0.0, np.nan], [1, 1]]), ClusterConfig(2))
    with pytest.raises(ValueError):
        ClusterConfig(1)
    with pytest.raises(ValueError):
        ClusterConfig(2, m=1.0, mode="fuzzy")


def test_duplicate_points_repair_empty_cluster():
    X = np.array([[0.0, 0.0]] * 5 + [[1.0, 1.0]])
    res = kmeans(X, ClusterConfig(3, seed=0, n_init=1))
    assert set(res.labels) == {0, 1, 2}


def test_seeded_runs_are_identical(rng):
    X = rng.normal(size=(60, 4))
    a, b = kmeans(X, ClusterConfig(4, seed=7)), kmeans(X, ClusterConfig(4, seed=7))
    np.testing.assert_array_equal(a.centroids, b.centroids)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_relabeling_leaves_objective_unchanged(rng):
    X = rng.normal(size=(30, 2))
    res = kmeans(X, ClusterConfig(3, seed=0))
    perm = np.array([2, 0, 1])
    U = res.memberships[:, perm]
    C = res.centroids[perm]
    assert objective(X, C, U) == pytest.approx(res.objective, rel=1e-12)


def test_centroid_update_matches_loop(rng):
    X = rng.normal(size=(12, 3))
    U = rng.random((12, 4))
    U /= U.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(update_centroids(X, U, 2.0), centroid_loop(X, U, 2.0), atol=1e-12)


def test_equal_memberships_give_global_mean(rng):
    X = rng.normal(size=(10, 2))
    C = update_centroids(X, np.full((10, 3), 1 / 3), 2.0)
    np.testing.assert_allclose(C, np.tile(X.mean(axis=0), (3, 1)), atol=1e-12)


def test_equidistant_point_splits_membership():
    U = fuzzy_memberships(np.array([[0.0, 0.0]]), np.array([[-1.0, 0.0], [1.0, 0.0]]), 2.0)
    np.testing.assert_allclose(U, [[0.5, 0.5]])


def test_point_on_centroid_gets_full_membership():
    U = fuzzy_memberships(np.array([[1.0, 0.0]]), np.array([[-1.0, 0.0], [1.0, 0.0]]), 2.0)
    np.testing.assert_array_equal(U, [[0.0, 1.0]])


def test_large_fuzzifier_tends_to_uniform(rng):
    X = np.vstack([rng.normal(0, 0.1, (10, 2)), rng.normal(5, 0.1, (10, 2))])
    spread = []
    for m in (2.0, 4.0, 10.0, 100.0):
        res = fuzzy_cmeans(X, ClusterConfig(2, m=m, seed=0, mode="fuzzy"))
        spread.append(np.abs(res.memberships - 0.5).max())
    assert all(a > b for a, b in zip(spread, spread[1:]))
    assert spread[-1] < 0.05


def test_fuzzy_rows_sum_to_one_and_objective_descends(rng):
    X = np.vstack([rng.normal(loc, 1.0, size=(30, 2)) for loc in (0, 5)])
    res = fuzzy_cmeans(X, ClusterConfig(2, m=2.0, seed=1, mode="fuzzy"))
    np.testing.assert_allclose(res.memberships.sum(axis=1), 1.0, atol=1e-10)
    assert res.memberships.min() >= 0 and res.memberships.max() <= 1
    assert np.all(np.diff(res.objective_history) <= 1e-12 * res.objective_history[0])


def test_harden_rules():
    assert list(harden(np.eye(3))) == [0, 1, 2]
    assert list(harden(np.array([[0.5, 0.5]]))) == [0]


def test_harden_of_kmeans_is_its_labels(rng):
    res = kmeans(rng.normal(size=(20, 2)), ClusterConfig(3, seed=0))
    np.testing.assert_array_equal(harden(res), res.labels)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 4))
def test_hard_memberships_are_one_hot(seed, c):
    X = np.random.default_rng(seed).normal(size=(15, 3))
    res = kmeans(X, ClusterConfig(c, seed=seed, n_init=2))
    assert np.all(res.memberships.sum(axis=1) == 1)
    assert set(np.unique(res.memberships)) <= {0.0, 1.0}


def test_estimators_follow_sklearn_api(rng):
    X = np.vstack([rng.normal(loc, 0.3, size=(20, 2)) for loc in (0, 3)])
    km = KMeans(2).fit(X)
    np.testing.assert_array_equal(km.predict(X), km.labels_)
    assert km.transform(X).shape == (40, 2)
    assert km.get_params()["n_clusters"] == 2
    fc = FuzzyCMeans(2).fit(X)
    np.testing.assert_array_equal(fc.predict(X), fc.labels_)
