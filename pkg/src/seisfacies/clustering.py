"""Hard k-means (Lloyd) and fuzzy c-means on feature vectors.

Both minimize ``J_m = sum_i sum_j u_ij**m * ||x_i - c_j||**2``; hard k-means
is the one-hot limit. Centroids are membership-weighted means
``c_j = sum_i u_ij**m x_i / sum_i u_ij**m``.
"""

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

logger = logging.getLogger(__name__)

MODES = ("hard", "fuzzy")


@dataclass
class ClusterConfig:
    c: int
    m: float = 2.0
    max_iter: int = 300
    tol: float = 1e-6
    seed: int = 0
    mode: str = "hard"
    n_init: int = 10

    def __post_init__(self):
        if self.c < 2:
            raise ValueError("need at least 2 clusters")
        if self.mode not in MODES:
            raise ValueError(f"unknown cluster mode {self.mode!r}")
        if self.mode == "fuzzy" and self.m <= 1:
            raise ValueError("fuzzifier m must exceed 1")
        if self.tol <= 0 or self.max_iter < 1 or self.n_init < 1:
            raise ValueError("tol must be > 0, max_iter and n_init >= 1")


@dataclass
class ClusterResult:
    centroids: np.ndarray  # (c, d)
    memberships: np.ndarray  # (N, c)
    labels: np.ndarray  # (N,)
    objective_history: list

    @property
    def objective(self):
        return self.objective_history[-1]


def _check_data(X, c):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected an (N, d) matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains NaN or Inf")
    if X.shape[0] < c:
        raise ValueError(f"{X.shape[0]} points cannot fill {c} clusters")
    return X


def sq_distances(X, C):
    """``(N, c)`` squared Euclidean distances with a fixed summation order."""
    diff = X[:, None, :] - C[None, :, :]
    return np.einsum("ncd,ncd->nc", diff, diff)


def update_centroids(X, U, m=1.0):
    """Weighted means ``sum_i u_ij^m x_i / sum_i u_ij^m`` for every cluster."""
    W = np.asarray(U, dtype=np.float64) ** m
    return (W.T @ X) / W.sum(axis=0)[:, None]


def objective(X, C, U, m=1.0):
    return float(np.sum((np.asarray(U) ** m) * sq_distances(X, C)))


def kmeans_plusplus(X, c, rng):
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = sq_distances(X, np.array(centers))[:, 0]
    for _ in range(1, c):
        total = d2.sum()
        if total <= 0:
            # every point already coincides with a center
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(X[idx])
        d2 = np.minimum(d2, sq_distances(X, X[idx][None])[:, 0])
    return np.array(centers)


def _one_hot(labels, c):
    U = np.zeros((labels.size, c))
    U[np.arange(labels.size), labels] = 1.0
    return U


def _repair_empty(X, C, labels, c):
    """Move each empty cluster onto the point farthest from its own centroid."""
    for j in range(c):
        if np.any(labels == j):
            continue
        d = np.sum((X - C[labels]) ** 2, axis=1)
        counts = np.bincount(labels, minlength=c)
        d[counts[labels] <= 1] = -1.0  # never empty another cluster
        i = int(np.argmax(d))
        labels[i] = j
        C[j] = X[i]
    return labels


def _lloyd(X, c, cfg, rng):
    C = kmeans_plusplus(X, c, rng)
    labels = None
    history = []
    for it in range(cfg.max_iter):
        new = np.argmin(sq_distances(X, C), axis=1)
        new = _repair_empty(X, C, new, c)
        C = update_centroids(X, _one_hot(new, c))
        J = objective(X, C, _one_hot(new, c))
        if history and J > history[-1] * (1 + 1e-12) + 1e-12:
            raise AssertionError(f"k-means objective increased at iteration {it}")
        changed = labels is None or np.any(new != labels)
        improvement = (history[-1] - J) / max(abs(history[-1]), 1e-300) if history else np.inf
        labels = new
        history.append(J)
        if not changed or improvement < cfg.tol:
            break
    return ClusterResult(C, _one_hot(labels, c), labels, history)


def kmeans(X, cfg):
    """Lloyd's algorithm from k-means++ seeds; best objective over ``cfg.n_init`` restarts."""
    X = _check_data(X, cfg.c)
    rng = np.random.default_rng(cfg.seed)
    best = None
    for _ in range(cfg.n_init):
        res = _lloyd(X, cfg.c, cfg, rng)
        if best is None or res.objective < best.objective:
            best = res
    return best


def fuzzy_memberships(X, C, m):
    """``u_ij = 1 / sum_l (d_ij / d_il)^(2/(m-1))``; a point on a centroid belongs to it fully."""
    d2 = sq_distances(X, C)
    U = np.empty_like(d2)
    zero = d2 <= 0.0
    hit = zero.any(axis=1)
    if np.any(~hit):
        p = 1.0 / (m - 1.0)
        ratio = (d2[~hit, :, None] / d2[~hit, None, :]) ** p
        U[~hit] = 1.0 / ratio.sum(axis=2)
    if np.any(hit):
        U[hit] = zero[hit] / zero[hit].sum(axis=1, keepdims=True)
    return U


def fuzzy_cmeans(X, cfg):
    """Alternate membership and centroid updates until memberships settle."""
    X = _check_data(X, cfg.c)
    rng = np.random.default_rng(cfg.seed)
    C = kmeans_plusplus(X, cfg.c, rng)
    # one hard mean step moves the seeds off the data points; a seed left on a
    # point would pin that point's membership at 1 and stall large-m runs
    labels = np.argmin(sq_distances(X, C), axis=1)
    C = update_centroids(X, _one_hot(_repair_empty(X, C, labels, cfg.c), cfg.c))
    U = fuzzy_memberships(X, C, cfg.m)
    history = []
    for _ in range(cfg.max_iter):
        C = update_centroids(X, U, cfg.m)
        U_new = fuzzy_memberships(X, C, cfg.m)
        history.append(objective(X, C, U_new, cfg.m))
        delta = np.max(np.abs(U_new - U))
        U = U_new
        if delta < cfg.tol:
            break
    return ClusterResult(C, U, harden(U), history)


def harden(result):
    """Arg-max membership per row, ties to the lowest cluster index."""
    U = result.memberships if isinstance(result, ClusterResult) else np.asarray(result)
    return np.argmax(U, axis=1)


def cluster(X, cfg):
    return kmeans(X, cfg) if cfg.mode == "hard" else fuzzy_cmeans(X, cfg)


class KMeans(ClusterMixin, TransformerMixin, BaseEstimator):
    """Hard k-means with k-means++ seeding and farthest-point empty-cluster repair.

    ``transform`` returns squared distances to the centroids.
    """

    def __init__(self, n_clusters=5, max_iter=300, tol=1e-6, n_init=10, random_state=0):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.tol = tol
        self.n_init = n_init
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        cfg = ClusterConfig(self.n_clusters, 2.0, self.max_iter, self.tol,
                            self.random_state, "hard", self.n_init)
        res = kmeans(X, cfg)
        self.cluster_centers_ = res.centroids
        self.labels_ = res.labels
        self.inertia_ = res.objective
        self.objective_history_ = res.objective_history
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X, dtype=np.float64)
        return np.argmin(sq_distances(X, self.cluster_centers_), axis=1)

    def transform(self, X):
        check_is_fitted(self, "cluster_centers_")
        return sq_distances(check_array(X, dtype=np.float64), self.cluster_centers_)


class FuzzyCMeans(ClusterMixin, BaseEstimator):
    """Fuzzy c-means; ``labels_`` are the hardened memberships."""

    def __init__(self, n_clusters=5, m=2.0, max_iter=300, tol=1e-6, random_state=0):
        self.n_clusters = n_clusters
        self.m = m
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        cfg = ClusterConfig(self.n_clusters, self.m, self.max_iter, self.tol,
                            self.random_state, "fuzzy")
        res = fuzzy_cmeans(X, cfg)
        self.cluster_centers_ = res.centroids
        self.membership_ = res.memberships
        self.labels_ = res.labels
        self.objective_history_ = res.objective_history
        return self

    def predict_membership(self, X):
        check_is_fitted(self, "cluster_centers_")
        return fuzzy_memberships(check_array(X, dtype=np.float64), self.cluster_centers_, self.m)

    def predict(self, X):
        return harden(self.predict_membership(X))
