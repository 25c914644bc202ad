"""Comparison pipelines: PCA on flattened prestack windows, and offset stacking."""

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .features import GatherWindow, standardize_array
from .tensor import ShapeError


@dataclass
class PcaModel:
    mean: np.ndarray  # (d,)
    eigenvalues: np.ndarray  # (d,) descending
    eigenvectors: np.ndarray  # (d, d) columns
    n_components: int

    @property
    def explained_variance_ratio(self):
        total = self.eigenvalues.sum()
        if total <= 0:
            return np.zeros_like(self.eigenvalues)
        return self.eigenvalues / total

    @property
    def components(self):
        """Retained eigenvectors as ``(d, r)`` columns."""
        return self.eigenvectors[:, :self.n_components]


def jacobi_eigh(A, tol=1e-13, max_sweeps=100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` unsorted, eigenvectors as columns.
    """
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    V = np.eye(n)
    scale = max(np.linalg.norm(A), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p], A[:, q] = c * ap - s * aq, s * ap + c * aq
                ap, aq = A[p, :].copy(), A[q, :].copy()
                A[p, :], A[q, :] = c * ap - s * aq, s * ap + c * aq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p], V[:, q] = c * vp - s * vq, s * vp + c * vq
    else:
        warnings.warn("Jacobi iteration did not converge", RuntimeWarning, stacklevel=2)
    return np.diag(A).copy(), V


def retained_dimension(eigenvalues, threshold):
    """Smallest ``r`` whose leading eigenvalues cover ``threshold`` of the total variance."""
    total = eigenvalues.sum()
    if total <= 0:
        return 1
    cum = np.cumsum(eigenvalues) / total
    # rounding slack so a ratio of exactly `threshold` counts as covered
    r = int(np.searchsorted(cum, threshold - 1e-12, side="left")) + 1
    return min(r, eigenvalues.size)


def pca_fit(X, variance_threshold=0.9, solver="eigh"):
    """Covariance PCA keeping the minimal number of components reaching ``variance_threshold``.

    ``solver`` is ``"eigh"`` (LAPACK) or ``"jacobi"`` (cyclic rotations,
    practical for a few hundred dimensions at most). Each eigenvector is
    signed so its largest-magnitude entry is positive.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError(f"PCA needs an (N >= 2, d) matrix, got shape {X.shape}")
    if not 0.0 < variance_threshold <= 1.0:
        raise ValueError("variance_threshold must lie in (0, 1]")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (X.shape[0] - 1)
    if solver == "eigh":
        vals, vecs = np.linalg.eigh(cov)
    elif solver == "jacobi":
        vals, vecs = jacobi_eigh(cov)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    order = np.argsort(vals, kind="stable")[::-1]
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order]
    lead = np.argmax(np.abs(vecs), axis=0)
    vecs = vecs * np.where(vecs[lead, np.arange(vecs.shape[1])] < 0, -1.0, 1.0)
    return PcaModel(mean, vals, vecs, retained_dimension(vals, variance_threshold))


def pca_transform(model, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.mean.size:
        raise ShapeError(f"expected (N, {model.mean.size}) data, got {X.shape}")
    return (X - model.mean) @ model.components


def pca_inverse_transform(model, Y):
    Y = np.asarray(Y, dtype=np.float64)
    return Y @ model.components.T + model.mean


class PCA(TransformerMixin, BaseEstimator):
    """Variance-threshold PCA; accepts windows of any rank and flattens them."""

    def __init__(self, variance_threshold=0.9, solver="eigh"):
        self.variance_threshold = variance_threshold
        self.solver = solver

    def _flat(self, X):
        X = np.asarray(X, dtype=np.float64)
        return check_array(X.reshape(X.shape[0], -1))

    def fit(self, X, y=None):
        self.model_ = pca_fit(self._flat(X), self.variance_threshold, self.solver)
        self.n_components_ = self.model_.n_components
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return pca_transform(self.model_, self._flat(X))


def stack_poststack(window):
    """Offset-averaged trace of a window, standardized to zero mean and unit variance."""
    samples = window.samples if isinstance(window, GatherWindow) else np.asarray(window)
    samples = np.asarray(samples, dtype=np.float64)
    block = samples.reshape(samples.shape[-2], samples.shape[-1])
    return standardize_array(block.mean(axis=1), axes=(0,))


class PoststackStacker(TransformerMixin, BaseEstimator):
    """Stack every window over offsets; ``(N, [1,] h, w) -> (N, h)``."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 4:
            if X.shape[1] != 1:
                raise ShapeError("poststack stacking expects single-channel windows")
            X = X[:, 0]
        if X.ndim != 3:
            raise ShapeError(f"expected (N, h, w) windows, got {X.shape}")
        return standardize_array(X.mean(axis=2), axes=(1,))
