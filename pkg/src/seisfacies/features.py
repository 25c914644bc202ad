"""Window extraction along a horizon, window QC, standardization, and feature assembly."""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .tensor import ShapeError, as_tensor

ALIGNMENTS = ("centered", "below")


class WindowRangeError(ValueError):
    """The requested window does not fit inside the trace."""


@dataclass
class GatherWindow:
    inline: int
    crossline: int
    samples: np.ndarray  # (1, h, w): time samples x offset traces
    dt_ms: float
    horizon_time_ms: float

    @property
    def shape(self):
        return self.samples.shape


@dataclass
class SurveyGrid:
    """Dense grid of equally shaped windows, stored as ``(inlines, crosslines, h, w)``."""

    data: np.ndarray
    dt_ms: float
    window_ms: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 4:
            raise ShapeError(f"survey data must be (inlines, crosslines, h, w), got {self.data.shape}")

    @property
    def n_inlines(self):
        return self.data.shape[0]

    @property
    def n_crosslines(self):
        return self.data.shape[1]

    @property
    def n_offsets(self):
        return self.data.shape[3]

    @property
    def n_samples(self):
        return self.data.shape[2]

    def keys(self):
        """(inline, crossline) pairs in inline-major order."""
        return [(i, j) for i in range(self.n_inlines) for j in range(self.n_crosslines)]

    def window(self, i, j):
        return GatherWindow(i, j, self.data[i, j][None].copy(), self.dt_ms, self.window_ms / 2)

    def windows(self):
        return [self.window(i, j) for i, j in self.keys()]

    def stack(self):
        """All windows as a ``(N, 1, h, w)`` batch in key order."""
        return self.data.reshape(-1, 1, self.n_samples, self.n_offsets)


def window_samples(window_ms, dt_ms):
    h = window_ms / dt_ms
    if abs(h - round(h)) > 1e-9 or round(h) < 1:
        raise ValueError(f"window {window_ms} ms is not a whole number of {dt_ms} ms samples")
    return int(round(h))


def cut_window(gather, horizon_time_ms, window_ms=48.0, dt_ms=2.0, alignment="centered",
               inline=0, crossline=0, start_time_ms=0.0):
    """Cut an ``h x w`` block from a ``(n_samples, n_offsets)`` gather.

    ``below`` starts the window at the horizon sample; ``centered`` puts the
    horizon sample at row ``h // 2``. An odd trace count loses its last trace.
    """
    gather = as_tensor(gather, 2, 2)
    if alignment not in ALIGNMENTS:
        raise ValueError(f"unknown alignment {alignment!r}; expected one of {ALIGNMENTS}")
    h = window_samples(window_ms, dt_ms)
    pick = int(round((horizon_time_ms - start_time_ms) / dt_ms))
    start = pick if alignment == "below" else pick - h // 2
    if start < 0 or start + h > gather.shape[0]:
        raise WindowRangeError(
            f"window [{start}, {start + h}) outside trace of {gather.shape[0]} samples")
    block = gather[start:start + h]
    if block.shape[1] % 2:
        block = block[:, :-1]
    return GatherWindow(inline, crossline, block[None].copy(), dt_ms, horizon_time_ms)


@dataclass
class WindowReport:
    flagged_traces: list

    @property
    def ok(self):
        return not self.flagged_traces


def _has_extrema(trace):
    s = np.asarray(trace)
    if s.size < 3:
        return False
    mid, left, right = s[1:-1], s[:-2], s[2:]
    crest = (mid > 0) & (mid >= left) & (mid >= right) & ((mid > left) | (mid > right))
    trough = (mid < 0) & (mid <= left) & (mid <= right) & ((mid < left) | (mid < right))
    return bool(crest.any() and trough.any())


def validate_window(window):
    """Report traces without both a positive crest and a negative trough."""
    samples = window.samples if isinstance(window, GatherWindow) else np.asarray(window)
    block = samples.reshape(samples.shape[-2], samples.shape[-1])
    flagged = [o for o in range(block.shape[1]) if not _has_extrema(block[:, o])]
    return WindowReport(flagged)


def standardize_array(X, axes=None):
    """Zero mean, unit variance per window (over the last three axes by default)."""
    X = np.asarray(X, dtype=np.float64)
    if axes is None:
        axes = tuple(range(max(X.ndim - 3, 0), X.ndim))
    mean = X.mean(axis=axes, keepdims=True)
    std = X.std(axis=axes, keepdims=True)
    flat = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    if np.any(flat):
        warnings.warn("constant window standardized to zeros", RuntimeWarning, stacklevel=2)
    return np.where(flat, 0.0, (X - mean) / np.where(flat, 1.0, std))


def standardize(window):
    return GatherWindow(window.inline, window.crossline, standardize_array(window.samples),
                        window.dt_ms, window.horizon_time_ms)


class WindowStandardizer(TransformerMixin, BaseEstimator):
    """Stateless per-window standardization usable inside a Pipeline."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return standardize_array(X)


# BLAS may sum differently for different batch sizes, so chunk boundaries are
# fixed and independent of the thread count.
CHUNK = 64


def _chunks(n, size=CHUNK):
    return [(a, min(a + size, n)) for a in range(0, n, size)]


def assemble_feature_matrix(grid, model, threads=1):
    """Feature matrix with one row per window and the matching key list.

    ``model`` is a fitted :class:`~seisfacies.cae.ConvAutoencoder` or a bare
    :class:`~seisfacies.cae.CaeModel`. Rows follow ``grid.keys()``; chunking
    over ``threads`` never changes the result.
    """
    from .cae import CaeModel, ConvAutoencoder

    if isinstance(model, CaeModel):
        model = ConvAutoencoder.from_model(model, (1, grid.n_samples, grid.n_offsets))
    X = grid.stack()
    keys = grid.keys()
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(lambda ab: model.transform(X[ab[0]:ab[1]]), _chunks(len(X))))
    return np.vstack(parts), keys
