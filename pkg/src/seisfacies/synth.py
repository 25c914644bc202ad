"""Labeled synthetic prestack survey and map scoring.

Each map cell holds one gather: a Ricker wavelet per offset trace whose
amplitude follows a two-term AVO trend ``A * (1 + G * sin^2(theta))``.
Classes that share wavelet and polarity but differ in ``G`` produce stacked
traces with the same shape, so only the prestack windows can tell them apart.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .features import SurveyGrid, window_samples
from .tensor import ShapeError


@dataclass(frozen=True)
class ClassParams:
    amplitude: float
    gradient: float
    frequency: float  # Hz


@dataclass(frozen=True)
class Disc:
    center: tuple
    radius: float
    label: int


@dataclass(frozen=True)
class Region:
    """Axis-aligned block ``[i0, i1) x [j0, j1)``."""

    i0: int
    i1: int
    j0: int
    j1: int
    label: int


@dataclass
class ModelLayout:
    n_inlines: int
    n_crosslines: int
    classes: list
    background: int = 0
    regions: list = field(default_factory=list)
    discs: list = field(default_factory=list)
    river: list = field(default_factory=list)  # polyline vertices (inline, crossline)
    river_width: float = 2.0
    river_label: int = -1
    noise_sigma: float = 0.0
    max_angle_deg: float = 40.0
    seed: int = 0

    def validate(self):
        n = len(self.classes)
        if n < 1:
            raise ValueError("layout needs at least one class")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        labels = {self.background} | {r.label for r in self.regions} | {d.label for d in self.discs}
        if self.river:
            labels.add(self.river_label)
        if not labels <= set(range(n)):
            raise ValueError(f"labels {sorted(labels)} outside 0..{n - 1}")
        for r in self.regions:
            if not (0 <= r.i0 < r.i1 <= self.n_inlines and 0 <= r.j0 < r.j1 <= self.n_crosslines):
                raise ValueError(f"region {r} outside the grid")
        for d in self.discs:
            ci, cj = d.center
            if not (0 <= ci < self.n_inlines and 0 <= cj < self.n_crosslines) or d.radius <= 0:
                raise ValueError(f"disc {d} outside the grid")
        for i, j in self.river:
            if not (0 <= i < self.n_inlines and 0 <= j < self.n_crosslines):
                raise ValueError(f"river vertex {(i, j)} outside the grid")


# Pairs (0, 1) and (2, 3) share wavelet and polarity and differ only in AVO
# gradient; the river reverses polarity.
DEFAULT_CLASSES = [
    ClassParams(1.0, 0.0, 30.0),
    ClassParams(1.0, -1.2, 30.0),
    ClassParams(1.0, 0.0, 18.0),
    ClassParams(1.0, 1.5, 18.0),
    ClassParams(-1.0, 0.8, 24.0),
]


def default_layout(n_inlines=40, n_crosslines=40, snr=10.0, seed=0, dt_ms=2.0,
                   window_ms=48.0, offsets=22):
    """Three tank regions, seven small caves and one winding river."""
    ni, nx = n_inlines, n_crosslines
    if min(ni, nx) < 5:
        raise ValueError(f"default layout needs at least 5x5 cells, got {ni}x{nx}")
    r_max = min(4.0, (min(ni, nx) - 1) / 2.0)
    third = nx // 3
    regions = [Region(0, ni, third, 2 * third, 1), Region(0, ni, 2 * third, nx, 2)]
    rng = np.random.default_rng(seed)
    discs = []
    for k in range(7):
        radius = float(rng.uniform(2.0, r_max))
        ci = float(rng.uniform(radius, ni - 1 - radius))
        cj = float(rng.uniform(radius, nx - 1 - radius))
        discs.append(Disc((ci, cj), radius, 3))
    river = [(0.0, 0.3 * nx), (0.3 * ni, 0.55 * nx), (0.6 * ni, 0.35 * nx), (ni - 1.0, 0.7 * nx)]
    layout = ModelLayout(ni, nx, list(DEFAULT_CLASSES), 0, regions, discs, river, 2.0, 4,
                         0.0, 40.0, seed)
    layout.noise_sigma = noise_for_snr(layout, snr, dt_ms, window_ms, offsets)
    return layout


def ricker(frequency, t):
    """Zero-phase Ricker wavelet of peak ``frequency`` (Hz) at times ``t`` (s)."""
    a = (np.pi * frequency * np.asarray(t, dtype=np.float64)) ** 2
    return (1.0 - 2.0 * a) * np.exp(-a)


def offset_angles(offsets, max_angle_deg):
    if offsets == 1:
        return np.zeros(1)
    return np.deg2rad(np.linspace(0.0, max_angle_deg, offsets))


def class_gather(params, n_samples, offsets, dt_ms, max_angle_deg=40.0):
    """Noise-free ``(n_samples, offsets)`` gather for one class."""
    t = (np.arange(n_samples) - n_samples // 2) * dt_ms * 1e-3
    wavelet = ricker(params.frequency, t)
    scale = params.amplitude * (1.0 + params.gradient * np.sin(offset_angles(offsets, max_angle_deg)) ** 2)
    return wavelet[:, None] * scale[None, :]


def noise_for_snr(layout, snr, dt_ms=2.0, window_ms=48.0, offsets=22):
    """Noise sigma giving the requested RMS signal-to-noise ratio, averaged over classes."""
    if snr <= 0 or not np.isfinite(snr):
        return 0.0
    h = window_samples(window_ms, dt_ms)
    rms = [np.sqrt(np.mean(class_gather(p, h, offsets, dt_ms, layout.max_angle_deg) ** 2))
           for p in layout.classes]
    return float(np.mean(rms) / snr)


def _segment_distance(pi, pj, a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    d = b - a
    denom = float(d @ d)
    t = np.zeros_like(pi) if denom == 0 else np.clip(((pi - a[0]) * d[0] + (pj - a[1]) * d[1]) / denom, 0, 1)
    return np.hypot(pi - (a[0] + t * d[0]), pj - (a[1] + t * d[1]))


def label_grid(layout):
    """Class of every cell: river over caves over regions over background."""
    layout.validate()
    ii, jj = np.meshgrid(np.arange(layout.n_inlines), np.arange(layout.n_crosslines), indexing="ij")
    labels = np.full((layout.n_inlines, layout.n_crosslines), layout.background, dtype=np.int64)
    for r in layout.regions:
        labels[r.i0:r.i1, r.j0:r.j1] = r.label
    for d in layout.discs:
        ci, cj = d.center
        labels[(ii - ci) ** 2 + (jj - cj) ** 2 <= d.radius ** 2] = d.label
    if len(layout.river) >= 2:
        dist = np.full(labels.shape, np.inf)
        for a, b in zip(layout.river[:-1], layout.river[1:]):
            dist = np.minimum(dist, _segment_distance(ii, jj, a, b))
        labels[dist <= layout.river_width / 2.0] = layout.river_label
    return labels


def generate_survey(layout, dt_ms=2.0, window_ms=48.0, offsets=22):
    """Synthetic windows for every cell and the aligned label grid.

    Noise for cell ``(i, j)`` comes from a generator seeded with
    ``(seed, i, j)``, so any cell can be regenerated independently.
    """
    labels = label_grid(layout)
    h = window_samples(window_ms, dt_ms)
    templates = np.stack([class_gather(p, h, offsets, dt_ms, layout.max_angle_deg)
                          for p in layout.classes])
    data = templates[labels].copy()
    if layout.noise_sigma > 0:
        for i in range(layout.n_inlines):
            for j in range(layout.n_crosslines):
                rng = np.random.default_rng([layout.seed, i, j])
                data[i, j] += rng.normal(0.0, layout.noise_sigma, size=(h, offsets))
    return SurveyGrid(data, dt_ms, window_ms), labels


def score_map(labels_pred, labels_true):
    """Accuracy after the best one-to-one relabeling of predicted clusters.

    Returns ``(accuracy, recall)`` where ``recall`` maps each true class to
    the fraction of its cells recovered under that relabeling.
    """
    pred = np.asarray(labels_pred)
    true = np.asarray(labels_true)
    if pred.shape != true.shape:
        raise ShapeError(f"label grids differ in shape: {pred.shape} vs {true.shape}")
    p_vals, p_idx = np.unique(pred.ravel(), return_inverse=True)
    t_vals, t_idx = np.unique(true.ravel(), return_inverse=True)
    counts = np.zeros((len(p_vals), len(t_vals)), dtype=np.int64)
    np.add.at(counts, (p_idx, t_idx), 1)
    rows, cols = linear_sum_assignment(counts, maximize=True)
    accuracy = counts[rows, cols].sum() / true.size
    matched = dict(zip(cols, rows))
    recall = {}
    for c, t in enumerate(t_vals):
        hits = counts[matched[c], c] if c in matched else 0
        recall[int(t)] = hits / counts[:, c].sum()
    return float(accuracy), recall
