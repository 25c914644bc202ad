"""Numeric kernels for the autoencoder: 2-D correlation, pooling, unpooling.

Tensors are plain float64 numpy arrays. Feature maps are laid out as
``(..., channels, height, width)`` so every kernel accepts an optional
leading batch axis. Kernel banks are laid out ``(c_in, n, n, c_out)``.

Both convolution kernels compute *cross-correlation* (no kernel flip)::

    out[k, i, j] = sum_{c, a, b} x[c, i + a, j + b] * K[c, a, b, k]

``conv2d_full`` is the same sum over the zero-padded input, so the valid
result is the central crop of the full one. The decoder obtains a true
convolution by correlating with ``flip180`` kernels, which makes it the
adjoint of the encoder.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "ShapeError",
    "NonFiniteError",
    "as_tensor",
    "conv2d_valid",
    "conv2d_full",
    "conv_valid_grads",
    "flip180",
    "transpose_kernels",
    "maxpool2x2",
    "maxpool2x2_backward",
    "unpool2x2",
    "unpool2x2_backward",
    "random_pool_indices",
    "leaky_relu",
    "leaky_relu_grad",
]

UNPOOL_MODES = ("random", "recorded")


class ShapeError(ValueError):
    """Raised when tensor extents are incompatible with an operation."""


class NonFiniteError(ValueError):
    """Raised when a tensor holds NaN or Inf."""


def as_tensor(x, min_ndim=1, max_ndim=4):
    arr = np.asarray(x, dtype=np.float64)
    if not min_ndim <= arr.ndim <= max_ndim:
        raise ShapeError(f"expected rank {min_ndim}..{max_ndim}, got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeError(f"empty tensor of shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("tensor contains NaN or Inf")
    return arr


def _check_kernels(x, kernels):
    kernels = as_tensor(kernels, 4, 4)
    c, n, n2, _ = kernels.shape
    if n != n2:
        raise ShapeError(f"kernels must be square, got {kernels.shape}")
    x = as_tensor(x, 3, 4)
    if x.shape[-3] != c:
        raise ShapeError(f"input has {x.shape[-3]} channels, kernels expect {c}")
    return x, kernels


def _correlate(x, kernels):
    n = kernels.shape[1]
    # windows: (..., c, H, W, n, n)
    win = sliding_window_view(x, (n, n), axis=(-2, -1))
    c_axis = x.ndim - 3
    out = np.tensordot(win, kernels, axes=([c_axis, -2, -1], [0, 1, 2]))
    # tensordot leaves (..., H, W, k); move k in front of the map axes
    return np.moveaxis(out, -1, -3)


def conv2d_valid(x, kernels):
    """Valid cross-correlation ``(c, h, w) x (c, n, n, k) -> (k, h-n+1, w-n+1)``."""
    x, kernels = _check_kernels(x, kernels)
    n = kernels.shape[1]
    if x.shape[-2] < n or x.shape[-1] < n:
        raise ShapeError(f"kernel extent {n} exceeds input extent {x.shape[-2:]}")
    return _correlate(x, kernels)


def conv2d_full(x, kernels):
    """Full cross-correlation ``(c, h, w) x (c, n, n, k) -> (k, h+n-1, w+n-1)``."""
    x, kernels = _check_kernels(x, kernels)
    p = kernels.shape[1] - 1
    pad = [(0, 0)] * (x.ndim - 2) + [(p, p), (p, p)]
    return _correlate(np.pad(x, pad), kernels)


def conv_valid_grads(x, kernels, dout):
    """Gradients of ``conv2d_valid(x, kernels)`` given the upstream ``dout``.

    Returns ``(dx, dkernels)``. A leading batch axis on ``x``/``dout`` is
    summed into ``dkernels``.
    """
    n = kernels.shape[1]
    win = sliding_window_view(x, (n, n), axis=(-2, -1))
    if x.ndim == 3:
        win, dout_b = win[None], dout[None]
    else:
        dout_b = dout
    # win: (N, c, H, W, a, b); dout: (N, k, H, W)
    dk = np.tensordot(win, dout_b, axes=([0, 2, 3], [0, 2, 3]))
    dx = conv2d_full(dout, transpose_kernels(flip180(kernels)))
    return dx, dk


def flip180(kernels):
    """Reverse every kernel along both spatial axes."""
    kernels = np.asarray(kernels, dtype=np.float64)
    if kernels.ndim != 4:
        raise ShapeError(f"expected rank-4 kernels, got shape {kernels.shape}")
    return kernels[:, ::-1, ::-1, :].copy()


def transpose_kernels(kernels):
    """Swap the input and output channel axes: ``(c, n, n, k) -> (k, n, n, c)``."""
    return np.ascontiguousarray(np.transpose(kernels, (3, 1, 2, 0)))


def _blocks(x):
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise ShapeError(f"2x2 pooling needs even extents, got {h}x{w}")
    lead = x.shape[:-2]
    # (..., h/2, w/2, 4) with block offsets in row-major order 0..3
    b = x.reshape(*lead, h // 2, 2, w // 2, 2)
    b = np.moveaxis(b, -3, -2)
    return b.reshape(*lead, h // 2, w // 2, 4)


def maxpool2x2(x):
    """2x2 stride-2 max pooling.

    Returns ``(pooled, indices)`` where ``indices`` holds the row-major
    offset (0..3) of the maximum inside each block. ``argmax`` returns the
    first maximum, so ties resolve to the smallest offset.
    """
    x = as_tensor(x, 2, 4)
    b = _blocks(x)
    idx = np.argmax(b, axis=-1)
    pooled = np.take_along_axis(b, idx[..., None], axis=-1)[..., 0]
    return pooled, idx.astype(np.int8)


def _scatter(values, indices):
    lead = values.shape[:-2]
    h2, w2 = values.shape[-2:]
    blocks = np.zeros(values.shape + (4,))
    np.put_along_axis(blocks, indices[..., None].astype(np.intp), values[..., None], axis=-1)
    out = blocks.reshape(*lead, h2, w2, 2, 2)
    out = np.moveaxis(out, -2, -3)
    return out.reshape(*lead, 2 * h2, 2 * w2)


def maxpool2x2_backward(dpooled, indices):
    """Route the pooled gradient back to the argmax entry of each block."""
    return _scatter(np.asarray(dpooled, dtype=np.float64), indices)


def random_pool_indices(shape, rng):
    """Uniform block offsets for random unpooling."""
    return rng.integers(0, 4, size=shape).astype(np.int8)


def unpool2x2(pooled, mode="recorded", indices=None, rng=None):
    """Place each pooled value at one location of a zero 2x2 block.

    ``recorded`` mode uses ``indices`` from ``maxpool2x2``; ``random`` mode
    draws the location uniformly from ``rng`` (a ``numpy.random.Generator``).
    """
    pooled = as_tensor(pooled, 2, 4)
    if mode == "recorded":
        if indices is None:
            raise ValueError("recorded unpooling requires pool indices")
        indices = np.asarray(indices)
        if indices.shape != pooled.shape:
            raise ShapeError(f"indices shape {indices.shape} != pooled shape {pooled.shape}")
        if indices.size and (indices.min() < 0 or indices.max() > 3):
            raise ValueError("pool indices must lie in 0..3")
    elif mode == "random":
        if rng is None:
            raise ValueError("random unpooling requires a seeded generator")
        indices = random_pool_indices(pooled.shape, rng)
    else:
        raise ValueError(f"unknown unpool mode {mode!r}; expected one of {UNPOOL_MODES}")
    return _scatter(pooled, indices)


def unpool2x2_backward(dout, indices):
    """Adjoint of unpooling: read the gradient at each routed location."""
    b = _blocks(np.asarray(dout, dtype=np.float64))
    return np.take_along_axis(b, np.asarray(indices, dtype=np.intp)[..., None], axis=-1)[..., 0]


def leaky_relu(x, slope=0.01):
    if not 0.0 < slope <= 1.0:
        raise ValueError(f"slope must lie in (0, 1], got {slope}")
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, x, slope * x)


def leaky_relu_grad(x, slope=0.01):
    return np.where(np.asarray(x) >= 0, 1.0, slope)
