"""Straight-line reference implementations used as test oracles.

Everything here is written with explicit loops and no shared code with the
package so a bug cannot cancel itself out.
"""

import math

import numpy as np


def conv_valid_loop(x, k):
    c, h, w = x.shape
    _, n, _, m = k.shape
    out = np.zeros((m, h - n + 1, w - n + 1))
    for o in range(m):
        for i in range(h - n + 1):
            for j in range(w - n + 1):
                s = 0.0
                for ch in range(c):
                    for a in range(n):
                        for b in range(n):
                            s += x[ch, i + a, j + b] * k[ch, a, b, o]
                out[o, i, j] = s
    return out


def conv_full_loop(x, k):
    """Correlation over every partial overlap, with explicit bounds checks instead of padding."""
    c, h, w = x.shape
    _, n, _, m = k.shape
    out = np.zeros((m, h + n - 1, w + n - 1))
    for o in range(m):
        for i in range(h + n - 1):
            for j in range(w + n - 1):
                s = 0.0
                for ch in range(c):
                    for a in range(n):
                        for b in range(n):
                            r, q = i + a - (n - 1), j + b - (n - 1)
                            if 0 <= r < h and 0 <= q < w:
                                s += x[ch, r, q] * k[ch, a, b, o]
                out[o, i, j] = s
    return out


def maxpool_loop(x):
    c, h, w = x.shape
    vals = np.zeros((c, h // 2, w // 2))
    idx = np.zeros((c, h // 2, w // 2), dtype=int)
    for ch in range(c):
        for i in range(h // 2):
            for j in range(w // 2):
                best, arg = -math.inf, -1
                for off in range(4):
                    v = x[ch, 2 * i + off // 2, 2 * j + off % 2]
                    if v > best:
                        best, arg = v, off
                vals[ch, i, j], idx[ch, i, j] = best, arg
    return vals, idx


def unpool_loop(pooled, idx):
    c, h, w = pooled.shape
    out = np.zeros((c, 2 * h, 2 * w))
    for ch in range(c):
        for i in range(h):
            for j in range(w):
                off = int(idx[ch, i, j])
                out[ch, 2 * i + off // 2, 2 * j + off % 2] = pooled[ch, i, j]
    return out


def leaky(v, slope):
    return v if v >= 0 else slope * v


def encode_loop(x, W, b, slope):
    conv = conv_valid_loop(x, W)
    for o in range(conv.shape[0]):
        conv[o] += b[o]
    pooled, idx = maxpool_loop(conv)
    out = np.vectorize(lambda v: leaky(v, slope))(pooled)
    return out, idx


def decode_loop(y, idx, W, c_bias, slope, identity):
    """Sum over maps of full convolutions of the unpooled map with the flipped kernel."""
    u = unpool_loop(y, idx)
    m, hu, wu = u.shape
    c, n = W.shape[0], W.shape[1]
    out = np.zeros((c, hu + n - 1, wu + n - 1))
    for ch in range(c):
        for o in range(m):
            # true 2-D convolution of u[o] with W[ch, :, :, o]
            for i in range(hu + n - 1):
                for j in range(wu + n - 1):
                    s = 0.0
                    for a in range(n):
                        for bb in range(n):
                            r, q = i - a, j - bb
                            if 0 <= r < hu and 0 <= q < wu:
                                s += u[o, r, q] * W[ch, a, bb, o]
                    out[ch, i, j] += s
        out[ch] += c_bias[ch]
    if identity:
        return out
    return np.vectorize(lambda v: leaky(v, slope))(out)


def mse_loop(x, z):
    """Per-example convention on a batch ``(N, ...)``."""
    total = 0.0
    for xi, zi in zip(x, z):
        for a, b in zip(np.ravel(xi), np.ravel(zi)):
            total += (a - b) ** 2
    return total / (2 * len(x))


def centroid_loop(X, U, m):
    N, d = X.shape
    c = U.shape[1]
    C = np.zeros((c, d))
    for j in range(c):
        num = [0.0] * d
        den = 0.0
        for i in range(N):
            w = U[i, j] ** m
            den += w
            for t in range(d):
                num[t] += w * X[i, t]
        C[j] = [v / den for v in num]
    return C


def projection_loop(X, mean, V):
    N, d = X.shape
    r = V.shape[1]
    out = np.zeros((N, r))
    for i in range(N):
        for k in range(r):
            out[i, k] = sum((X[i, t] - mean[t]) * V[t, k] for t in range(d))
    return out


def poststack_loop(block):
    h, w = block.shape
    trace = [sum(block[i, o] for o in range(w)) / w for i in range(h)]
    mu = sum(trace) / h
    sd = math.sqrt(sum((v - mu) ** 2 for v in trace) / h)
    return np.array([(v - mu) / sd for v in trace])


def kmeans_brute_force(X, c=2):
    """Optimal hard-partition objective by enumerating every labeling."""
    import itertools

    N = len(X)
    best = math.inf
    for labels in itertools.product(range(c), repeat=N):
        if labels[0] != 0 or len(set(labels)) < c:
            continue
        lab = np.array(labels)
        J = 0.0
        for j in range(c):
            pts = X[lab == j]
            J += float(((pts - pts.mean(axis=0)) ** 2).sum())
        best = min(best, J)
    return best
