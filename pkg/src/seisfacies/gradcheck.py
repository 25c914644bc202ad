"""Central finite-difference checks of the autoencoder gradients."""

from dataclasses import dataclass, replace

import numpy as np

from .cae import backward, corrupt, encode, init_layer, reconstruction_loss

PARAMS = (("dW", "filters"), ("db", "encoder_bias"), ("dc", "decoder_bias"))


def relative_error(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def numeric_gradient(layer, attr, x_clean, x_corrupt, routing, eps=1e-5, reduction="example"):
    base = getattr(layer, attr)
    grad = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        plus, minus = base.copy(), base.copy()
        plus[idx] += eps
        minus[idx] -= eps
        lp = reconstruction_loss(replace(layer, **{attr: plus}), x_clean, x_corrupt, routing,
                                 reduction=reduction)
        lm = reconstruction_loss(replace(layer, **{attr: minus}), x_clean, x_corrupt, routing,
                                 reduction=reduction)
        grad[idx] = (lp - lm) / (2 * eps)
    return grad


def check_layer(layer, x_clean, x_corrupt, routing, eps=1e-5, reduction="example"):
    """Largest relative error between analytic and numeric gradients, per parameter."""
    analytic = backward(layer, x_clean, x_corrupt, routing=routing, reduction=reduction)
    worst = {}
    for key, attr in PARAMS:
        numeric = numeric_gradient(layer, attr, x_clean, x_corrupt, routing, eps, reduction)
        errs = [relative_error(a, n) for a, n in zip(analytic[key].ravel(), numeric.ravel())]
        worst[key] = max(errs)
    return worst


@dataclass
class GradcheckCase:
    extent: tuple
    channels: int
    n_layers: int
    maps: int
    identity_decoder: bool
    routing: str
    errors: list  # one {param: max relative error} per layer

    @property
    def max_error(self):
        return max(max(e.values()) for e in self.errors)


# Input extents that pool exactly through one (6, 10) or two (10) 3x3 stages.
_EXTENTS = {1: (6, 8, 10, 12), 2: (10,)}


def random_suite(trials=20, seed=0, eps=1e-5):
    """Random small architectures and inputs, each gradient-checked layer by layer.

    Layer ``i > 0`` is checked on the encoded output of the layers below,
    which is exactly the data it sees during greedy training.
    """
    rng = np.random.default_rng(seed)
    cases = []
    for t in range(trials):
        n_layers = 1 + t % 2
        h = int(rng.choice(_EXTENTS[n_layers]))
        w = int(rng.choice(_EXTENTS[n_layers]))
        c = int(rng.integers(1, 3))
        maps = int(rng.integers(1, 5))
        batch = int(rng.integers(1, 3))
        routing_mode = "recorded" if t % 3 else "random"
        x = rng.normal(size=(batch, c, h, w))
        errors = []
        channels = c
        for li in range(n_layers):
            layer = init_layer(channels, 3, maps, rng.integers(2**32), slope=0.01,
                               identity_decoder=bool(rng.integers(2)))
            layer = replace(layer, encoder_bias=rng.normal(scale=0.1, size=maps),
                            decoder_bias=rng.normal(scale=0.1, size=channels))
            x_noisy = corrupt(x, 0.1, rng)
            if routing_mode == "random":
                pooled = encode(layer, x_noisy)[0].shape
                routing = rng.integers(0, 4, size=pooled).astype(np.int8)
            else:
                routing = "recorded"
            errors.append(check_layer(layer, x, x_noisy, routing, eps))
            x = encode(layer, x)[0]
            channels = maps
        cases.append(GradcheckCase((h, w), c, n_layers, maps, layer.identity_decoder,
                                   routing_mode, errors))
    return cases
