"""Convolutional denoising autoencoder with hand-written backpropagation.

One layer encodes with valid correlation, bias, 2x2 max pooling and a
leaky ReLU, and decodes with unpooling followed by a full correlation
against the flipped, channel-transposed filters (tied weights) plus one bias
per reconstructed channel. Stacks are trained greedily, one layer at a time.
"""

import logging
import struct
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .tensor import (
    NonFiniteError,
    ShapeError,
    UNPOOL_MODES,
    as_tensor,
    conv2d_full,
    conv2d_valid,
    conv_valid_grads,
    flip180,
    leaky_relu,
    leaky_relu_grad,
    maxpool2x2,
    maxpool2x2_backward,
    random_pool_indices,
    transpose_kernels,
    unpool2x2,
    unpool2x2_backward,
)

logger = logging.getLogger(__name__)

DECODER_ACTIVATIONS = ("auto", "identity", "leaky")
LOSS_REDUCTIONS = ("example", "entry")


class TrainingError(RuntimeError):
    """Raised when SGD diverges or the training set is unusable."""


class CheckpointError(ValueError):
    """A checkpoint blob does not follow the documented layout."""


@dataclass
class CaeLayer:
    filters: np.ndarray  # (c, n, n, k)
    encoder_bias: np.ndarray  # (k,)
    decoder_bias: np.ndarray  # (c,)
    slope: float = 0.01
    pooled: bool = True
    identity_decoder: bool = False

    def __post_init__(self):
        self.filters = np.asarray(self.filters, dtype=np.float64)
        self.encoder_bias = np.asarray(self.encoder_bias, dtype=np.float64)
        self.decoder_bias = np.asarray(self.decoder_bias, dtype=np.float64)
        if self.filters.ndim != 4 or self.filters.shape[1] != self.filters.shape[2]:
            raise ShapeError(f"filters must be (c, n, n, k), got {self.filters.shape}")
        c, n, _, k = self.filters.shape
        if n % 2 == 0:
            raise ShapeError(f"filter size must be odd, got {n}")
        if self.encoder_bias.shape != (k,):
            raise ShapeError(f"encoder bias must have {k} entries")
        if self.decoder_bias.shape != (c,):
            raise ShapeError(f"decoder bias must have {c} entries")

    @property
    def in_channels(self):
        return self.filters.shape[0]

    @property
    def size(self):
        return self.filters.shape[1]

    @property
    def n_maps(self):
        return self.filters.shape[3]

    def output_extent(self, h, w):
        """Spatial extent of the encoded maps, or ShapeError if pooling would not divide evenly."""
        n = self.size
        h, w = h - n + 1, w - n + 1
        if h < 1 or w < 1:
            raise ShapeError(f"input too small for {n}x{n} filters")
        if self.pooled:
            if h % 2 or w % 2:
                raise ShapeError(f"convolution output {h}x{w} cannot be pooled 2x2 exactly")
            h, w = h // 2, w // 2
        return h, w


@dataclass
class CaeModel:
    layers: list
    input_shape: tuple  # (c, h, w)
    unpool_mode: str = "random"

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)
        if self.unpool_mode not in UNPOOL_MODES:
            raise ValueError(f"unknown unpool mode {self.unpool_mode!r}")
        self.layer_shapes()

    def layer_shapes(self):
        """Input shape of every layer followed by the bottleneck shape."""
        c, h, w = self.input_shape
        shapes = [(c, h, w)]
        for i, layer in enumerate(self.layers):
            if layer.in_channels != c:
                raise ShapeError(f"layer {i} expects {layer.in_channels} channels, gets {c}")
            h, w = layer.output_extent(h, w)
            c = layer.n_maps
            shapes.append((c, h, w))
        return shapes


@dataclass
class TrainConfig:
    learning_rate: float = 0.02
    epochs: int = 10
    corruption_prob: float = 0.05
    batch_size: int = 1
    seed: int = 0
    slope: float = 0.01
    loss_reduction: str = "entry"

    def __post_init__(self):
        if self.loss_reduction not in LOSS_REDUCTIONS:
            raise ValueError(f"unknown loss reduction {self.loss_reduction!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.corruption_prob < 1.0:
            raise ValueError("corruption_prob must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


def fan_limit(c, n, k):
    return np.sqrt(6.0 / (c * n * n + k * n * n))


def init_layer(c, n, k, seed, slope=0.01, pooled=True, identity_decoder=False):
    """Layer with uniform fan-in/fan-out filters and zero biases."""
    if min(c, n, k) < 1:
        raise ValueError("extents must be positive")
    rng = np.random.default_rng(seed)
    s = fan_limit(c, n, k)
    return CaeLayer(
        filters=rng.uniform(-s, s, size=(c, n, n, k)),
        encoder_bias=np.zeros(k),
        decoder_bias=np.zeros(c),
        slope=slope,
        pooled=pooled,
        identity_decoder=identity_decoder,
    )


def _check_input(layer, x):
    x = as_tensor(x, 3, 4)
    if x.shape[-3] != layer.in_channels:
        raise ShapeError(f"input has {x.shape[-3]} channels, layer expects {layer.in_channels}")
    layer.output_extent(*x.shape[-2:])
    return x


def _bias(v, ndim):
    return v.reshape((-1,) + (1,) * (ndim - 1)) if ndim == 3 else v.reshape(1, -1, 1, 1)


def _forward(layer, x, routing="recorded", rng=None):
    """Forward pass keeping every intermediate needed by ``_backward``."""
    x = _check_input(layer, x)
    a = conv2d_valid(x, layer.filters) + _bias(layer.encoder_bias, x.ndim)
    if layer.pooled:
        p, pool_idx = maxpool2x2(a)
    else:
        p, pool_idx = a, None
    y = leaky_relu(p, layer.slope)
    if layer.pooled:
        if isinstance(routing, str):
            if routing == "recorded":
                route = pool_idx
            elif routing == "random":
                if rng is None:
                    raise ValueError("random unpooling requires a seeded generator")
                route = random_pool_indices(y.shape, rng)
            else:
                raise ValueError(f"unknown unpool mode {routing!r}")
        else:
            route = np.asarray(routing)
        u = unpool2x2(y, "recorded", route)
    else:
        route, u = None, y
    kt = transpose_kernels(flip180(layer.filters))
    d = conv2d_full(u, kt) + _bias(layer.decoder_bias, x.ndim)
    z = d if layer.identity_decoder else leaky_relu(d, layer.slope)
    return dict(x=x, a=a, p=p, pool_idx=pool_idx, y=y, route=route, u=u, d=d, z=z, kt=kt)


def encode(layer, x):
    """Latent maps ``leaky_relu(maxpool(conv_valid(x, W) + b))`` and the pool indices."""
    x = _check_input(layer, x)
    a = conv2d_valid(x, layer.filters) + _bias(layer.encoder_bias, x.ndim)
    if layer.pooled:
        p, idx = maxpool2x2(a)
    else:
        p, idx = a, None
    return leaky_relu(p, layer.slope), idx


def decode(layer, features, indices=None, mode="recorded", rng=None):
    """Reconstruct the layer input from its latent maps.

    Every map is unpooled, correlated in full with the flipped filters that
    connect it to each input channel, and the per-map results are summed
    with the channel bias before the decoder activation.
    """
    y = as_tensor(features, 3, 4)
    if y.shape[-3] != layer.n_maps:
        raise ShapeError(f"features have {y.shape[-3]} maps, layer has {layer.n_maps}")
    if layer.pooled:
        if mode == "random":
            if rng is None:
                raise ValueError("random unpooling requires a seeded generator")
            indices = random_pool_indices(y.shape, rng)
        u = unpool2x2(y, "recorded", indices)
    else:
        u = y
    d = conv2d_full(u, transpose_kernels(flip180(layer.filters))) + _bias(layer.decoder_bias, y.ndim)
    return d if layer.identity_decoder else leaky_relu(d, layer.slope)


def corrupt(x, p, rng):
    """Zero each entry independently with probability ``p``."""
    if not 0.0 <= p < 1.0:
        raise ValueError("corruption probability must lie in [0, 1)")
    x = np.asarray(x, dtype=np.float64)
    if p == 0.0:
        return x.copy()
    keep = rng.random(x.shape) >= p
    return x * keep


def _loss_count(x, reduction):
    if reduction == "entry":
        return x.size
    if reduction == "example":
        return x.shape[0] if x.ndim == 4 else 1
    raise ValueError(f"unknown loss reduction {reduction!r}")


def mse_loss(x, z, reduction="example"):
    """Half squared reconstruction error, ``1/(2n) * sum_i ||x_i - z_i||^2``.

    With ``reduction="example"`` ``n`` is the number of examples (a rank-3
    tensor is one example, a rank-4 tensor a batch on axis 0). With
    ``"entry"`` ``n`` is the number of scalar entries, which keeps the
    gradient scale independent of window size.
    """
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape != z.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {z.shape}")
    r = x - z
    return float(np.sum(r * r) / (2.0 * _loss_count(x, reduction)))


def _backward(layer, cache, x_clean, reduction):
    x, z = cache["x"], cache["z"]
    dz = (z - x_clean) / _loss_count(x, reduction)
    dd = dz if layer.identity_decoder else dz * leaky_relu_grad(cache["d"], layer.slope)
    sum_axes = (0, 2, 3) if dd.ndim == 4 else (1, 2)
    dc = dd.sum(axis=sum_axes)

    # decoder: d = conv_valid(pad(u), kt); its kernel gradient maps back onto W
    p = layer.size - 1
    pad = [(0, 0)] * (cache["u"].ndim - 2) + [(p, p), (p, p)]
    du_pad, dkt = conv_valid_grads(np.pad(cache["u"], pad), cache["kt"], dd)
    du = du_pad[..., p:du_pad.shape[-2] - p, p:du_pad.shape[-1] - p]
    dw_dec = flip180(transpose_kernels(dkt))

    dy = unpool2x2_backward(du, cache["route"]) if layer.pooled else du
    dp = dy * leaky_relu_grad(cache["p"], layer.slope)
    da = maxpool2x2_backward(dp, cache["pool_idx"]) if layer.pooled else dp
    db = da.sum(axis=sum_axes)
    _, dw_enc = conv_valid_grads(x, layer.filters, da)
    return {"dW": dw_enc + dw_dec, "db": db, "dc": dc}


def loss_and_grads(layer, x_clean, x_corrupt, routing="recorded", rng=None, reduction="example"):
    """Loss of reconstructing ``x_clean`` from ``x_corrupt`` and its parameter gradients.

    ``routing`` is an unpool mode name or an explicit index array.
    """
    x_clean = np.asarray(x_clean, dtype=np.float64)
    cache = _forward(layer, x_corrupt, routing, rng)
    if x_clean.shape != cache["x"].shape:
        raise ShapeError(f"clean input {x_clean.shape} != corrupted input {cache['x'].shape}")
    loss = mse_loss(x_clean, cache["z"], reduction)
    return loss, _backward(layer, cache, x_clean, reduction)


def backward(layer, x_clean, x_corrupt, mode="recorded", rng=None, routing=None,
             reduction="example"):
    """Analytic gradients ``{"dW", "db", "dc"}`` of the reconstruction loss.

    In ``random`` mode the unpool routing is sampled once from ``rng`` (or
    passed explicitly as ``routing``) and held fixed for the whole pass.
    """
    if routing is None:
        routing = mode
    return loss_and_grads(layer, x_clean, x_corrupt, routing, rng, reduction)[1]


def reconstruction_loss(layer, x_clean, x_corrupt, routing="recorded", rng=None,
                        reduction="example"):
    return mse_loss(x_clean, _forward(layer, x_corrupt, routing, rng)["z"], reduction)


def _sgd_step(layer, grads, lr):
    return replace(
        layer,
        filters=layer.filters - lr * grads["dW"],
        encoder_bias=layer.encoder_bias - lr * grads["db"],
        decoder_bias=layer.decoder_bias - lr * grads["dc"],
    )


def train_layer(layer, data, cfg, rng, unpool_mode="random"):
    """SGD on one layer; returns the trained layer and the per-epoch mean loss."""
    n = data.shape[0]
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = data[order[start:start + cfg.batch_size]]
            noisy = corrupt(batch, cfg.corruption_prob, rng)
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    loss, grads = loss_and_grads(layer, batch, noisy, unpool_mode, rng,
                                                 cfg.loss_reduction)
                    step = _sgd_step(layer, grads, cfg.learning_rate)
            except NonFiniteError:
                loss = np.nan
            if not (np.isfinite(loss) and np.all(np.isfinite(step.filters))
                    and np.all(np.isfinite(step.encoder_bias))
                    and np.all(np.isfinite(step.decoder_bias))):
                raise TrainingError(f"training diverged in epoch {epoch + 1}; lower the learning rate")
            total += loss * batch.shape[0]
            layer = step
        history.append(total / n)
        logger.debug("epoch %d mean loss %.6g", epoch + 1, history[-1])
    return layer, history


def train_layerwise(model, data, cfg):
    """Greedy layer-wise denoising training.

    Layer ``i`` learns to reconstruct the clean output of the frozen layers
    below it from a freshly corrupted copy. Returns the trained model and a
    list holding each layer's per-epoch mean loss.
    """
    data = as_tensor(data, 3, 4)
    if data.ndim == 3:
        data = data[:, None]
    if data.shape[0] == 0:
        raise TrainingError("empty training set")
    if data.shape[1:] != model.input_shape:
        raise ShapeError(f"data windows {data.shape[1:]} != model input {model.input_shape}")
    rng = np.random.default_rng(cfg.seed)
    layers, histories = [], []
    current = data
    for i, layer in enumerate(model.layers):
        logger.info("training layer %d of %d", i + 1, len(model.layers))
        layer, hist = train_layer(layer, current, cfg, rng, model.unpool_mode)
        layers.append(layer)
        histories.append(hist)
        current = encode(layer, current)[0]
    return replace(model, layers=layers), histories


def encode_stack(model, x):
    x = as_tensor(x, 3, 4)
    for layer in model.layers:
        x = encode(layer, x)[0]
    return x


def extract_features(model, x):
    """Flatten the deepest feature maps (map, row, column order) into one vector per window."""
    x = as_tensor(x, 2, 4)
    if x.ndim == 2:
        x = x[None]
    y = encode_stack(model, x)
    if y.ndim == 3:
        return y.reshape(-1)
    return y.reshape(y.shape[0], -1)


def build_model(input_shape, n_layers=2, n_maps=10, size=3, slope=0.01, seed=0,
                unpool_mode="random", decoder_activation="auto"):
    """Stack of freshly initialized layers, each seeded from ``seed``."""
    if decoder_activation not in DECODER_ACTIVATIONS:
        raise ValueError(f"unknown decoder activation {decoder_activation!r}")
    seeds = np.random.SeedSequence(seed).spawn(n_layers)
    c = input_shape[0]
    layers = []
    for i in range(n_layers):
        if decoder_activation == "auto":
            identity = i == 0
        else:
            identity = decoder_activation == "identity"
        layers.append(init_layer(c, size, n_maps, seeds[i], slope, True, identity))
        c = n_maps
    return CaeModel(layers, input_shape, unpool_mode)


def compatible_extent(extent, n_layers, size=3):
    """Smallest extent >= ``extent`` that survives every conv + 2x2 pool stage exactly."""
    def ok(e):
        for _ in range(n_layers):
            e -= size - 1
            if e < 2 or e % 2:
                return False
            e //= 2
        return True

    e = extent
    while not ok(e):
        e += 1
    return e


# Checkpoint layout (little-endian):
#   8s  magic b"SFCAE\x00\x00\x01"
#   I   format version (1)
#   I   layer count L
#   3I  input shape c, h, w
#   I   unpool mode (0 recorded, 1 random)
#   per layer: 4I c, n, k, flags (bit0 pooled, bit1 identity decoder), d slope
#   per layer: float64 filters (c*n*n*k, C order), encoder bias (k), decoder bias (c)
CHECKPOINT_MAGIC = b"SFCAE\x00\x00\x01"
CHECKPOINT_VERSION = 1
_MODE_CODES = {"recorded": 0, "random": 1}


def dumps_checkpoint(model):
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(model.layers))]
    parts.append(struct.pack("<3I", *model.input_shape))
    parts.append(struct.pack("<I", _MODE_CODES[model.unpool_mode]))
    for layer in model.layers:
        flags = int(layer.pooled) | (int(layer.identity_decoder) << 1)
        c, n, _, k = layer.filters.shape
        parts.append(struct.pack("<4Id", c, n, k, flags, layer.slope))
    for layer in model.layers:
        for arr in (layer.filters, layer.encoder_bias, layer.decoder_bias):
            parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def loads_checkpoint(blob):
    if len(blob) < 28 or blob[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError("not a seisfacies checkpoint (bad magic)")
    pos = 8
    version, n_layers = struct.unpack_from("<II", blob, pos)
    pos += 8
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    input_shape = struct.unpack_from("<3I", blob, pos)
    pos += 12
    (mode,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    headers = []
    if pos + n_layers * struct.calcsize("<4Id") > len(blob):
        raise CheckpointError("truncated checkpoint header")
    for _ in range(n_layers):
        headers.append(struct.unpack_from("<4Id", blob, pos))
        pos += struct.calcsize("<4Id")
    layers = []
    for c, n, k, flags, slope in headers:
        arrays = []
        for count, shape in ((c * n * n * k, (c, n, n, k)), (k, (k,)), (c, (c,))):
            nbytes = 8 * count
            if pos + nbytes > len(blob):
                raise CheckpointError("truncated checkpoint")
            arrays.append(np.frombuffer(blob, "<f8", count, pos).reshape(shape).astype(np.float64))
            pos += nbytes
        layers.append(CaeLayer(*arrays, slope=slope, pooled=bool(flags & 1),
                               identity_decoder=bool(flags & 2)))
    if pos != len(blob):
        raise CheckpointError("trailing bytes after checkpoint payload")
    modes = {v: k for k, v in _MODE_CODES.items()}
    if mode not in modes:
        raise CheckpointError(f"unknown unpool mode code {mode}")
    return CaeModel(layers, input_shape, modes[mode])


def save_checkpoint(model, path):
    with open(path, "wb") as fh:
        fh.write(dumps_checkpoint(model))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return loads_checkpoint(fh.read())


class ConvAutoencoder(TransformerMixin, BaseEstimator):
    """Greedy layer-wise denoising convolutional autoencoder.

    ``transform`` maps each window to the flattened bottleneck feature maps.

    Parameters
    ----------
    n_layers : int
        Number of conv + pool stages.
    n_maps : int
        Feature maps per stage.
    filter_size : int
        Odd spatial extent of the square filters.
    learning_rate, epochs, batch_size, corruption_prob :
        Plain SGD settings; see :class:`TrainConfig`.
    slope : float
        Negative-side slope of the leaky ReLU.
    unpool_mode : {"random", "recorded"}
        Unpooling routing used while training.
    decoder_activation : {"auto", "identity", "leaky"}
        ``auto`` keeps the first layer's reconstruction linear so signed
        amplitudes survive and uses the leaky ReLU deeper in the stack.
    loss_reduction : {"entry", "example"}
        Normalizer of the squared error; see :func:`mse_loss`.
    standardize : bool
        Standardize each window before training and encoding.
    pad : bool
        Zero-pad windows symmetrically to the nearest extent that pools
        exactly at every stage. Without it such windows are rejected.
    random_state : int
        Seed for initialization, corruption and unpool routing.

    Attributes
    ----------
    model_ : CaeModel
    loss_history_ : list of list of float
        Per-epoch mean loss of every layer.
    """

    def __init__(self, n_layers=2, n_maps=10, filter_size=3, learning_rate=0.02,
                 epochs=10, batch_size=1, corruption_prob=0.05, slope=0.01,
                 unpool_mode="random", decoder_activation="auto", loss_reduction="entry",
                 standardize=True, pad=True, random_state=0):
        self.n_layers = n_layers
        self.n_maps = n_maps
        self.filter_size = filter_size
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.corruption_prob = corruption_prob
        self.slope = slope
        self.unpool_mode = unpool_mode
        self.decoder_activation = decoder_activation
        self.loss_reduction = loss_reduction
        self.standardize = standardize
        self.pad = pad
        self.random_state = random_state

    def _windows(self, X):
        X = as_tensor(X, 3, 4)
        if X.ndim == 3:
            X = X[:, None]
        if self.standardize:
            from .features import standardize_array
            X = standardize_array(X)
        return X

    def _pad(self, X):
        (top, bottom), (left, right) = self.padding_
        if top or bottom or left or right:
            X = np.pad(X, [(0, 0), (0, 0), (top, bottom), (left, right)])
        return X

    def fit(self, X, y=None):
        X = self._windows(X)
        c, h, w = X.shape[1:]
        pads = []
        for extent in (h, w):
            target = compatible_extent(extent, self.n_layers, self.filter_size) if self.pad else extent
            extra = target - extent
            pads.append((extra // 2, extra - extra // 2))
        self.padding_ = tuple(pads)
        self.window_shape_ = (c, h, w)
        X = self._pad(X)
        model = build_model(X.shape[1:], self.n_layers, self.n_maps, self.filter_size,
                            self.slope, self.random_state, self.unpool_mode,
                            self.decoder_activation)
        cfg = TrainConfig(self.learning_rate, self.epochs, self.corruption_prob,
                          self.batch_size, self.random_state, self.slope, self.loss_reduction)
        self.model_, self.loss_history_ = train_layerwise(model, X, cfg)
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = self._windows(X)
        if X.shape[1:] != self.window_shape_:
            raise ShapeError(f"windows {X.shape[1:]} != fitted windows {self.window_shape_}")
        return extract_features(self.model_, self._pad(X))

    @classmethod
    def from_model(cls, model, window_shape=None, **params):
        """Wrap an already trained :class:`CaeModel` (e.g. a loaded checkpoint)."""
        est = cls(n_layers=len(model.layers), **params)
        c, h, w = model.input_shape
        wc, wh, ww = window_shape or model.input_shape
        est.window_shape_ = (wc, wh, ww)
        dh, dw = h - wh, w - ww
        est.padding_ = ((dh // 2, dh - dh // 2), (dw // 2, dw - dw // 2))
        est.model_ = model
        est.loss_history_ = []
        return est
