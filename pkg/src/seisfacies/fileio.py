"""File formats: gather cubes, label/feature CSVs, PPM facies maps, run config.

Gather cube (``.gcube``)
    One ASCII header line::

        GCUBE1 <inlines> <crosslines> <offsets> <samples> <dt_ms> <window_ms>\\n

    followed by ``inlines*crosslines*offsets*samples`` little-endian float64
    values ordered inline, crossline, offset, sample (sample fastest).
"""

import csv
import dataclasses
import io
import math
from dataclasses import dataclass

import numpy as np

from .features import SurveyGrid

CUBE_MAGIC = "GCUBE1"


class FormatError(ValueError):
    """A file does not follow its documented layout."""


class ConfigError(ValueError):
    """Bad run configuration (unknown key or unparsable value)."""


def dumps_cube(grid):
    ni, nx, h, w = grid.data.shape
    header = f"{CUBE_MAGIC} {ni} {nx} {w} {h} {grid.dt_ms!r} {grid.window_ms!r}\n"
    payload = np.ascontiguousarray(np.transpose(grid.data, (0, 1, 3, 2)), dtype="<f8")
    return header.encode("ascii") + payload.tobytes()


def loads_cube(blob):
    end = blob.find(b"\n")
    if end < 0:
        raise FormatError("gather cube has no header line")
    fields = blob[:end].decode("ascii", errors="replace").split()
    if not fields or fields[0] != CUBE_MAGIC:
        raise FormatError(f"bad gather cube magic (expected {CUBE_MAGIC})")
    if len(fields) != 7:
        raise FormatError(f"gather cube header needs 7 fields, found {len(fields)}")
    try:
        ni, nx, w, h = (int(v) for v in fields[1:5])
        dt_ms, window_ms = float(fields[5]), float(fields[6])
    except ValueError as exc:
        raise FormatError(f"unparsable gather cube header: {exc}") from None
    if min(ni, nx, w, h) < 1:
        raise FormatError("gather cube extents must be positive")
    payload = blob[end + 1:]
    expected = ni * nx * w * h * 8
    if len(payload) != expected:
        raise FormatError(f"gather cube payload is {len(payload)} bytes, header implies {expected}")
    data = np.frombuffer(payload, dtype="<f8").reshape(ni, nx, w, h)
    return SurveyGrid(np.transpose(data, (0, 1, 3, 2)).astype(np.float64), dt_ms, window_ms)


def write_cube(path, grid):
    with open(path, "wb") as fh:
        fh.write(dumps_cube(grid))


def read_cube(path):
    with open(path, "rb") as fh:
        return loads_cube(fh.read())


def _write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def dumps_labels(labels):
    labels = np.asarray(labels)
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["inline", "crossline", "label"])
    for (i, j), v in np.ndenumerate(labels):
        out.writerow([i, j, int(v)])
    return buf.getvalue()


def loads_labels(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["inline", "crossline", "label"]:
        raise FormatError("label CSV must start with header inline,crossline,label")
    try:
        triples = [(int(a), int(b), int(c)) for a, b, c in rows[1:]]
    except ValueError as exc:
        raise FormatError(f"bad label CSV row: {exc}") from None
    if not triples:
        raise FormatError("label CSV has no rows")
    arr = np.array(triples)
    if arr.min() < 0:
        raise FormatError("label CSV holds negative indices or labels")
    ni, nx = arr[:, 0].max() + 1, arr[:, 1].max() + 1
    grid = np.full((ni, nx), -1, dtype=np.int64)
    grid[arr[:, 0], arr[:, 1]] = arr[:, 2]
    if len(triples) != ni * nx or np.any(grid < 0):
        raise FormatError("label CSV does not cover a full inline x crossline grid exactly once")
    return grid


def write_labels(path, labels):
    _write_text(path, dumps_labels(labels))


def read_labels(path):
    with open(path, newline="") as fh:
        return loads_labels(fh.read())


def dumps_features(keys, features):
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or len(keys) != features.shape[0]:
        raise FormatError("feature rows and keys differ in length")
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["inline", "crossline"] + [f"f{k}" for k in range(features.shape[1])])
    for (i, j), row in zip(keys, features):
        out.writerow([i, j] + [repr(float(v)) for v in row])
    return buf.getvalue()


def loads_features(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][:2] != ["inline", "crossline"]:
        raise FormatError("feature CSV must start with header inline,crossline,f0,...")
    width = len(rows[0])
    keys, values = [], []
    for r in rows[1:]:
        if len(r) != width:
            raise FormatError(f"feature CSV row has {len(r)} fields, expected {width}")
        try:
            keys.append((int(r[0]), int(r[1])))
            values.append([float(v) for v in r[2:]])
        except ValueError as exc:
            raise FormatError(f"bad feature CSV row: {exc}") from None
    if not keys:
        raise FormatError("feature CSV has no rows")
    return keys, np.array(values, dtype=np.float64)


def write_features(path, keys, features):
    _write_text(path, dumps_features(keys, features))


def read_features(path):
    with open(path, newline="") as fh:
        return loads_features(fh.read())


def keys_to_grid(keys, labels):
    keys = np.asarray(keys)
    ni, nx = keys[:, 0].max() + 1, keys[:, 1].max() + 1
    grid = np.full((ni, nx), -1, dtype=np.int64)
    grid[keys[:, 0], keys[:, 1]] = labels
    if np.any(grid < 0):
        raise FormatError("feature keys do not cover a full grid")
    return grid


# Distinct, fixed colors; label k is drawn with PALETTE[k].
PALETTE = (
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200), (245, 130, 48),
    (145, 30, 180), (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 212),
    (0, 128, 128), (220, 190, 255), (170, 110, 40), (255, 250, 200), (128, 0, 0),
    (170, 255, 195), (128, 128, 0), (255, 215, 180), (0, 0, 128), (128, 128, 128),
)


def render_map(labels, palette=PALETTE):
    """Binary P6 pixmap, one pixel per cell: rows are inlines, columns crosslines."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError(f"label grid must be 2-D, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= len(palette):
        raise ValueError(f"labels must lie in 0..{len(palette) - 1} for this palette")
    rgb = np.asarray(palette, dtype=np.uint8)[labels]
    h, w = labels.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes()


def parse_ppm(blob):
    """Decode a binary P6 pixmap into an ``(h, w, 3)`` uint8 array."""
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PPM header")
        tokens.append(blob[start:pos])
    if tokens[0] != b"P6":
        raise FormatError("not a binary P6 pixmap")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise FormatError("only 8-bit pixmaps are supported")
    pos += 1
    data = blob[pos:]
    if len(data) != w * h * 3:
        raise FormatError("PPM payload size does not match header")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3)


def labels_from_ppm(blob, palette=PALETTE):
    rgb = parse_ppm(blob).astype(np.int64)
    code = (rgb[..., 0] << 16) | (rgb[..., 1] << 8) | rgb[..., 2]
    lookup = {(r << 16) | (g << 8) | b: k for k, (r, g, b) in enumerate(palette)}
    try:
        return np.vectorize(lookup.__getitem__, otypes=[np.int64])(code)
    except KeyError:
        raise FormatError("pixmap contains colors outside the palette") from None


@dataclass
class RunConfig:
    """Every pipeline knob with its default; see the README table."""

    window_ms: float = 48.0
    dt_ms: float = 2.0
    alignment: str = "centered"
    learning_rate: float = 0.02
    filter_size: int = 3
    maps: int = 10
    layers: int = 2
    corruption_prob: float = 0.05
    slope: float = 0.01
    epochs: int = 10
    batch_size: int = 1
    unpool_mode: str = "random"
    decoder_activation: str = "auto"
    loss_reduction: str = "entry"
    cluster_mode: str = "hard"
    clusters: int = 5
    fuzzifier: float = 2.0
    max_iter: int = 300
    tol: float = 1e-6
    n_init: int = 10
    pca_threshold: float = 0.9
    seed: int = 0
    synth_inlines: int = 40
    synth_crosslines: int = 40
    synth_offsets: int = 22
    synth_snr: float = 10.0

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


_PARSERS = {int: int, float: float, str: str, "int": int, "float": float, "str": str}


def parse_config(text, base=None):
    """Parse ``key = value`` lines (``#`` starts a comment); unknown keys are errors."""
    cfg = base or RunConfig()
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    changes = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        kind = _PARSERS[fields[key].type]
        try:
            parsed = kind(value)
        except ValueError:
            raise ConfigError(f"line {lineno}: {key} expects {kind.__name__}, got {value!r}") from None
        if isinstance(parsed, float) and not math.isfinite(parsed):
            raise ConfigError(f"line {lineno}: {key} must be finite")
        changes[key] = parsed
    return cfg.replace(**changes)


def dumps_config(cfg):
    return "".join(f"{f.name} = {getattr(cfg, f.name)}\n" for f in dataclasses.fields(cfg))


def read_config(path):
    with open(path) as fh:
        return parse_config(fh.read())
