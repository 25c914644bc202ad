"""Command-line driver for the facies workflow.

    seisfacies synth    --cube survey.gcube --labels truth.csv
    seisfacies train    --cube survey.gcube --model cae.ckpt
    seisfacies extract  --cube survey.gcube --model cae.ckpt --features feats.csv
    seisfacies cluster  --features feats.csv --labels pred.csv
    seisfacies map      --labels pred.csv --out facies.ppm
    seisfacies baseline pca|poststack --cube survey.gcube --labels base.csv
    seisfacies score    --pred pred.csv --truth truth.csv
    seisfacies gradcheck
"""

import argparse
import logging
import sys
import warnings

import numpy as np

from . import fileio
from .baselines import PCA, PoststackStacker
from .cae import (CheckpointError, ConvAutoencoder, TrainingError, load_checkpoint,
                  save_checkpoint)
from .clustering import ClusterConfig, cluster
from .features import (SurveyGrid, assemble_feature_matrix, cut_window, standardize_array,
                       validate_window)
from .gradcheck import random_suite
from .synth import default_layout, generate_survey, score_map
from .tensor import ShapeError

logger = logging.getLogger("seisfacies")


def _config(args):
    cfg = fileio.read_config(args.config) if args.config else fileio.RunConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if getattr(args, "decoder_activation", None):
        cfg = cfg.replace(decoder_activation=args.decoder_activation)
    if getattr(args, "unpool_mode", None):
        cfg = cfg.replace(unpool_mode=args.unpool_mode)
    return cfg


def _windows(grid, cfg):
    """Cube windows, re-cut around the middle sample if the configured length differs."""
    h = grid.n_samples
    if abs(grid.window_ms - cfg.window_ms) < 1e-9 and abs(grid.dt_ms - cfg.dt_ms) < 1e-9:
        out = grid
    else:
        if abs(grid.dt_ms - cfg.dt_ms) > 1e-9:
            raise ShapeError(f"cube dt {grid.dt_ms} ms differs from configured dt {cfg.dt_ms} ms")
        pick = (h // 2) * grid.dt_ms
        cut = [cut_window(grid.data[i, j], pick, cfg.window_ms, cfg.dt_ms, cfg.alignment).samples[0]
               for i, j in grid.keys()]
        data = np.array(cut).reshape(grid.n_inlines, grid.n_crosslines, *cut[0].shape)
        out = SurveyGrid(data, cfg.dt_ms, cfg.window_ms)
    flagged = sum(not validate_window(out.data[i, j]).ok for i, j in out.keys())
    if flagged:
        logger.warning("%d of %d windows have a trace without both a crest and a trough",
                       flagged, len(out.keys()))
    return out


def _autoencoder(cfg):
    return ConvAutoencoder(
        n_layers=cfg.layers, n_maps=cfg.maps, filter_size=cfg.filter_size,
        learning_rate=cfg.learning_rate, epochs=cfg.epochs, batch_size=cfg.batch_size,
        corruption_prob=cfg.corruption_prob, slope=cfg.slope, unpool_mode=cfg.unpool_mode,
        decoder_activation=cfg.decoder_activation, loss_reduction=cfg.loss_reduction,
        random_state=cfg.seed)


def _cluster_labels(features, cfg):
    ccfg = ClusterConfig(cfg.clusters, cfg.fuzzifier, cfg.max_iter, cfg.tol, cfg.seed,
                         cfg.cluster_mode, cfg.n_init if cfg.cluster_mode == "hard" else 1)
    return cluster(features, ccfg).labels


def cmd_synth(args):
    cfg = _config(args)
    layout = default_layout(cfg.synth_inlines, cfg.synth_crosslines, cfg.synth_snr, cfg.seed,
                            cfg.dt_ms, cfg.window_ms, cfg.synth_offsets)
    grid, labels = generate_survey(layout, cfg.dt_ms, cfg.window_ms, cfg.synth_offsets)
    fileio.write_cube(args.cube, grid)
    fileio.write_labels(args.labels, labels)
    print(f"wrote {grid.n_inlines}x{grid.n_crosslines} survey ({grid.n_samples} samples x "
          f"{grid.n_offsets} offsets, noise sigma {layout.noise_sigma:.4g}) to {args.cube}")


def cmd_train(args):
    cfg = _config(args)
    grid = _windows(fileio.read_cube(args.cube), cfg)
    est = _autoencoder(cfg).fit(grid.stack())
    save_checkpoint(est.model_, args.model)
    for i, hist in enumerate(est.loss_history_):
        print(f"layer {i + 1}: loss {hist[0]:.6g} -> {hist[-1]:.6g} over {len(hist)} epochs")


def cmd_extract(args):
    cfg = _config(args)
    grid = _windows(fileio.read_cube(args.cube), cfg)
    est = ConvAutoencoder.from_model(load_checkpoint(args.model),
                                     (1, grid.n_samples, grid.n_offsets))
    features, keys = assemble_feature_matrix(grid, est, threads=args.threads)
    fileio.write_features(args.features, keys, features)
    print(f"wrote {features.shape[0]} feature vectors of length {features.shape[1]}")


def cmd_cluster(args):
    cfg = _config(args)
    keys, features = fileio.read_features(args.features)
    labels = _cluster_labels(features, cfg)
    fileio.write_labels(args.labels, fileio.keys_to_grid(keys, labels))
    print(f"wrote {cfg.clusters}-class labels for {len(keys)} cells")


def cmd_map(args):
    labels = fileio.read_labels(args.labels)
    with open(args.out, "wb") as fh:
        fh.write(fileio.render_map(labels))
    print(f"wrote {labels.shape[1]}x{labels.shape[0]} facies map to {args.out}")


def cmd_baseline(args):
    cfg = _config(args)
    grid = _windows(fileio.read_cube(args.cube), cfg)
    X = grid.stack()
    if args.kind == "pca":
        pca = PCA(cfg.pca_threshold)
        features = pca.fit_transform(standardize_array(X))
        print(f"PCA keeps {pca.n_components_} components for {cfg.pca_threshold:.0%} variance")
    else:
        features = PoststackStacker().fit_transform(X)
    labels = _cluster_labels(features, cfg)
    fileio.write_labels(args.labels, fileio.keys_to_grid(grid.keys(), labels))
    print(f"wrote {args.kind} baseline labels for {len(labels)} cells")


def cmd_score(args):
    pred = fileio.read_labels(args.pred)
    truth = fileio.read_labels(args.truth)
    accuracy, recall = score_map(pred, truth)
    print(f"accuracy {accuracy:.4f}")
    for cls, r in recall.items():
        print(f"class {cls} recall {r:.4f}")


def cmd_gradcheck(args):
    cases = random_suite(args.trials, 0 if args.seed is None else args.seed)
    worst = max(c.max_error for c in cases)
    for k, c in enumerate(cases):
        print(f"case {k}: {c.n_layers} layer(s) {c.extent[0]}x{c.extent[1]}x{c.channels} "
              f"maps={c.maps} routing={c.routing} max rel err {c.max_error:.2e}")
    ok = worst < args.tol
    print(f"{'PASS' if ok else 'FAIL'}: worst relative error {worst:.2e} (limit {args.tol:g})")
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="seisfacies", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="key = value run configuration file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads (output is identical)")
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "write a labeled synthetic survey")
    p.add_argument("--cube", required=True)
    p.add_argument("--labels", required=True)

    p = add("train", cmd_train, "train the autoencoder layer by layer")
    p.add_argument("--cube", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--decoder-activation", choices=("auto", "identity", "leaky"),
                   help="override the configured decoder activation")
    p.add_argument("--unpool-mode", choices=("random", "recorded"),
                   help="override the configured unpooling routing")

    p = add("extract", cmd_extract, "write bottleneck features for every window")
    p.add_argument("--cube", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)

    p = add("cluster", cmd_cluster, "cluster a feature CSV into facies labels")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)

    p = add("map", cmd_map, "render a label CSV as a PPM facies map")
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)

    p = add("baseline", cmd_baseline, "PCA or poststack comparison pipeline")
    p.add_argument("kind", choices=("pca", "poststack"))
    p.add_argument("--cube", required=True)
    p.add_argument("--labels", required=True)

    p = add("score", cmd_score, "permutation-matched accuracy against true labels")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)

    p = add("gradcheck", cmd_gradcheck, "finite-difference gradient suite")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-4)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            rc = args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 1
    except fileio.ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 1
    except fileio.FormatError as exc:
        print(f"error: malformed file: {exc}", file=sys.stderr)
        return 1
    except CheckpointError as exc:
        print(f"error: malformed checkpoint: {exc}", file=sys.stderr)
        return 1
    except ShapeError as exc:
        print(f"error: shape mismatch: {exc}", file=sys.stderr)
        return 1
    except TrainingError as exc:
        print(f"error: training: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
