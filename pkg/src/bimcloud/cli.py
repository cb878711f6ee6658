"""Command-line pipeline: ``synth``, ``clean``, ``planes``, ``segment`` and ``weights``.

Exit codes: 0 success, 2 bad arguments, 3 I/O or format errors,
4 algorithm failures (no plane found, no labels, zero variance everywhere).
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import io as cio
from .classify import KernelSpec, evaluate_cv
from .cleaning import (
    ZScoreFilterConfig,
    radius_outlier_removal,
    statistical_outlier_removal,
    zscore_axis_filter,
)
from .config import PipelineConfig, apply_overrides, load_config, parse_gamma, parse_threshold
from .errors import BimcloudError, FormatError, InvalidParameterError, ShapeError, ZeroVarianceError
from .features import BlockConfig, check_weights, init_weights, room_features
from .planes import (
    RansacConfig,
    SurfaceClass,
    ceiling_height,
    classify_segments,
    extract_planes,
    separate_walls_from_objects,
)
from .synth import generate_room

logger = logging.getLogger("bimcloud")

EXIT_OK, EXIT_ARGS, EXIT_IO, EXIT_ALGO = 0, 2, 3, 4


class NoPlaneError(BimcloudError):
    pass


class MissingLabelsError(BimcloudError):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InvalidParameterError(message)


def _config(args, section: str, mapping: dict) -> PipelineConfig:
    cfg = load_config(args.config)
    apply_overrides(cfg, section, {key: getattr(args, dest) for key, dest in mapping.items()})
    getattr(cfg, section).validate()
    return cfg


def _class_names(labels) -> dict:
    return {int(v): SurfaceClass(int(v)).label for v in np.unique(labels) if 0 <= v < len(SurfaceClass)}


# -- subcommands -----------------------------------------------------------

def run_synth(args) -> int:
    cfg = _config(args, "synth", {
        "width": "width", "depth": "depth", "height": "height", "points_per_face": "points_per_face",
        "noise": "noise", "outliers": "outliers", "outlier_scale": "outlier_scale", "clutter": "clutter",
        "seed": "seed",
    })
    cloud, truth = generate_room(cfg.synth.room_spec())
    cio.write_ply(cloud, args.output, args.encoding)
    if args.truth:
        cio.write_report_json(truth, args.truth)
    logger.info("wrote %d points to %s", len(cloud), args.output)
    return EXIT_OK


def run_clean(args) -> int:
    cfg = _config(args, "clean", {
        "method": "method", "axes": "axes", "threshold": "threshold", "bins": "bins", "cutoff": "cutoff",
        "k": "k", "std_ratio": "std_ratio", "radius": "radius", "min_neighbors": "min_neighbors",
    })
    c = cfg.clean
    doc = cio.read_cloud(args.input)
    cloud = doc.cloud
    if c.method == "zscore":
        zcfg = ZScoreFilterConfig(tuple(c.axes.lower()), parse_threshold(c.threshold), c.bins, c.cutoff)
        result = zscore_axis_filter(cloud, zcfg)
        if all(stage.skipped for stage in result.report.stages):
            raise ZeroVarianceError("every filtration axis has zero variance")
    elif c.method == "statistical":
        result = statistical_outlier_removal(cloud, c.k, c.std_ratio)
    else:
        result = radius_outlier_removal(cloud, c.radius, c.min_neighbors)
    cio.write_ply(cio.CloudDocument(result.kept), args.output, args.encoding)
    if args.report:
        cio.write_report_json(result.report, args.report)
    logger.info("removed %d of %d points", result.report.removed_points, len(cloud))
    return EXIT_OK


def run_planes(args) -> int:
    cfg = _config(args, "planes", {
        "t": "t", "iterations": "iterations", "min_score": "min_score", "max_planes": "max_planes",
        "min_inliers": "min_inliers", "horiz_tol": "horiz_tol", "vert_tol": "vert_tol", "seed": "seed",
        "workers": "workers",
    })
    p = cfg.planes
    doc = cio.read_cloud(args.input)
    cloud = doc.cloud
    ransac = RansacConfig(p.t, p.iterations, p.min_score, p.seed)
    if len(cloud) < max(3, p.min_inliers):
        raise NoPlaneError(f"cloud has {len(cloud)} points, fewer than min_inliers={p.min_inliers}")
    segments = extract_planes(cloud, ransac, p.max_planes, p.min_inliers, p.workers)
    if not segments:
        raise NoPlaneError(f"no plane reached {p.min_inliers} inliers")
    segments = classify_segments(segments, cloud, horiz_tol_deg=p.horiz_tol, vert_tol_deg=p.vert_tol)
    floor = next((s for s in segments if s.surface_class == SurfaceClass.FLOOR), None)
    ceiling = next((s for s in segments if s.surface_class == SurfaceClass.CEILING), None)
    height = ceiling_height(floor, ceiling) if floor is not None and ceiling is not None else None
    sep = separate_walls_from_objects(cloud, floor, ceiling, ransac, p.min_inliers, p.max_planes,
                                      vert_tol_deg=p.vert_tol, workers=p.workers)

    n = len(cloud)
    seg_id = np.full(n, -1, dtype=np.int64)
    cls_id = np.full(n, int(SurfaceClass.UNCLASSIFIED), dtype=np.int64)
    final = [s for s in (floor, ceiling) if s is not None] + sep.walls
    for i, s in enumerate(final):
        seg_id[s.inliers] = i
        cls_id[s.inliers] = int(s.surface_class)
    cls_id[sep.object_indices] = int(SurfaceClass.OBJECT)

    out = cio.CloudDocument(cloud, extra={"segment": seg_id, "class": cls_id})
    cio.write_ply(out, args.output, args.encoding)
    if args.report:
        report = {
            "kind": "planes",
            "total_points": n,
            "parameters": {"t": p.t, "N": p.iterations, "S": p.min_score, "max_planes": p.max_planes,
                           "min_inliers": p.min_inliers, "horiz_tol_deg": p.horiz_tol,
                           "vert_tol_deg": p.vert_tol, "seed": p.seed},
            "segments": [s.to_dict() for s in segments],
            "ceiling_height": height,
            "walls": [s.to_dict() for s in sep.walls],
            "object_point_count": int(len(sep.object_indices)),
        }
        cio.write_report_json(report, args.report)
    logger.info("%d segments, %d walls, ceiling height %s", len(segments), len(sep.walls), height)
    return EXIT_OK


def run_segment(args) -> int:
    cfg = _config(args, "segment", {
        "block_size": "block_size", "points_per_block": "points_per_block", "min_points": "min_points",
        "seed": "seed", "weights": "weights", "folds": "folds", "C": "C", "kernel": "kernel", "gamma": "gamma",
        "tol": "tol", "scaler": "scaler", "include_coords": "include_coords", "max_rows": "max_rows",
    })
    s = cfg.segment
    doc = cio.read_cloud(args.input)
    cloud = doc.cloud
    if cloud.labels is None:
        raise MissingLabelsError(f"{args.input} carries no per-point labels; evaluation needs them")
    if s.weights:
        weights = cio.read_weights(s.weights)
        check_weights(weights)
    else:
        weights = init_weights(s.seed)
    blocks = BlockConfig(s.block_size, s.points_per_block, s.min_points, s.seed)
    fm = room_features(cloud, weights, blocks, s.include_coords)
    labels = cloud.labels[fm.indices]
    keep = labels >= 0
    values, indices, labels = fm.values[keep], fm.indices[keep], labels[keep]
    if len(labels) > s.max_rows:
        pick = np.sort(np.random.default_rng(s.seed).choice(len(labels), s.max_rows, replace=False))
        values, indices, labels = values[pick], indices[pick], labels[pick]
    if len(np.unique(labels)) < 2:
        raise MissingLabelsError("evaluation needs at least two labelled classes")
    report = evaluate_cv(values, labels, s.folds, s.C, KernelSpec(s.kernel, parse_gamma(s.gamma)), s.tol,
                         s.seed, None if s.scaler == "none" else s.scaler, s.max_passes, _class_names(labels))
    report.parameters.update({"block_size": s.block_size, "points_per_block": s.points_per_block,
                              "min_points": s.min_points, "weights": "file" if s.weights else "seeded",
                              "include_coords": s.include_coords, "max_rows": s.max_rows})
    predicted = np.full(len(cloud), -1, dtype=np.int64)
    predicted[indices] = report.predictions
    out = cio.CloudDocument(cloud.with_labels(predicted), extra={"true_label": cloud.labels})
    if args.output:
        cio.write_ply(out, args.output, args.encoding)
    cio.write_report_json(report, args.report)
    logger.info("overall accuracy %.2f%% on %d rows", report.overall_accuracy, report.total)
    return EXIT_OK


def run_weights(args) -> int:
    cio.write_weights(init_weights(args.seed), args.output)
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="bimcloud", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    def common(p, needs_input=True):
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
        if needs_input:
            p.add_argument("--input", required=True, help="input .ply or .xyz cloud")
        p.add_argument("--config", help="key=value config file with [clean]/[planes]/[segment]/[synth] sections")
        p.add_argument("--encoding", default="binary_little_endian", choices=("ascii", "binary_little_endian"))

    p = sub.add_parser("synth", help="generate a synthetic room with ground truth")
    common(p, needs_input=False)
    p.add_argument("--output", required=True)
    p.add_argument("--truth", help="ground-truth JSON sidecar")
    p.add_argument("--width", type=float)
    p.add_argument("--depth", type=float)
    p.add_argument("--height", type=float)
    p.add_argument("--points-per-face", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--outliers", type=float, help="outlier fraction in [0, 1)")
    p.add_argument("--outlier-scale", type=float)
    p.add_argument("--clutter", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=run_synth)

    p = sub.add_parser("clean", help="remove outliers")
    common(p)
    p.add_argument("--output", required=True)
    p.add_argument("--report")
    p.add_argument("--method", choices=("zscore", "statistical", "radius"))
    p.add_argument("--axes", help="filtration order, e.g. xy or xyz")
    p.add_argument("--threshold", help="'auto' or a positive z-score bound")
    p.add_argument("--bins", type=int)
    p.add_argument("--cutoff", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--std-ratio", type=float)
    p.add_argument("--radius", type=_positive_float)
    p.add_argument("--min-neighbors", type=int)
    p.set_defaults(func=run_clean)

    p = sub.add_parser("planes", help="extract and classify planes")
    common(p)
    p.add_argument("--output", required=True)
    p.add_argument("--report")
    p.add_argument("--t", type=_positive_float, help="inlier distance (m)")
    p.add_argument("--iterations", type=int, help="RANSAC iteration cap N")
    p.add_argument("--min-score", type=int, help="consensus size S that stops RANSAC early")
    p.add_argument("--max-planes", type=int)
    p.add_argument("--min-inliers", type=int)
    p.add_argument("--horiz-tol", type=float)
    p.add_argument("--vert-tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=run_planes)

    p = sub.add_parser("segment", help="per-point features + cross-validated SVM evaluation")
    common(p)
    p.add_argument("--output", help="PLY with predicted labels")
    p.add_argument("--report", required=True)
    p.add_argument("--weights", help="PWNF weights file (default: seeded initialization)")
    p.add_argument("--block-size", type=float)
    p.add_argument("--points-per-block", type=int)
    p.add_argument("--min-points", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--C", type=float)
    p.add_argument("--kernel", choices=("linear", "rbf"))
    p.add_argument("--gamma")
    p.add_argument("--tol", type=float)
    p.add_argument("--scaler", choices=("minmax", "standardize", "both", "none"))
    p.add_argument("--include-coords", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--max-rows", type=int)
    p.set_defaults(func=run_segment)

    p = sub.add_parser("weights", help="write seeded network weights")
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=run_weights)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except InvalidParameterError as exc:
        print(f"bimcloud: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InvalidParameterError as exc:
        print(f"bimcloud: invalid argument: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except (FormatError, ShapeError, OSError) as exc:
        print(f"bimcloud: {exc}", file=sys.stderr)
        return EXIT_IO
    except BimcloudError as exc:
        print(f"bimcloud: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ALGO


if __name__ == "__main__":
    sys.exit(main())
