"""Outlier removal.

The main method filters one coordinate axis at a time: z-scores are computed
on the points that survived the previous axis, and points whose absolute
z-score exceeds a threshold are dropped. The threshold is either fixed or
read off a histogram of the axis' z-scores. Two neighborhood-based
baselines (statistical and radius removal) are provided for comparison.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import PointCloud, auto_cell_size, build_neighbor_index, k_nearest, radius_neighbors
from .errors import (
    EmptyInputError,
    InsufficientInputError,
    InvalidParameterError,
    ZeroVarianceError,
)

logger = logging.getLogger(__name__)

AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class AxisHistogram:
    axis: str
    edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        if len(self.counts) != len(self.edges) - 1:
            raise InvalidParameterError("histogram needs len(edges) == len(counts) + 1")
        if np.any(np.diff(self.edges) <= 0):
            raise InvalidParameterError("histogram edges must be strictly increasing")


@dataclass(frozen=True)
class ZScoreFilterConfig:
    """Axis order and threshold rule for :func:`zscore_axis_filter`.

    ``threshold=None`` selects the histogram-derived threshold using
    ``bins`` and ``cutoff_fraction``.
    """

    axes: tuple = ("x", "y")
    threshold: Optional[float] = None
    bins: int = 256
    cutoff_fraction: float = 0.001

    def __post_init__(self):
        axes = tuple(a.lower() for a in self.axes)
        if not axes:
            raise InvalidParameterError("at least one axis is required")
        unknown = [a for a in axes if a not in AXES]
        if unknown:
            raise InvalidParameterError(f"unknown axes {unknown}")
        object.__setattr__(self, "axes", axes)
        if self.threshold is not None and not self.threshold > 0:
            raise InvalidParameterError(f"fixed threshold must be > 0, got {self.threshold}")
        if self.bins < 2:
            raise InvalidParameterError(f"bins must be >= 2, got {self.bins}")
        if not 0 < self.cutoff_fraction < 1:
            raise InvalidParameterError(f"cutoff_fraction must be in (0, 1), got {self.cutoff_fraction}")


@dataclass
class StageReport:
    stage: str
    removed: int
    threshold: Optional[float] = None
    skipped: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        out = {"stage": self.stage, "removed_points": self.removed, "threshold": self.threshold, "skipped": self.skipped}
        if self.note:
            out["note"] = self.note
        return out


@dataclass
class CleaningReport:
    method: str
    total_points: int
    removed_points: int
    stages: list = field(default_factory=list)
    parameters: dict = field(default_factory=dict)

    @property
    def cleaning_portion_percent(self) -> float:
        if self.total_points == 0:
            return 0.0
        return self.removed_points / self.total_points * 100.0

    def to_dict(self) -> dict:
        return {
            "kind": "cleaning",
            "method": self.method,
            "total_points": self.total_points,
            "removed_points": self.removed_points,
            "cleaning_portion_percent": self.cleaning_portion_percent,
            "parameters": dict(self.parameters),
            "stages": [s.to_dict() for s in self.stages],
        }


@dataclass
class CleaningResult:
    kept: PointCloud
    kept_indices: np.ndarray
    removed_indices: np.ndarray
    report: CleaningReport


def _finish(cloud, removed_mask, report) -> CleaningResult:
    kept_idx = np.flatnonzero(~removed_mask)
    removed_idx = np.flatnonzero(removed_mask)
    report.removed_points = int(len(removed_idx))
    return CleaningResult(cloud.subset(kept_idx), kept_idx, removed_idx, report)


def axis_histogram(values, bins: int, axis: str = "") -> AxisHistogram:
    """Equal-width histogram over ``[min, max]``; the maximum falls in the last bin."""
    values = np.asarray(values, dtype=np.float64)
    if bins < 2:
        raise InvalidParameterError(f"bins must be >= 2, got {bins}")
    if values.size == 0:
        raise EmptyInputError("histogram of no values")
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        raise ZeroVarianceError(f"degenerate range: all values equal {lo}")
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    return AxisHistogram(axis, edges, counts)


def z_scores(values) -> np.ndarray:
    """Standard scores with the population standard deviation."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptyInputError("z-scores of no values")
    if values.min() == values.max():
        raise ZeroVarianceError("zero variance: all values are equal")
    mu = values.mean()
    sigma = np.sqrt(np.mean((values - mu) ** 2))
    if sigma == 0.0:
        # distinct values whose spread underflows
        raise ZeroVarianceError("zero variance: spread below floating-point resolution")
    return (values - mu) / sigma


def adaptive_threshold(hist: AxisHistogram, cutoff_fraction: float = 0.001) -> float:
    """Threshold (in the histogram's units) bounding the populated core around the mode.

    Starting at the peak bin, the run is grown left and right while each
    neighboring bin holds at least ``cutoff_fraction`` of the peak count.
    The threshold is the larger absolute value of the run's two outer edges.
    """
    counts = np.asarray(hist.counts)
    peak = int(np.argmax(counts))
    floor_count = cutoff_fraction * counts[peak]
    lo = peak
    while lo > 0 and counts[lo - 1] >= floor_count:
        lo -= 1
    hi = peak
    while hi < len(counts) - 1 and counts[hi + 1] >= floor_count:
        hi += 1
    return float(max(abs(hist.edges[lo]), abs(hist.edges[hi + 1])))


def zscore_axis_filter(cloud: PointCloud, config: ZScoreFilterConfig = ZScoreFilterConfig()) -> CleaningResult:
    """Sequential per-axis z-score filtration (X then Y by default).

    Each stage recomputes z-scores on the survivors of the previous stage.
    A stage whose axis has zero variance is skipped and flagged.
    """
    n = len(cloud)
    if n < 3:
        raise InsufficientInputError(f"z-score filtration needs at least 3 points, got {n}")
    report = CleaningReport(
        "zscore", n, 0,
        parameters={
            "axes": "".join(config.axes),
            "threshold": "auto" if config.threshold is None else config.threshold,
            "bins": config.bins,
            "cutoff_fraction": config.cutoff_fraction,
        },
    )
    removed = np.zeros(n, dtype=bool)
    for axis in config.axes:
        alive = np.flatnonzero(~removed)
        values = cloud.points[alive, AXES[axis]]
        try:
            z = z_scores(values)
        except (ZeroVarianceError, EmptyInputError):
            logger.info("axis %s has zero variance; stage skipped", axis)
            report.stages.append(StageReport(axis, 0, None, True, "zero variance"))
            continue
        if config.threshold is None:
            thr = adaptive_threshold(axis_histogram(z, config.bins, axis), config.cutoff_fraction)
        else:
            thr = float(config.threshold)
        out = np.abs(z) > thr
        removed[alive[out]] = True
        report.stages.append(StageReport(axis, int(out.sum()), thr))
        logger.debug("axis %s: threshold %.4f removed %d", axis, thr, int(out.sum()))
    return _finish(cloud, removed, report)


def mean_neighbor_distances(cloud: PointCloud, k: int, cell_size: Optional[float] = None) -> np.ndarray:
    """Mean distance from each point to its ``k`` nearest other points."""
    index = build_neighbor_index(cloud, cell_size or auto_cell_size(cloud, k))
    out = np.empty(len(cloud))
    for i, p in enumerate(cloud.points):
        hits = k_nearest(index, p, k + 1)
        # drop the point itself; with exact duplicates drop one zero-distance entry
        dists = [d for j, d in hits if j != i]
        out[i] = np.mean(dists[:k])
    return out


def statistical_outlier_removal(cloud: PointCloud, k: int = 16, std_ratio: float = 2.0,
                                cell_size: Optional[float] = None) -> CleaningResult:
    """Remove points whose mean k-NN distance exceeds ``mean + std_ratio * std``.

    Mean and (population) standard deviation are taken over all points.
    """
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    if len(cloud) <= k:
        raise InsufficientInputError(f"statistical removal needs more than k={k} points, got {len(cloud)}")
    report = CleaningReport("statistical", len(cloud), 0, parameters={"k": k, "std_ratio": std_ratio})
    mean_d = mean_neighbor_distances(cloud, k, cell_size)
    mu = mean_d.mean()
    sigma = np.sqrt(np.mean((mean_d - mu) ** 2))
    if sigma == 0:
        report.stages.append(StageReport("statistical", 0, None, True, "zero spread of neighbor distances"))
        return _finish(cloud, np.zeros(len(cloud), dtype=bool), report)
    limit = mu + std_ratio * sigma
    removed = mean_d > limit
    report.stages.append(StageReport("statistical", int(removed.sum()), float(limit)))
    return _finish(cloud, removed, report)


def radius_outlier_removal(cloud: PointCloud, radius: float = 0.1, min_neighbors: int = 4) -> CleaningResult:
    """Remove points with fewer than ``min_neighbors`` other points within ``radius``."""
    if not radius > 0:
        raise InvalidParameterError(f"radius must be positive, got {radius}")
    if min_neighbors < 1:
        raise InvalidParameterError(f"min_neighbors must be >= 1, got {min_neighbors}")
    report = CleaningReport("radius", len(cloud), 0, parameters={"radius": radius, "min_neighbors": min_neighbors})
    if len(cloud) == 0:
        return _finish(cloud, np.zeros(0, dtype=bool), report)
    index = build_neighbor_index(cloud, radius)
    counts = np.array([len(radius_neighbors(index, p, radius)) - 1 for p in cloud.points])
    removed = counts < min_neighbors
    report.stages.append(StageReport("radius", int(removed.sum()), float(radius)))
    return _finish(cloud, removed, report)


METHODS = ("zscore", "statistical", "radius")


def clean(cloud: PointCloud, method: str = "zscore", **params) -> CleaningResult:
    """Dispatch to one of :data:`METHODS`."""
    if method == "zscore":
        return zscore_axis_filter(cloud, ZScoreFilterConfig(**params))
    if method == "statistical":
        return statistical_outlier_removal(cloud, **params)
    if method == "radius":
        return radius_outlier_removal(cloud, **params)
    raise InvalidParameterError(f"unknown cleaning method {method!r}; expected one of {METHODS}")

