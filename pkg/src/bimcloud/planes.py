"""RANSAC plane detection, multi-plane extraction and floor/ceiling/wall labelling."""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import PointCloud
from .errors import (
    DegeneracyError,
    InsufficientInputError,
    InvalidParameterError,
    InvertedGeometryError,
)

logger = logging.getLogger(__name__)

UP = np.array([0.0, 0.0, 1.0])


class SurfaceClass(enum.IntEnum):
    FLOOR = 0
    CEILING = 1
    WALL = 2
    OBJECT = 3
    UNCLASSIFIED = 4

    @property
    def label(self) -> str:
        return self.name.capitalize()


def canonical_normal(normal: np.ndarray, offset: float) -> tuple[np.ndarray, float]:
    """Flip (normal, offset) so the largest-magnitude normal component is positive."""
    k = int(np.argmax(np.abs(normal)))
    if normal[k] < 0:
        return -normal, -offset
    return normal, offset


@dataclass(frozen=True, eq=False)
class Plane:
    """Plane ``normal . p + offset = 0`` with a unit, canonically oriented normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(n)
        if not norm > 0:
            raise DegeneracyError("plane normal has zero length")
        n, d = canonical_normal(n / norm, float(self.offset) / norm)
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(d))

    def distances(self, points: np.ndarray) -> np.ndarray:
        return np.abs(points @ self.normal + self.offset)

    def __eq__(self, other):
        return isinstance(other, Plane) and np.array_equal(self.normal, other.normal) and self.offset == other.offset

    def to_dict(self) -> dict:
        return {"normal": [float(v) for v in self.normal], "offset": self.offset}


@dataclass(frozen=True)
class RansacConfig:
    """``t`` inlier distance, ``N`` iteration cap, ``S`` consensus size that stops the search early."""

    t: float = 0.02
    N: int = 1000
    S: int = 5000
    seed: int = 0

    def __post_init__(self):
        if not self.t > 0:
            raise InvalidParameterError(f"RANSAC t must be > 0, got {self.t}")
        if self.N < 1:
            raise InvalidParameterError(f"RANSAC N must be >= 1, got {self.N}")
        if self.S < 3:
            raise InvalidParameterError(f"RANSAC S must be >= 3, got {self.S}")
        if self.seed < 0:
            raise InvalidParameterError(f"seed must be non-negative, got {self.seed}")


@dataclass(frozen=True, eq=False)
class PlaneSegment:
    plane: Plane
    inliers: np.ndarray
    centroid: np.ndarray
    surface_class: SurfaceClass = SurfaceClass.UNCLASSIFIED

    @property
    def score(self) -> int:
        return len(self.inliers)

    def altitude(self, up=UP) -> float:
        return float(self.centroid @ np.asarray(up, dtype=np.float64))

    def with_class(self, cls: SurfaceClass) -> "PlaneSegment":
        return PlaneSegment(self.plane, self.inliers, self.centroid, cls)

    def __eq__(self, other):
        return (
            isinstance(other, PlaneSegment)
            and self.plane == other.plane
            and np.array_equal(self.inliers, other.inliers)
            and np.array_equal(self.centroid, other.centroid)
            and self.surface_class == other.surface_class
        )

    def to_dict(self, up=UP) -> dict:
        return {
            "class": self.surface_class.label,
            "normal": [float(v) for v in self.plane.normal],
            "offset": self.plane.offset,
            "inlier_count": self.score,
            "mean_altitude": self.altitude(up),
        }


def _points(cloud) -> np.ndarray:
    return cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)


def plane_from_three_points(p1, p2, p3) -> Plane:
    p1, p2, p3 = (np.asarray(p, dtype=np.float64) for p in (p1, p2, p3))
    e1, e2 = p2 - p1, p3 - p1
    n = np.cross(e1, e2)
    scale = np.linalg.norm(e1) * np.linalg.norm(e2)
    if not np.linalg.norm(n) > 1e-12 * scale or scale == 0:
        raise DegeneracyError("collinear or coincident sample points")
    n = n / np.linalg.norm(n)
    centroid = (p1 + p2 + p3) / 3.0
    return Plane(n, -float(n @ centroid))


def point_plane_distance(plane: Plane, p) -> float:
    return float(abs(plane.normal @ np.asarray(p, dtype=np.float64) + plane.offset))


def consensus_set(cloud, plane: Plane, t: float) -> np.ndarray:
    """Ascending indices of points within ``t`` of ``plane`` (closed)."""
    if not t > 0:
        raise InvalidParameterError(f"t must be > 0, got {t}")
    return np.flatnonzero(plane.distances(_points(cloud)) <= t)


def refit_plane_lsq(cloud, indices) -> Plane:
    """Total-least-squares plane through the centroid of the selected points."""
    pts = _points(cloud)[np.asarray(indices, dtype=np.int64)]
    if len(pts) < 3:
        raise DegeneracyError(f"need at least 3 points to fit a plane, got {len(pts)}")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    evals, evecs = np.linalg.eigh(centered.T @ centered)
    scale = max(evals[2], 0.0)
    if not evals[1] > 1e-12 * scale or scale == 0:
        raise DegeneracyError("inliers are collinear or coincident")
    n = evecs[:, 0]
    return Plane(n, -float(n @ centroid))


def _segment(points: np.ndarray, plane: Plane, t: float) -> PlaneSegment:
    inliers = np.flatnonzero(plane.distances(points) <= t)
    centroid = points[inliers].mean(axis=0) if len(inliers) else np.full(3, np.nan)
    return PlaneSegment(plane, _readonly(inliers), _readonly(centroid))


def _candidate(points: np.ndarray, seed: int, iteration: int) -> Optional[Plane]:
    rng = np.random.default_rng([seed, iteration])
    i, j, k = rng.choice(len(points), size=3, replace=False)
    try:
        return plane_from_three_points(points[i], points[j], points[k])
    except DegeneracyError:
        return None


def _score_block(points, t, seed, iterations):
    """(iteration, score, plane) for each iteration; degenerate samples score -1."""
    out = []
    for it in iterations:
        plane = _candidate(points, seed, it)
        score = -1 if plane is None else int(np.count_nonzero(plane.distances(points) <= t))
        out.append((it, score, plane))
    return out


def ransac_plane(cloud, config: RansacConfig = RansacConfig(), workers: int = 1,
                 batch: int = 32) -> PlaneSegment:
    """Single-plane RANSAC.

    Iteration ``i`` draws its sample from an RNG seeded with ``(seed, i)``, so
    the result does not depend on ``workers``. The search stops at the first
    iteration whose consensus reaches ``S``; otherwise the best of ``N``
    (lowest iteration on ties) is taken. The winning model is refit on its
    inliers, and the returned inliers are the consensus of the refit plane.
    """
    points = _points(cloud)
    if len(points) < 3:
        raise InsufficientInputError(f"RANSAC needs at least 3 points, got {len(points)}")
    best = (-1, -1, None)  # (score, iteration, plane)
    winner = None
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for start in range(0, config.N, batch * max(workers, 1)):
            stop = min(config.N, start + batch * max(workers, 1))
            if pool is None:
                results = _score_block(points, config.t, config.seed, range(start, stop))
            else:
                chunks = [range(a, min(stop, a + batch)) for a in range(start, stop, batch)]
                results = [r for part in pool.map(lambda c: _score_block(points, config.t, config.seed, c), chunks)
                           for r in part]
            for it, score, plane in results:
                if score >= config.S:
                    winner = (it, score, plane)
                    break
                if score > best[0]:
                    best = (score, it, plane)
            if winner is not None:
                break
    finally:
        if pool is not None:
            pool.shutdown()

    if winner is None:
        if best[2] is None:
            raise DegeneracyError(f"all {config.N} samples were degenerate")
        _, it, plane = best
    else:
        it, _, plane = winner
    seed_inliers = np.flatnonzero(plane.distances(points) <= config.t)
    try:
        refit = refit_plane_lsq(points, seed_inliers)
    except DegeneracyError:
        refit = plane
    logger.debug("ransac: iteration %d chosen, %d seed inliers", it, len(seed_inliers))
    return _segment(points, refit, config.t)


def extract_planes(cloud, config: RansacConfig = RansacConfig(), max_planes: int = 20,
                   min_inliers: int = 500, workers: int = 1) -> list[PlaneSegment]:
    """Repeated RANSAC on the residual cloud; segments index the original cloud and are disjoint."""
    if max_planes < 1:
        raise InvalidParameterError(f"max_planes must be >= 1, got {max_planes}")
    if min_inliers < 3:
        raise InvalidParameterError(f"min_inliers must be >= 3, got {min_inliers}")
    points = _points(cloud)
    residual = np.arange(len(points))
    segments: list[PlaneSegment] = []
    while len(segments) < max_planes and len(residual) >= min_inliers:
        try:
            seg = ransac_plane(points[residual], config, workers)
        except (DegeneracyError, InsufficientInputError):
            if not segments:
                raise
            break
        if seg.score < min_inliers:
            break
        seg = PlaneSegment(seg.plane, _readonly(residual[seg.inliers]), seg.centroid)
        segments.append(seg)
        residual = np.setdiff1d(residual, seg.inliers, assume_unique=True)
    return segments


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def tilt_degrees(normal, up=UP) -> float:
    """Angle between a normal and ``up``, folded into [0, 90] degrees."""
    c = abs(float(np.dot(normal, up)))
    return float(np.degrees(np.arccos(min(1.0, c))))


def classify_segments(segments, cloud=None, up_axis=UP, horiz_tol_deg: float = 10.0,
                      vert_tol_deg: float = 10.0) -> list[PlaneSegment]:
    """Assign Floor / Ceiling / Wall / Object / Unclassified by normal tilt and altitude.

    Horizontal segments are ranked by mean inlier altitude: lowest is the
    floor, highest the ceiling, the rest are objects. A lone horizontal
    segment is the floor when it lies below the cloud's median altitude
    (requires ``cloud``), otherwise the ceiling.
    """
    if not segments:
        return []
    up = np.asarray(up_axis, dtype=np.float64)
    up = up / np.linalg.norm(up)
    out = []
    horizontal = []
    for i, seg in enumerate(segments):
        alpha = tilt_degrees(seg.plane.normal, up)
        if alpha <= horiz_tol_deg:
            horizontal.append(i)
            out.append(seg)
        elif 90.0 - alpha <= vert_tol_deg:
            out.append(seg.with_class(SurfaceClass.WALL))
        else:
            out.append(seg.with_class(SurfaceClass.UNCLASSIFIED))
    if len(horizontal) == 1:
        i = horizontal[0]
        if cloud is None:
            raise InvalidParameterError("a cloud is needed to classify a single horizontal segment")
        median = float(np.median(_points(cloud) @ up))
        cls = SurfaceClass.FLOOR if segments[i].altitude(up) < median else SurfaceClass.CEILING
        out[i] = segments[i].with_class(cls)
    elif horizontal:
        alts = [segments[i].altitude(up) for i in horizontal]
        lo = horizontal[int(np.argmin(alts))]
        hi = horizontal[int(np.argmax(alts))]
        for i in horizontal:
            cls = SurfaceClass.FLOOR if i == lo else SurfaceClass.CEILING if i == hi else SurfaceClass.OBJECT
            out[i] = segments[i].with_class(cls)
    return out


def ceiling_height(floor: PlaneSegment, ceiling: PlaneSegment, up_axis=UP) -> float:
    up = np.asarray(up_axis, dtype=np.float64)
    up = up / np.linalg.norm(up)
    h = ceiling.altitude(up) - floor.altitude(up)
    if not h > 0:
        raise InvertedGeometryError(f"ceiling is not above floor (height {h:.4f} m)")
    return h


@dataclass
class WallSeparation:
    walls: list
    object_indices: np.ndarray
    other_segments: list


def separate_walls_from_objects(cloud, floor: Optional[PlaneSegment], ceiling: Optional[PlaneSegment],
                                config: RansacConfig = RansacConfig(), min_wall_inliers: int = 500,
                                max_planes: int = 20, up_axis=UP, vert_tol_deg: float = 10.0,
                                workers: int = 1) -> WallSeparation:
    """Split what remains after floor/ceiling removal into wall planes and object points.

    Wall segments and object indices partition the residual; indices refer
    to ``cloud``.
    """
    points = _points(cloud)
    taken = [s.inliers for s in (floor, ceiling) if s is not None]
    residual = np.setdiff1d(np.arange(len(points)), np.concatenate(taken) if taken else [])
    if len(residual) < max(3, min_wall_inliers):
        return WallSeparation([], residual, [])
    found = extract_planes(points[residual], config, max_planes, min_wall_inliers, workers)
    walls, others = [], []
    up = np.asarray(up_axis, dtype=np.float64)
    up = up / np.linalg.norm(up)
    for seg in found:
        seg = PlaneSegment(seg.plane, _readonly(residual[seg.inliers]), seg.centroid)
        if 90.0 - tilt_degrees(seg.plane.normal, up) <= vert_tol_deg:
            walls.append(seg.with_class(SurfaceClass.WALL))
        else:
            others.append(seg.with_class(SurfaceClass.OBJECT))
    wall_pts = np.concatenate([w.inliers for w in walls]) if walls else np.empty(0, np.int64)
    objects = np.setdiff1d(residual, wall_pts)
    return WallSeparation(walls, objects, others)
