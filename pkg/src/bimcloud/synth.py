"""Synthetic box rooms with per-point ground truth, used as test oracles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import PointCloud
from .errors import InvalidParameterError
from .planes import Plane, SurfaceClass

OUTLIER = -1


@dataclass(frozen=True)
class ClutterBox:
    center: tuple
    extents: tuple
    points: int = 600

    def __post_init__(self):
        if len(self.center) != 3 or len(self.extents) != 3:
            raise InvalidParameterError("clutter box center and extents need 3 components")
        if min(self.extents) <= 0 or self.points < 0:
            raise InvalidParameterError("clutter box extents must be positive and points >= 0")


DEFAULT_CLUTTER = (ClutterBox((2.6, 3.2, 0.5), (0.8, 0.6, 0.8), 600),)


@dataclass(frozen=True)
class RoomSpec:
    """Box room ``[0, width] x [0, depth] x [0, height]`` plus noise, clutter and outliers."""

    width: float = 4.0
    depth: float = 5.0
    height: float = 2.7
    points_per_face: int = 2000
    noise_sigma: float = 0.005
    outlier_fraction: float = 0.05
    outlier_scale: float = 1.5
    clutter: tuple = DEFAULT_CLUTTER
    seed: int = 0

    def __post_init__(self):
        if min(self.width, self.depth, self.height) <= 0:
            raise InvalidParameterError("room dimensions must be positive")
        if self.points_per_face < 0:
            raise InvalidParameterError("points_per_face must be >= 0")
        if self.noise_sigma < 0:
            raise InvalidParameterError("noise sigma must be >= 0")
        if not 0 <= self.outlier_fraction < 1:
            raise InvalidParameterError(f"outlier fraction must be in [0, 1), got {self.outlier_fraction}")
        if self.outlier_scale < 1:
            raise InvalidParameterError(f"outlier bbox scale must be >= 1, got {self.outlier_scale}")
        if self.seed < 0:
            raise InvalidParameterError("seed must be non-negative")


@dataclass
class GroundTruth:
    surface_ids: np.ndarray
    classes: np.ndarray
    planes: dict
    surface_classes: dict
    outlier: np.ndarray = field(default=None)

    def to_dict(self) -> dict:
        return {
            "kind": "ground_truth",
            "surfaces": [
                {"id": sid, "class": SurfaceClass(self.surface_classes[sid]).label, **self.planes[sid].to_dict()}
                for sid in sorted(self.planes)
            ],
            "surface_ids": [int(v) for v in self.surface_ids],
            "outlier": [bool(v) for v in self.outlier],
        }


# face id -> (axis fixed, value selector, class)
_FACES = (
    (2, "low", SurfaceClass.FLOOR),
    (2, "high", SurfaceClass.CEILING),
    (0, "low", SurfaceClass.WALL),
    (0, "high", SurfaceClass.WALL),
    (1, "low", SurfaceClass.WALL),
    (1, "high", SurfaceClass.WALL),
)


def _face_points(rng, lo, hi, axis, side, count, sigma):
    pts = rng.uniform(lo, hi, size=(count, 3))
    pts[:, axis] = lo[axis] if side == "low" else hi[axis]
    if sigma > 0:
        pts[:, axis] += rng.normal(0.0, sigma, size=count)
    return pts


def _axis_plane(axis: int, value: float) -> Plane:
    n = np.zeros(3)
    n[axis] = 1.0
    return Plane(n, -value)


def generate_room(spec: RoomSpec = RoomSpec()):
    """Sample a room; returns ``(cloud, truth)``.

    Point order is: the six faces (floor, ceiling, walls x=0, x=w, y=0, y=d),
    then clutter-box faces, then outliers. Cloud labels carry the surface
    class of each point, with -1 for outliers.
    """
    rng = np.random.default_rng(spec.seed)
    lo = np.zeros(3)
    hi = np.array([spec.width, spec.depth, spec.height], dtype=np.float64)
    chunks, sids, planes, sclasses = [], [], {}, {}

    for sid, (axis, side, cls) in enumerate(_FACES):
        chunks.append(_face_points(rng, lo, hi, axis, side, spec.points_per_face, spec.noise_sigma))
        sids.append(np.full(spec.points_per_face, sid))
        planes[sid] = _axis_plane(axis, lo[axis] if side == "low" else hi[axis])
        sclasses[sid] = int(cls)

    sid = len(_FACES)
    for box in spec.clutter:
        blo = np.asarray(box.center, float) - np.asarray(box.extents, float) / 2
        bhi = blo + np.asarray(box.extents, float)
        areas = []
        for axis in range(3):
            others = [a for a in range(3) if a != axis]
            areas += [box.extents[others[0]] * box.extents[others[1]]] * 2
        counts = np.floor(box.points * np.asarray(areas) / sum(areas)).astype(int)
        counts[: box.points - counts.sum()] += 1
        for f, count in enumerate(counts):
            axis, side = f // 2, ("low", "high")[f % 2]
            chunks.append(_face_points(rng, blo, bhi, axis, side, count, spec.noise_sigma))
            sids.append(np.full(count, sid))
            planes[sid] = _axis_plane(axis, blo[axis] if side == "low" else bhi[axis])
            sclasses[sid] = int(SurfaceClass.OBJECT)
            sid += 1

    n_out = int(np.floor(spec.outlier_fraction * 6 * spec.points_per_face))
    center, half = (lo + hi) / 2, (hi - lo) / 2 * spec.outlier_scale
    chunks.append(rng.uniform(center - half, center + half, size=(n_out, 3)))
    sids.append(np.full(n_out, OUTLIER))

    points = np.concatenate(chunks) if chunks else np.zeros((0, 3))
    surface_ids = np.concatenate(sids).astype(np.int64)
    classes = np.array([sclasses[s] if s >= 0 else OUTLIER for s in surface_ids], dtype=np.int64)
    truth = GroundTruth(surface_ids, classes, planes, sclasses, surface_ids == OUTLIER)
    return PointCloud(points, labels=classes), truth


def truth_plane(truth: GroundTruth, surface_id: int) -> Plane:
    try:
        return truth.planes[surface_id]
    except KeyError:
        raise KeyError(f"unknown surface id {surface_id}") from None


ROOM_FACE_IDS = {"floor": 0, "ceiling": 1, "wall_x0": 2, "wall_xw": 3, "wall_y0": 4, "wall_yd": 5}
