"""Point-cloud container, bounding boxes and a uniform-grid neighbor index."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptyInputError, InvalidParameterError


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered 3D points with optional per-point color, intensity and label.

    Parameters
    ----------
    points : array of shape (n, 3)
        Coordinates in meters, stored as float64.
    colors : array of shape (n, 3), optional
        RGB values in 0..255, stored as uint8.
    intensities : array of shape (n,), optional
    labels : array of shape (n,), optional
        Integer class identifiers. Negative values mean "unlabeled".

    All arrays are copied and made read-only; non-finite coordinates are
    rejected.
    """

    points: np.ndarray
    colors: Optional[np.ndarray] = None
    intensities: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidParameterError(f"points must have shape (n, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            bad = int(np.flatnonzero(~np.isfinite(pts).all(axis=1))[0])
            raise InvalidParameterError(f"non-finite coordinate at point {bad}")
        n = len(pts)
        object.__setattr__(self, "points", _frozen(pts))

        if self.colors is not None:
            raw = np.asarray(self.colors)
            if raw.size and (raw.min() < 0 or raw.max() > 255):
                raise InvalidParameterError("colors must lie in 0..255")
            col = np.array(raw, dtype=np.uint8, copy=True).reshape(-1, 3) if raw.size else np.zeros((0, 3), np.uint8)
            if len(col) != n:
                raise InvalidParameterError(f"colors length {len(col)} != point count {n}")
            object.__setattr__(self, "colors", _frozen(col))
        if self.intensities is not None:
            inten = np.array(self.intensities, dtype=np.float64, copy=True).reshape(-1)
            if len(inten) != n:
                raise InvalidParameterError(f"intensities length {len(inten)} != point count {n}")
            object.__setattr__(self, "intensities", _frozen(inten))
        if self.labels is not None:
            lab = np.array(self.labels, copy=True).reshape(-1)
            if lab.size and not np.issubdtype(lab.dtype, np.integer):
                if not np.all(np.isfinite(lab)) or np.any(lab != np.round(lab)):
                    raise InvalidParameterError("labels must be integers")
            lab = lab.astype(np.int64)
            if len(lab) != n:
                raise InvalidParameterError(f"labels length {len(lab)} != point count {n}")
            object.__setattr__(self, "labels", _frozen(lab))

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, indices) -> "PointCloud":
        """Return the points at ``indices`` (in that order) with their attributes."""
        idx = np.asarray(indices, dtype=np.int64)
        return PointCloud(
            self.points[idx],
            None if self.colors is None else self.colors[idx],
            None if self.intensities is None else self.intensities[idx],
            None if self.labels is None else self.labels[idx],
        )

    def with_labels(self, labels) -> "PointCloud":
        return PointCloud(self.points, self.colors, self.intensities, labels)


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=np.float64)
        return bool(np.all(p >= self.min) and np.all(p <= self.max))

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min


def bounding_box(cloud: PointCloud) -> Aabb:
    if len(cloud) == 0:
        raise EmptyInputError("bounding box of an empty cloud")
    return Aabb(_frozen(cloud.points.min(axis=0)), _frozen(cloud.points.max(axis=0)))


class NeighborIndex:
    """Uniform grid of cubic cells over a cloud's bounding box.

    Each point index is stored in exactly one cell. Queries walk occupied
    cells in order of Chebyshev cell distance from the query's cell and stop
    once no unvisited cell can hold a closer point, so results match an
    exhaustive scan.
    """

    def __init__(self, points: np.ndarray, cell_size: float):
        self.points = points
        self.cell_size = float(cell_size)
        self.origin = points.min(axis=0)
        cells = np.floor((points - self.origin) / self.cell_size).astype(np.int64)
        occupied, inverse = np.unique(cells, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        order = np.argsort(inverse, kind="stable")
        bounds = np.searchsorted(inverse[order], np.arange(len(occupied) + 1))
        self.occupied = occupied
        self.buckets = [order[bounds[i]:bounds[i + 1]] for i in range(len(occupied))]

    def __len__(self) -> int:
        return len(self.points)

    def cell_of(self, query) -> np.ndarray:
        return np.floor((np.asarray(query, dtype=np.float64) - self.origin) / self.cell_size).astype(np.int64)

    def _rings(self, query):
        """Yield (ring, indices in all cells of that ring) in increasing ring order."""
        cheb = np.abs(self.occupied - self.cell_of(query)).max(axis=1)
        order = np.argsort(cheb, kind="stable")
        rings = cheb[order]
        starts = np.flatnonzero(np.r_[True, rings[1:] != rings[:-1]])
        ends = np.r_[starts[1:], len(order)]
        for s, e in zip(starts, ends):
            yield int(rings[s]), np.concatenate([self.buckets[c] for c in order[s:e]])

    def _distances(self, idx, query):
        diff = self.points[idx] - np.asarray(query, dtype=np.float64)
        return np.sqrt((diff * diff).sum(axis=1))


def build_neighbor_index(cloud: PointCloud, cell_size: float) -> NeighborIndex:
    if not cell_size > 0:
        raise InvalidParameterError(f"cell size must be positive, got {cell_size}")
    if len(cloud) == 0:
        raise EmptyInputError("cannot index an empty cloud")
    return NeighborIndex(cloud.points, cell_size)


def k_nearest(index: NeighborIndex, query, k: int) -> list[tuple[int, float]]:
    """The ``min(k, n)`` nearest points as ``(index, distance)`` pairs.

    Sorted by distance, ties broken by ascending point index.
    """
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    if len(index) == 0:
        raise EmptyInputError("empty neighbor index")
    k = min(k, len(index))
    idx = np.empty(0, dtype=np.int64)
    dist = np.empty(0)
    for ring, found in index._rings(query):
        idx = np.concatenate([idx, found])
        dist = np.concatenate([dist, index._distances(found, query)])
        if len(idx) >= k:
            order = np.lexsort((idx, dist))[:k]
            idx, dist = idx[order], dist[order]
            # unvisited cells are at least ring * cell_size away; strict to keep index tie-breaks exact
            if dist[-1] < ring * index.cell_size:
                break
    order = np.lexsort((idx, dist))[:k]
    return [(int(i), float(d)) for i, d in zip(idx[order], dist[order])]


def radius_neighbors(index: NeighborIndex, query, radius: float) -> list[int]:
    """Indices of all points within the closed ball of ``radius``, ascending."""
    if not radius > 0:
        raise InvalidParameterError(f"radius must be positive, got {radius}")
    reach = int(np.floor(radius / index.cell_size)) + 1
    cheb = np.abs(index.occupied - index.cell_of(query)).max(axis=1)
    cells = np.flatnonzero(cheb <= reach)
    if len(cells) == 0:
        return []
    idx = np.concatenate([index.buckets[c] for c in cells])
    hit = idx[index._distances(idx, query) <= radius]
    return [int(i) for i in np.sort(hit)]


def auto_cell_size(cloud: PointCloud, per_cell: int) -> float:
    """Cell size giving roughly ``per_cell`` points per occupied cell of a volume fill."""
    extent = float(np.max(bounding_box(cloud).extent))
    if extent == 0.0:
        return 1.0
    per_axis = max(1, int(round((len(cloud) / max(per_cell, 1)) ** (1.0 / 3.0))))
    return extent / per_axis
