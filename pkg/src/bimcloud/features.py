"""Room blocks and the forward-only point-wise feature network.

Each block is an n x 3 matrix of centered coordinates. Five shared affine
layers (widths 64, 64, 64, 128, 1024) act on every point independently,
max-pooling gives a 1 x 1024 block descriptor, and two fully connected
layers (1024 -> 512 -> 128) compress it. Every point's feature row is its
own 1024-vector followed by the block's 128-vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import PointCloud
from .errors import EmptyInputError, InvalidParameterError, ShapeError
from .io import WeightsFile

POINT_WIDTHS = (64, 64, 64, 128, 1024)
HEAD_WIDTHS = (512, 128)
LAYER_PLAN = [(64, 3), (64, 64), (64, 64), (128, 64), (1024, 128), (512, 1024), (128, 512)]
FEATURE_WIDTH = POINT_WIDTHS[-1] + HEAD_WIDTHS[-1]


@dataclass(frozen=True)
class BlockConfig:
    block_size: float = 1.0
    points_per_block: int = 4096
    min_points: int = 100
    seed: int = 0

    def __post_init__(self):
        if not self.block_size > 0:
            raise InvalidParameterError(f"block_size must be > 0, got {self.block_size}")
        if self.points_per_block < 1:
            raise InvalidParameterError(f"points_per_block must be >= 1, got {self.points_per_block}")
        if self.min_points < 1:
            raise InvalidParameterError(f"min_points must be >= 1, got {self.min_points}")
        if self.seed < 0:
            raise InvalidParameterError("seed must be non-negative")


@dataclass(frozen=True, eq=False)
class Block:
    indices: np.ndarray
    coords: np.ndarray
    origin: np.ndarray
    cell: tuple


def block_cells(room: PointCloud, block_size: float):
    """Grid shape and per-point (i, j) footprint cell, before any sampling."""
    xy = room.points[:, :2]
    lo = xy.min(axis=0)
    extent = xy.max(axis=0) - lo
    shape = np.maximum(1, np.ceil(extent / block_size).astype(np.int64))
    cells = np.floor((xy - lo) / block_size).astype(np.int64)
    cells = np.minimum(cells, shape - 1)
    return lo, shape, cells


def partition_blocks(room: PointCloud, config: BlockConfig = BlockConfig(),
                     floor_altitude: Optional[float] = None) -> list[Block]:
    """Tile the horizontal footprint and resample each populated cell to exactly n points.

    Coordinates are shifted so x, y are relative to the block center and z
    to ``floor_altitude`` (the room's lowest z when not given).
    """
    if len(room) == 0:
        raise EmptyInputError("cannot partition an empty room")
    lo, shape, cells = block_cells(room, config.block_size)
    z0 = float(room.points[:, 2].min()) if floor_altitude is None else float(floor_altitude)
    flat = cells[:, 0] * shape[1] + cells[:, 1]
    order = np.argsort(flat, kind="stable")
    keys, starts = np.unique(flat[order], return_index=True)
    ends = np.r_[starts[1:], len(order)]
    n = config.points_per_block
    blocks = []
    for key, s, e in zip(keys, starts, ends):
        members = order[s:e]
        if len(members) < config.min_points:
            continue
        rng = np.random.default_rng([config.seed, int(key)])
        pick = rng.choice(len(members), size=n, replace=len(members) < n)
        idx = members[pick]
        i, j = divmod(int(key), int(shape[1]))
        origin = np.array([lo[0] + (i + 0.5) * config.block_size, lo[1] + (j + 0.5) * config.block_size, z0])
        blocks.append(Block(idx, room.points[idx] - origin, origin, (i, j)))
    return blocks


def init_weights(seed: int = 0) -> WeightsFile:
    """Glorot-uniform float32 weights for :data:`LAYER_PLAN`, zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    for rows, cols in LAYER_PLAN:
        limit = np.sqrt(6.0 / (rows + cols))
        w = rng.uniform(-limit, limit, size=(rows, cols)).astype(np.float32)
        layers.append((w, np.zeros(rows, dtype=np.float32)))
    return WeightsFile(layers)


def check_weights(weights: WeightsFile) -> None:
    if weights.shapes != LAYER_PLAN:
        raise ShapeError(f"weights layer plan mismatch: expected {LAYER_PLAN}, found {weights.shapes}")


def _affine(x, layer):
    w, b = layer
    return x @ w.T.astype(np.float64) + b.astype(np.float64)


def forward_pointwise(coords: np.ndarray, weights: WeightsFile) -> np.ndarray:
    """Per-point n x 1024 features; ReLU after the first four layers only."""
    x = np.asarray(coords, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != weights.layers[0][0].shape[1]:
        raise ShapeError(f"block matrix must be n x {weights.layers[0][0].shape[1]}, got {x.shape}")
    for i in range(len(POINT_WIDTHS)):
        layer = weights.layers[i]
        if layer[0].shape[1] != x.shape[1]:
            raise ShapeError(f"layer {i} expects width {layer[0].shape[1]}, got {x.shape[1]}")
        x = _affine(x, layer)
        if i < len(POINT_WIDTHS) - 1:
            np.maximum(x, 0.0, out=x)
    return x


def global_feature(local: np.ndarray) -> np.ndarray:
    local = np.asarray(local)
    if local.ndim != 2 or local.shape[0] == 0:
        raise EmptyInputError("max-pooling needs at least one row")
    return local.max(axis=0, keepdims=True)


def fc_head(global_vec: np.ndarray, weights: WeightsFile) -> np.ndarray:
    """1 x 1024 -> 1 x 128 through two affine layers, ReLU between them."""
    x = np.asarray(global_vec, dtype=np.float64).reshape(1, -1)
    first, second = weights.layers[len(POINT_WIDTHS)], weights.layers[len(POINT_WIDTHS) + 1]
    if x.shape[1] != first[0].shape[1] or second[0].shape[1] != first[0].shape[0]:
        raise ShapeError(f"head expects input width {first[0].shape[1]}, got {x.shape[1]}")
    return _affine(np.maximum(_affine(x, first), 0.0), second)


def concat_features(local: np.ndarray, head: np.ndarray) -> np.ndarray:
    local = np.asarray(local)
    head = np.asarray(head).reshape(1, -1) if np.ndim(head) == 1 else np.asarray(head)
    if local.ndim != 2 or head.shape[0] != 1:
        raise ShapeError(f"cannot concatenate local {local.shape} with head {head.shape}")
    return np.hstack([local, np.repeat(head, local.shape[0], axis=0)])


@dataclass
class FeatureMatrix:
    values: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        if len(self.values) != len(self.indices):
            raise ShapeError("feature rows and source indices differ in length")


def block_features(block: Block, weights: WeightsFile, include_coords: bool = False) -> FeatureMatrix:
    local = forward_pointwise(block.coords, weights)
    feats = concat_features(local, fc_head(global_feature(local), weights))
    if include_coords:
        feats = np.hstack([feats, block.coords])
    return FeatureMatrix(feats, block.indices)


def room_features(room: PointCloud, weights: WeightsFile, config: BlockConfig = BlockConfig(),
                  include_coords: bool = False, floor_altitude: Optional[float] = None) -> FeatureMatrix:
    """Feature rows for every point that was drawn into some block, one row per point.

    Duplicates from with-replacement sampling are collapsed (a point's row is
    identical each time it is drawn within a block); rows are ordered by
    source index.
    """
    check_weights(weights)
    rows, idx = [], []
    for block in partition_blocks(room, config, floor_altitude):
        fm = block_features(block, weights, include_coords)
        uniq, first = np.unique(fm.indices, return_index=True)
        rows.append(fm.values[first])
        idx.append(uniq)
    width = FEATURE_WIDTH + (3 if include_coords else 0)
    if not rows:
        return FeatureMatrix(np.zeros((0, width)), np.zeros(0, dtype=np.int64))
    values, indices = np.vstack(rows), np.concatenate(idx)
    order = np.argsort(indices, kind="stable")
    return FeatureMatrix(values[order], indices[order])


# -- scaling ---------------------------------------------------------------

SCALER_MODES = ("minmax", "standardize", "both")


@dataclass(frozen=True, eq=False)
class ScalerParams:
    """Columnwise affine map ``(x - shift) / scale``; columns with ``scale == 0`` map to 0.

    For ``minmax`` shift/scale are min and range, for ``standardize`` mean and
    population std. ``both`` chains minmax then standardize and stores the
    composed map.
    """

    mode: str
    shift: np.ndarray
    scale: np.ndarray

    def apply(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != len(self.shift):
            raise ShapeError(f"scaler fitted on {len(self.shift)} columns, got {x.shape}")
        safe = np.where(self.scale > 0, self.scale, 1.0)
        out = (x - self.shift) / safe
        out[:, self.scale == 0] = 0.0
        return out

    def invert(self, scaled) -> np.ndarray:
        return np.asarray(scaled, dtype=np.float64) * self.scale + self.shift


def fit_scaler(features, mode: str = "standardize") -> ScalerParams:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptyInputError("cannot fit a scaler on no rows")
    if mode == "minmax":
        lo, hi = x.min(axis=0), x.max(axis=0)
        return ScalerParams(mode, lo, hi - lo)
    if mode == "standardize":
        mean = x.mean(axis=0)
        std = np.sqrt(np.mean((x - mean) ** 2, axis=0))
        # floating noise on a constant column must not count as spread
        std[x.min(axis=0) == x.max(axis=0)] = 0.0
        return ScalerParams(mode, mean, std)
    if mode == "both":
        mm = fit_scaler(x, "minmax")
        st = fit_scaler(mm.apply(x), "standardize")
        return ScalerParams(mode, mm.shift + st.shift * mm.scale, st.scale * mm.scale)
    raise InvalidParameterError(f"unknown scaler mode {mode!r}; expected one of {SCALER_MODES}")


def apply_scaler(features, params: ScalerParams) -> np.ndarray:
    return params.apply(features)
