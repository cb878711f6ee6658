"""Pipeline configuration: one section per stage, read from key=value text.

Example file::

    [clean]
    method = zscore
    threshold = auto

    [planes]
    t = 0.02
    seed = 7

Unknown sections or keys are rejected. Command-line flags override file values.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import InvalidParameterError


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise InvalidParameterError(f"not a boolean: {text!r}")


def parse_threshold(text) -> Optional[float]:
    """``auto`` (histogram-derived) or a positive number."""
    if text is None or (isinstance(text, str) and text.strip().lower() == "auto"):
        return None
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise InvalidParameterError(f"threshold must be 'auto' or a number, got {text!r}") from None
    if not value > 0:
        raise InvalidParameterError(f"threshold must be > 0, got {value}")
    return value


def parse_gamma(text) -> Optional[float]:
    if text is None or (isinstance(text, str) and text.strip().lower() == "auto"):
        return None
    value = float(text)
    if not value > 0:
        raise InvalidParameterError(f"gamma must be > 0, got {value}")
    return value


@dataclass
class CleanConfig:
    method: str = "zscore"
    axes: str = "xy"
    threshold: str = "auto"
    bins: int = 256
    cutoff: float = 0.001
    k: int = 16
    std_ratio: float = 2.0
    radius: float = 0.1
    min_neighbors: int = 4

    def validate(self):
        if self.method not in ("zscore", "statistical", "radius"):
            raise InvalidParameterError(f"unknown cleaning method {self.method!r}")
        if not self.axes or any(a not in "xyz" for a in self.axes.lower()):
            raise InvalidParameterError(f"axes must be letters from 'xyz', got {self.axes!r}")
        parse_threshold(self.threshold)
        if self.bins < 2:
            raise InvalidParameterError("bins must be >= 2")
        if not 0 < self.cutoff < 1:
            raise InvalidParameterError("cutoff must be in (0, 1)")
        if self.k < 1:
            raise InvalidParameterError("k must be >= 1")
        if self.std_ratio < 0:
            raise InvalidParameterError("std_ratio must be >= 0")
        if not self.radius > 0:
            raise InvalidParameterError("radius must be > 0")
        if self.min_neighbors < 1:
            raise InvalidParameterError("min_neighbors must be >= 1")


@dataclass
class PlanesConfig:
    t: float = 0.02
    iterations: int = 1000
    min_score: int = 5000
    max_planes: int = 20
    min_inliers: int = 500
    horiz_tol: float = 10.0
    vert_tol: float = 10.0
    seed: int = 0
    workers: int = 1

    def validate(self):
        if not self.t > 0:
            raise InvalidParameterError("t must be > 0")
        if self.iterations < 1:
            raise InvalidParameterError("iterations must be >= 1")
        if self.min_score < 3:
            raise InvalidParameterError("min_score must be >= 3")
        if self.max_planes < 1:
            raise InvalidParameterError("max_planes must be >= 1")
        if self.min_inliers < 3:
            raise InvalidParameterError("min_inliers must be >= 3")
        if not (0 <= self.horiz_tol <= 90 and 0 <= self.vert_tol <= 90):
            raise InvalidParameterError("angle tolerances must be within [0, 90] degrees")
        if self.seed < 0 or self.workers < 1:
            raise InvalidParameterError("seed must be >= 0 and workers >= 1")


@dataclass
class SegmentConfig:
    block_size: float = 1.0
    points_per_block: int = 4096
    min_points: int = 100
    seed: int = 0
    weights: str = ""
    folds: int = 10
    C: float = 10.0
    kernel: str = "rbf"
    gamma: str = "auto"
    tol: float = 1e-3
    max_passes: int = 10
    scaler: str = "both"
    include_coords: bool = False
    max_rows: int = 2000

    def validate(self):
        if not self.block_size > 0:
            raise InvalidParameterError("block_size must be > 0")
        if self.points_per_block < 1 or self.min_points < 1:
            raise InvalidParameterError("points_per_block and min_points must be >= 1")
        if self.seed < 0:
            raise InvalidParameterError("seed must be >= 0")
        if self.folds < 2:
            raise InvalidParameterError(f"folds must be >= 2, got {self.folds}")
        if not self.C > 0:
            raise InvalidParameterError("C must be > 0")
        if self.kernel not in ("linear", "rbf"):
            raise InvalidParameterError(f"unknown kernel {self.kernel!r}")
        parse_gamma(self.gamma)
        if not self.tol > 0 or self.max_passes < 1:
            raise InvalidParameterError("tol must be > 0 and max_passes >= 1")
        if self.scaler not in ("minmax", "standardize", "both", "none"):
            raise InvalidParameterError(f"unknown scaler {self.scaler!r}")
        if self.max_rows < self.folds:
            raise InvalidParameterError("max_rows must be at least the number of folds")


@dataclass
class SynthConfig:
    width: float = 4.0
    depth: float = 5.0
    height: float = 2.7
    points_per_face: int = 2000
    noise: float = 0.005
    outliers: float = 0.05
    outlier_scale: float = 1.5
    clutter: bool = True
    seed: int = 0

    def validate(self):
        # RoomSpec performs the checks
        self.room_spec()

    def room_spec(self):
        from .synth import DEFAULT_CLUTTER, RoomSpec

        return RoomSpec(self.width, self.depth, self.height, self.points_per_face, self.noise,
                        self.outliers, self.outlier_scale, DEFAULT_CLUTTER if self.clutter else (), self.seed)


@dataclass
class PipelineConfig:
    clean: CleanConfig = field(default_factory=CleanConfig)
    planes: PlanesConfig = field(default_factory=PlanesConfig)
    segment: SegmentConfig = field(default_factory=SegmentConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def validate(self):
        for f in dataclasses.fields(self):
            getattr(self, f.name).validate()


def _coerce(section: str, name: str, typ, text):
    try:
        if typ in (bool, "bool"):
            return text if isinstance(text, bool) else _parse_bool(str(text))
        if typ in (int, "int"):
            return int(text)
        if typ in (float, "float"):
            return float(text)
        return str(text)
    except ValueError:
        raise InvalidParameterError(f"[{section}] {name}: cannot parse {text!r} as {typ}") from None


def apply_overrides(cfg: PipelineConfig, section: str, values: dict) -> None:
    """Set ``values`` (already-parsed or text) on one section, rejecting unknown keys."""
    target = getattr(cfg, section, None)
    if target is None:
        raise InvalidParameterError(f"unknown config section [{section}]")
    types = {f.name: f.type for f in dataclasses.fields(target)}
    for key, value in values.items():
        if value is None:
            continue
        if key not in types:
            raise InvalidParameterError(f"unknown key {key!r} in section [{section}]")
        setattr(target, key, _coerce(section, key, types[key], value))


def load_config(path=None) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    text = Path(path).read_text(encoding="utf-8")
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise InvalidParameterError(f"config {path}: {exc}") from None
    for section in parser.sections():
        apply_overrides(cfg, section, dict(parser.items(section)))
    cfg.validate()
    return cfg
