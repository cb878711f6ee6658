"""Building point-cloud cleaning, plane detection and per-point classification."""

from .core import PointCloud, bounding_box, build_neighbor_index, k_nearest, radius_neighbors
from .planes import Plane, PlaneSegment, RansacConfig, SurfaceClass

__version__ = "0.1.0"

__all__ = [
    "PointCloud", "bounding_box", "build_neighbor_index", "k_nearest", "radius_neighbors",
    "Plane", "PlaneSegment", "RansacConfig", "SurfaceClass",
]
