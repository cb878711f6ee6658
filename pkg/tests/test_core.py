import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bimcloud.core import (
    PointCloud,
    auto_cell_size,
    bounding_box,
    build_neighbor_index,
    k_nearest,
    radius_neighbors,
)
from bimcloud.errors import EmptyInputError, InvalidParameterError

from conftest import brute_knn, brute_radius

coords = st.floats(-10, 10, allow_nan=False, allow_infinity=False, width=64)


def test_pointcloud_copies_and_freezes():
    src = np.zeros((4, 3))
    cloud = PointCloud(src, labels=[0, 1, 2, 3])
    src[0, 0] = 5.0
    assert cloud.points[0, 0] == 0.0
    with pytest.raises(ValueError):
        cloud.points[0, 0] = 1.0
    assert cloud.labels.dtype == np.int64


@pytest.mark.parametrize("bad", [np.zeros((3, 2)), np.array([[0, 0, np.nan]]), np.array([[np.inf, 0, 0]])])
def test_pointcloud_rejects_bad_points(bad):
    with pytest.raises(InvalidParameterError):
        PointCloud(bad)


def test_pointcloud_rejects_mismatched_attributes():
    with pytest.raises(InvalidParameterError):
        PointCloud(np.zeros((3, 3)), colors=np.zeros((2, 3)))
    with pytest.raises(InvalidParameterError):
        PointCloud(np.zeros((3, 3)), colors=np.full((3, 3), 300))
    with pytest.raises(InvalidParameterError):
        PointCloud(np.zeros((3, 3)), intensities=[1.0])


def test_empty_cloud_is_allowed():
    cloud = PointCloud(np.zeros((0, 3)))
    assert len(cloud) == 0


def test_subset_keeps_attributes():
    cloud = PointCloud(np.arange(12.0).reshape(4, 3), colors=np.arange(12).reshape(4, 3), labels=[5, 6, 7, 8])
    sub = cloud.subset([2, 0])
    assert sub.points.tolist() == [[6, 7, 8], [0, 1, 2]]
    assert sub.labels.tolist() == [7, 5]
    assert sub.colors.tolist() == [[6, 7, 8], [0, 1, 2]]


def test_bounding_box():
    box = bounding_box(PointCloud([[0, 1, 2], [3, -1, 5]]))
    assert box.min.tolist() == [0, -1, 2]
    assert box.max.tolist() == [3, 1, 5]
    assert box.contains([1, 0, 3])
    assert not box.contains([4, 0, 3])
    with pytest.raises(EmptyInputError):
        bounding_box(PointCloud(np.zeros((0, 3))))


def test_index_validation():
    cloud = PointCloud(np.zeros((2, 3)))
    with pytest.raises(InvalidParameterError):
        build_neighbor_index(cloud, 0.0)
    with pytest.raises(EmptyInputError):
        build_neighbor_index(PointCloud(np.zeros((0, 3))), 1.0)
    index = build_neighbor_index(cloud, 1.0)
    with pytest.raises(InvalidParameterError):
        k_nearest(index, [0, 0, 0], 0)
    with pytest.raises(InvalidParameterError):
        radius_neighbors(index, [0, 0, 0], -1.0)


def test_k_larger_than_n_returns_all():
    cloud = PointCloud(np.random.default_rng(0).normal(size=(5, 3)))
    index = build_neighbor_index(cloud, 0.5)
    assert len(k_nearest(index, [0, 0, 0], 50)) == 5


def test_ties_break_by_index():
    pts = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, 0, 0]], dtype=float)
    index = build_neighbor_index(PointCloud(pts), 0.3)
    got = k_nearest(index, [0, 0, 0], 3)
    assert [i for i, _ in got] == [3, 0, 1]


@settings(max_examples=60, deadline=None)
@given(
    pts=arrays(np.float64, st.tuples(st.integers(1, 60), st.just(3)), elements=coords),
    query=arrays(np.float64, (3,), elements=coords),
    k=st.integers(1, 12),
    cell=st.floats(0.05, 8.0),
)
def test_knn_matches_exhaustive_scan(pts, query, k, cell):
    index = build_neighbor_index(PointCloud(pts), cell)
    got = k_nearest(index, query, k)
    want = brute_knn(pts, query, k)
    assert [i for i, _ in got] == [i for i, _ in want]
    assert np.allclose([d for _, d in got], [d for _, d in want])


@settings(max_examples=60, deadline=None)
@given(
    pts=arrays(np.float64, st.tuples(st.integers(1, 60), st.just(3)), elements=coords),
    query=arrays(np.float64, (3,), elements=coords),
    radius=st.floats(0.01, 10.0),
    cell=st.floats(0.05, 8.0),
)
def test_radius_matches_exhaustive_scan(pts, query, radius, cell):
    index = build_neighbor_index(PointCloud(pts), cell)
    assert radius_neighbors(index, query, radius) == brute_radius(pts, query, radius)


def test_duplicate_points_are_all_reported():
    pts = np.zeros((6, 3))
    index = build_neighbor_index(PointCloud(pts), 1.0)
    assert radius_neighbors(index, [0, 0, 0], 1e-9) == list(range(6))
    assert [i for i, _ in k_nearest(index, [0, 0, 0], 4)] == [0, 1, 2, 3]


def test_auto_cell_size_positive():
    cloud = PointCloud(np.random.default_rng(1).uniform(size=(1000, 3)))
    assert auto_cell_size(cloud, 16) > 0
    assert auto_cell_size(PointCloud(np.zeros((3, 3))), 16) == 1.0
