import math

import numpy as np
import pytest

from orthoview.cloud_io import PointCloud, generate_shape
from orthoview.errors import BadResolution, EmptyCloud
from orthoview.ortho import VIEWS, ViewGrid, project, project_all

AXES = {"front": (1, 2, 0), "top": (0, 1, 2), "right": (0, 2, 1)}


def naive_raster(points, view, w, h):
    """Double-loop reference rasteriser, written independently of orthoview.ortho."""
    hor, ver, dep = AXES[view]
    nearest = [[None] * w for _ in range(h)]
    for p in points.tolist():
        col = min(max(math.floor((p[hor] + 1) / 2 * w), 0), w - 1)
        row = min(max(math.floor((p[ver] + 1) / 2 * h), 0), h - 1)
        d = min(max((p[dep] + 1) / 2, 0.0), 1.0)
        if nearest[row][col] is None or d < nearest[row][col]:
            nearest[row][col] = d
    grid = np.zeros((h, w))
    for row in range(h):
        for col in range(w):
            if nearest[row][col] is not None:
                grid[row, col] = max(1.0 - nearest[row][col], 1e-6)
    return grid


def random_canonical(rng, n):
    pts = rng.uniform(-1, 1, (n, 3))
    # sprinkle exact boundary values
    pts[: n // 10] = rng.choice([-1.0, 0.0, 1.0], (n // 10, 3))
    return PointCloud(pts)


def test_single_point_front_view():
    grid = project(PointCloud([[0, 0, 0]]), "front", (4, 4))
    assert np.count_nonzero(grid.values) == 1
    assert grid.values[2, 2] == 0.5


def test_nearest_plane_is_bright():
    ys, zs = np.meshgrid(np.linspace(-1, 1, 30), np.linspace(-1, 1, 30))
    plane = np.column_stack([-np.ones(ys.size), ys.ravel(), zs.ravel()])
    grid = project(PointCloud(plane), "front", (16, 16))
    occupied = grid.values[grid.values > 0]
    assert occupied.size > 0 and np.all(occupied == 1.0)


def test_far_points_stay_distinguishable_from_empty():
    grid = project(PointCloud([[1, 0, 0]]), "front", (4, 4))
    assert grid.values[2, 2] == 1e-6


def test_box_matches_naive_rasteriser():
    pts = generate_shape("box", (2, 2, 2), 5000, 0.0, seed=1).points
    for view in VIEWS:
        np.testing.assert_array_equal(project(PointCloud(pts), view, (32, 32)).values,
                                      naive_raster(pts, view, 32, 32))


def test_random_clouds_match_naive_rasteriser():
    rng = np.random.default_rng(8)
    for _ in range(20):
        cloud = random_canonical(rng, int(rng.integers(1, 400)))
        w, h = (int(v) for v in rng.integers(4, 40, 2))
        for view in VIEWS:
            np.testing.assert_array_equal(project(cloud, view, (w, h)).values,
                                          naive_raster(cloud.points, view, w, h))


def test_project_all_order_and_shape():
    grids = project_all(PointCloud([[0.1, 0.2, 0.3]]), (8, 6))
    assert [g.view for g in grids] == ["front", "top", "right"]
    assert all(g.resolution == (8, 6) and g.values.shape == (6, 8) for g in grids)


def test_top_view_transposes_under_xy_swap():
    rng = np.random.default_rng(3)
    half = rng.uniform(-1, 1, (500, 3))
    pts = np.vstack([half, half[:, [1, 0, 2]]])
    top = project(PointCloud(pts), "top", (24, 24)).values
    np.testing.assert_array_equal(top, top.T)


def test_errors():
    with pytest.raises(EmptyCloud):
        project_all(PointCloud(np.zeros((0, 3))))
    with pytest.raises(BadResolution):
        project(PointCloud([[0, 0, 0]]), "front", (3, 8))


def test_determinism_and_range():
    cloud = random_canonical(np.random.default_rng(1), 300)
    a, b = project_all(cloud, (16, 16)), project_all(cloud, (16, 16))
    for ga, gb in zip(a, b):
        assert ga.values.tobytes() == gb.values.tobytes()
        assert ga.values.min() >= 0 and ga.values.max() <= 1
        assert np.count_nonzero(ga.values) >= 1


@pytest.mark.parametrize("w", [8, 16, 32])
def test_resolution_refinement(w):
    rng = np.random.default_rng(w)
    for kind, dims in [("box", (2, 1.5, 1)), ("cylinder", (1, 2)), ("lshape", (2, 0.5))]:
        pts = generate_shape(kind, dims, 800, 0.0, seed=int(rng.integers(100))).points
        cloud = PointCloud(pts / np.abs(pts).max())
        for view in VIEWS:
            coarse = project(cloud, view, (w, w)).values > 0
            fine = project(cloud, view, (2 * w, 2 * w)).values > 0
            children = fine.reshape(w, 2, w, 2).any(axis=(1, 3))
            assert np.all(children[coarse])
            assert np.array_equal(children, coarse)


def test_exports():
    grid = ViewGrid("top", np.array([[0.0, 1.0], [0.5, 0.25]]))
    assert grid.to_csv() == "0.0,1.0\n0.5,0.25\n"
    pgm = grid.to_pgm()
    assert pgm.startswith(b"P5\n2 2\n255\n")
    # rows are flipped so the +1 edge is on top; 0.5*255 and 0.25*255 round to 128 and 64
    assert list(pgm[-4:]) == [128, 64, 0, 255]
