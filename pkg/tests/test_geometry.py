import numpy as np
import pytest

from kedmd import Box, build_clusters, chebyshev_grid, fill_distance, nearest_neighbors, staggered_grid, uniform_grid
from kedmd.geometry import dist_to_cloud, load_points_csv, min_dist_to_cloud, save_points_csv


def test_box_basics():
    box = Box((-2.0, -1.0), (2.0, 1.0))
    assert box.dim == 2
    assert box.diameter() == pytest.approx(np.hypot(4.0, 2.0))
    np.testing.assert_array_equal(box.edge_lengths(), [4.0, 2.0])
    inside = box.contains(np.array([[0.0, 0.0], [2.0, 1.0], [2.1, 0.0]]))
    np.testing.assert_array_equal(inside, [True, True, False])


def test_box_contains_tolerance():
    box = Box((0.0,), (1.0,))
    assert box.contains(np.array([[1.0 + 1e-12]]))[0]
    assert not box.contains(np.array([[1.0 + 1e-6]]))[0]


def test_box_scaled_keeps_center():
    box = Box((-2.0, 0.0), (2.0, 4.0))
    half = box.scaled(0.5)
    np.testing.assert_allclose(half.lower_arr, [-1.0, 1.0])
    np.testing.assert_allclose(half.upper_arr, [1.0, 3.0])


def test_box_validation():
    with pytest.raises(ValueError):
        Box((0.0, 0.0), (1.0,))
    with pytest.raises(ValueError):
        Box((1.0,), (0.0,))


def test_uniform_grid_small_exact():
    grid = uniform_grid(Box((0.0, 0.0), (1.0, 1.0)), 0.5)
    assert grid.shape == (9, 2)
    expected = {(a, b) for a in (0.0, 0.5, 1.0) for b in (0.0, 0.5, 1.0)}
    assert {tuple(row) for row in grid} == expected


def test_uniform_grid_hits_bounds_exactly():
    # 0.2 is not binary-exact; endpoints must still land on the bounds
    grid = uniform_grid(Box((-2.0, -2.0), (2.0, 2.0)), 0.2)
    assert grid.shape == (441, 2)
    assert grid.min() == -2.0
    assert grid.max() == 2.0


def test_uniform_grid_lexicographic_order():
    grid = uniform_grid(Box((0.0, 0.0), (1.0, 1.0)), 1.0)
    np.testing.assert_array_equal(grid, [[0, 0], [0, 1], [1, 0], [1, 1]])


def test_staggered_grid_avoids_boundary():
    box = Box((-2.0, -2.0), (2.0, 2.0))
    grid = staggered_grid(box, 0.2)
    assert grid.shape == (400, 2)
    assert box.contains(grid).all()
    # offset by half a cell: nearest lattice value is -1.9
    assert grid.min() == pytest.approx(-1.9)
    assert grid.max() == pytest.approx(1.9)
    lattice = uniform_grid(box, 0.2)
    d = min_dist_to_cloud(grid, lattice)
    assert d.min() > 0.1


def test_chebyshev_grid_reference_nodes():
    axis = chebyshev_grid(Box((-1.0,), (1.0,)), 5).ravel()
    expected = -np.cos(np.pi * np.arange(5) / 4)
    np.testing.assert_allclose(axis, expected, atol=1e-15)
    assert axis[0] == -1.0 and axis[-1] == 1.0
    assert np.all(np.diff(axis) > 0)


def test_chebyshev_grid_affine_map():
    grid = chebyshev_grid(Box((0.0, -2.0), (4.0, 2.0)), 3)
    assert grid.shape == (9, 2)
    xs = np.unique(grid[:, 0])
    np.testing.assert_allclose(xs, [0.0, 2.0, 4.0], atol=1e-15)
    ys = np.unique(grid[:, 1])
    np.testing.assert_allclose(ys, [-2.0, 0.0, 2.0], atol=1e-15)


def test_chebyshev_clusters_near_edges():
    axis = chebyshev_grid(Box((-1.0,), (1.0,)), 21).ravel()
    gaps = np.diff(axis)
    assert gaps[0] < gaps[len(gaps) // 2]


def test_min_dist_to_cloud_brute_force():
    rng = np.random.default_rng(3)
    cloud = rng.uniform(-1, 1, (40, 3))
    queries = rng.uniform(-1, 1, (17, 3))
    got = min_dist_to_cloud(queries, cloud)
    expected = np.array(
        [np.linalg.norm(cloud - q, axis=1).min() for q in queries]
    )
    np.testing.assert_allclose(got, expected, atol=1e-14)
    assert dist_to_cloud(queries[0], cloud) == pytest.approx(expected[0], abs=1e-14)


def test_fill_distance_of_uniform_grid():
    box = Box((0.0, 0.0), (1.0, 1.0))
    cloud = uniform_grid(box, 0.25)
    h = fill_distance(cloud, box, probe_resolution=0.01)
    # worst case is a cell center at distance 0.25 * sqrt(2) / 2
    target = 0.25 * np.sqrt(2) / 2
    assert h <= target + 1e-12
    assert h > 0.9 * target


def test_fill_distance_detects_gaps():
    box = Box((0.0,), (1.0,))
    dense = np.linspace(0, 1, 21)[:, None]
    sparse = np.array([[0.0], [1.0]])
    assert fill_distance(sparse, box, probe_resolution=0.01) > fill_distance(
        dense, box, probe_resolution=0.01
    )


def test_nearest_neighbors_matches_argsort_scan():
    rng = np.random.default_rng(9)
    cloud = rng.uniform(-1, 1, (50, 2))
    for _ in range(10):
        x = rng.uniform(-1, 1, 2)
        idx = nearest_neighbors(x, cloud, 7)
        dists = np.linalg.norm(cloud - x, axis=1)
        expected = np.argsort(dists, kind="stable")[:7]
        np.testing.assert_array_equal(idx, expected)


def test_nearest_neighbors_tie_breaking_is_by_index():
    cloud = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    idx = nearest_neighbors(np.zeros(2), cloud, 2)
    np.testing.assert_array_equal(idx, [0, 1])


def test_build_clusters_shapes_and_radii():
    rng = np.random.default_rng(7)
    states = rng.uniform(-1, 1, (200, 2))
    controls = rng.uniform(-1, 1, (200, 1))
    centers = rng.uniform(-1, 1, (10, 2))
    assignment = build_clusters(states, controls, centers, n_neighbors=12)
    assert assignment.neighbor_indices.shape == (10, 12)
    assert assignment.states.shape == (10, 12, 2)
    assert assignment.controls.shape == (10, 12, 1)
    for i in range(10):
        d = np.linalg.norm(states - centers[i], axis=1)
        expected = np.sort(d)[:12]
        got = np.linalg.norm(assignment.states[i] - centers[i], axis=1)
        np.testing.assert_allclose(np.sort(got), expected, atol=1e-14)
        assert assignment.radii[i] == pytest.approx(expected.max(), abs=1e-14)
    assert assignment.max_radius_eps == pytest.approx(assignment.radii.max())


def test_build_clusters_validation():
    states = np.zeros((5, 2))
    controls = np.zeros((5, 1))
    centers = np.zeros((2, 2))
    with pytest.raises(ValueError):
        build_clusters(states, controls, centers, n_neighbors=6)
    with pytest.raises(ValueError):
        build_clusters(states, controls, centers, n_neighbors=1)


def test_points_csv_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    pts = rng.uniform(-5, 5, (13, 3))
    path = tmp_path / "pts.csv"
    save_points_csv(path, pts)
    back = load_points_csv(path)
    np.testing.assert_array_equal(back, pts)
    header = path.read_text().splitlines()[0]
    assert header == "x1,x2,x3"
