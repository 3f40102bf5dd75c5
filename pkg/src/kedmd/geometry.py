"""Boxes, sampling grids, distances and cluster assignment on point clouds.

Point clouds are plain float arrays of shape ``(n_points, dim)``.  All
distance computations are brute force (exact, deterministic); grids are
ordered lexicographically by coordinate, so every routine here returns
the same output for the same input on every run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "Box",
    "uniform_grid",
    "staggered_grid",
    "chebyshev_grid",
    "fill_distance",
    "dist_to_cloud",
    "min_dist_to_cloud",
    "nearest_neighbors",
    "ClusterAssignment",
    "build_clusters",
    "save_points_csv",
    "load_points_csv",
]

_CHUNK = 2048


@dataclass(frozen=True)
class Box:
    """Axis-aligned closed box, lower[i] < upper[i] componentwise."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("lower and upper must be 1-d and of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if not np.all(lo < hi):
            raise ValueError("box must satisfy lower < upper componentwise")
        object.__setattr__(self, "lower", tuple(float(v) for v in lo))
        object.__setattr__(self, "upper", tuple(float(v) for v in hi))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lower_arr(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    @property
    def upper_arr(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float)

    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper_arr - self.lower_arr))

    def edge_lengths(self) -> np.ndarray:
        return self.upper_arr - self.lower_arr

    def contains(self, points, tol: float = 1e-9) -> np.ndarray:
        """Boolean mask of rows lying in the closed box (with tolerance)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.all(pts >= self.lower_arr - tol, axis=1)
        ok &= np.all(pts <= self.upper_arr + tol, axis=1)
        return ok

    def scaled(self, factor: float) -> "Box":
        """Box shrunk toward its center by the given factor."""
        center = 0.5 * (self.lower_arr + self.upper_arr)
        half = 0.5 * factor * self.edge_lengths()
        return Box(tuple(center - half), tuple(center + half))


def _axis_lattice(lo: float, hi: float, delta: float, offset: float) -> np.ndarray:
    # lattice {(i + offset) * delta} intersected with [lo, hi], tolerant to
    # float rounding at the endpoints
    tol = 1e-9 * max(1.0, abs(lo), abs(hi), delta)
    i0 = math.ceil((lo - tol) / delta - offset)
    i1 = math.floor((hi + tol) / delta - offset)
    if i1 < i0:
        return np.empty(0)
    vals = (np.arange(i0, i1 + 1, dtype=float) + offset) * delta
    return np.clip(vals, lo, hi)


def _tensor_product(axes: list) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def uniform_grid(box: Box, delta: float) -> np.ndarray:
    """Points of the lattice ``delta * Z^n`` inside the box, lexicographic."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    axes = [_axis_lattice(lo, hi, delta, 0.0) for lo, hi in zip(box.lower, box.upper)]
    if any(a.size == 0 for a in axes):
        raise ValueError(f"uniform grid with delta={delta} is empty inside {box}")
    return _tensor_product(axes)


def staggered_grid(box: Box, delta: float) -> np.ndarray:
    """Points of the half-offset lattice ``delta * (Z + 1/2)^n`` in the box."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    axes = [_axis_lattice(lo, hi, delta, 0.5) for lo, hi in zip(box.lower, box.upper)]
    if any(a.size == 0 for a in axes):
        raise ValueError(f"staggered grid with delta={delta} is empty inside {box}")
    return _tensor_product(axes)


def chebyshev_grid(box: Box, points_per_axis: int) -> np.ndarray:
    """Tensor grid of Chebyshev-Lobatto nodes (endpoints included).

    On each axis the nodes are the affine image of
    ``-cos(pi * j / (m - 1))``, ``j = 0 .. m - 1``, listed in ascending
    order; the full grid is their lexicographic tensor product.
    """
    m = int(points_per_axis)
    if m < 2:
        raise ValueError(f"points_per_axis must be >= 2, got {points_per_axis}")
    ref = -np.cos(np.pi * np.arange(m) / (m - 1))
    axes = []
    for lo, hi in zip(box.lower, box.upper):
        axes.append(0.5 * (lo + hi) + 0.5 * (hi - lo) * ref)
    return _tensor_product(axes)


def min_dist_to_cloud(queries, cloud) -> np.ndarray:
    """Euclidean distance from each query row to the nearest cloud point."""
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    cloud = np.asarray(cloud, dtype=float)
    if cloud.ndim != 2 or cloud.shape[0] == 0:
        raise ValueError("cloud must be a nonempty (n_points, dim) array")
    if queries.shape[1] != cloud.shape[1]:
        raise ValueError(
            f"dimension mismatch: queries have dim {queries.shape[1]}, "
            f"cloud has dim {cloud.shape[1]}"
        )
    out = np.empty(queries.shape[0])
    for start in range(0, queries.shape[0], _CHUNK):
        block = queries[start : start + _CHUNK]
        out[start : start + _CHUNK] = cdist(block, cloud).min(axis=1)
    return out


def dist_to_cloud(x, cloud) -> float:
    """Distance from a single point to the nearest cloud point."""
    return float(min_dist_to_cloud(np.asarray(x, dtype=float)[None, :], cloud)[0])


def fill_distance(cloud, box: Box, probe_resolution: float | None = None) -> float:
    """Fill distance of the cloud in the box, estimated on a probe grid.

    Returns the maximum over a uniform probe grid (spacing at most
    ``probe_resolution``, endpoints included) of the distance to the
    cloud.  This is a lower bound on the true fill distance; the gap is
    at most ``probe_resolution * sqrt(dim) / 2``.  Default resolution is
    the shortest box edge divided by 400.
    """
    cloud = np.asarray(cloud, dtype=float)
    if probe_resolution is None:
        probe_resolution = float(np.min(box.edge_lengths())) / 400.0
    if not probe_resolution > 0:
        raise ValueError("probe_resolution must be positive")
    axes = []
    for lo, hi in zip(box.lower, box.upper):
        n = int(math.ceil((hi - lo) / probe_resolution)) + 1
        axes.append(np.linspace(lo, hi, n))
    probes = _tensor_product(axes)
    return float(min_dist_to_cloud(probes, cloud).max())


def nearest_neighbors(x, cloud, n_neighbors: int) -> np.ndarray:
    """Indices of the n nearest cloud points to x.

    Sorted by distance; exact ties are broken by the smaller index, so
    the result is deterministic.
    """
    cloud = np.asarray(cloud, dtype=float)
    x = np.asarray(x, dtype=float)
    if not 1 <= n_neighbors <= cloud.shape[0]:
        raise ValueError(
            f"n_neighbors must be in [1, {cloud.shape[0]}], got {n_neighbors}"
        )
    dists = cdist(x[None, :], cloud)[0]
    order = np.argsort(dists, kind="stable")
    return order[:n_neighbors]


@dataclass(frozen=True)
class ClusterAssignment:
    """Per-center nearest-neighbor clusters drawn from a micro point cloud.

    Attributes
    ----------
    centers : ndarray of shape (n_centers, dim)
    neighbor_indices : ndarray of shape (n_centers, n_neighbors)
        Row l lists the indices into the micro cloud assigned to center l.
    states : ndarray of shape (n_centers, n_neighbors, dim)
    controls : ndarray of shape (n_centers, n_neighbors, control_dim)
    radii : ndarray of shape (n_centers,)
        Max distance from each center to its assigned points.
    max_radius_eps : float
        Max of radii over all clusters.
    """

    centers: np.ndarray
    neighbor_indices: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    radii: np.ndarray
    max_radius_eps: float


def build_clusters(micro_states, micro_controls, centers, n_neighbors: int) -> ClusterAssignment:
    """Assign to each center its n nearest micro points and their controls."""
    micro_states = np.asarray(micro_states, dtype=float)
    micro_controls = np.asarray(micro_controls, dtype=float)
    centers = np.asarray(centers, dtype=float)
    if micro_states.ndim != 2 or centers.ndim != 2:
        raise ValueError("micro_states and centers must be 2-d arrays")
    if micro_controls.ndim != 2 or micro_controls.shape[0] != micro_states.shape[0]:
        raise ValueError("micro_controls must align row-wise with micro_states")
    if micro_states.shape[1] != centers.shape[1]:
        raise ValueError(
            f"dimension mismatch: micro dim {micro_states.shape[1]}, "
            f"center dim {centers.shape[1]}"
        )
    control_dim = micro_controls.shape[1]
    if n_neighbors < control_dim + 1:
        raise ValueError(
            f"n_neighbors={n_neighbors} too small: need at least control_dim + 1 "
            f"= {control_dim + 1} points per cluster"
        )
    if micro_states.shape[0] < n_neighbors:
        raise ValueError(
            f"insufficient micro data: {micro_states.shape[0]} points for "
            f"n_neighbors={n_neighbors}"
        )

    n_centers = centers.shape[0]
    idx = np.empty((n_centers, n_neighbors), dtype=np.int64)
    radii = np.empty(n_centers)
    for start in range(0, n_centers, 256):
        block = centers[start : start + 256]
        dists = cdist(block, micro_states)
        order = np.argsort(dists, axis=1, kind="stable")[:, :n_neighbors]
        idx[start : start + 256] = order
        radii[start : start + 256] = np.take_along_axis(dists, order, axis=1)[:, -1]
    return ClusterAssignment(
        centers=centers,
        neighbor_indices=idx,
        states=micro_states[idx],
        controls=micro_controls[idx],
        radii=radii,
        max_radius_eps=float(radii.max()) if n_centers else 0.0,
    )


def save_points_csv(path, points) -> None:
    """Write a point cloud to CSV with header x1,...,xn (round-trip exact)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    header = ",".join(f"x{i + 1}" for i in range(points.shape[1]))
    np.savetxt(path, points, delimiter=",", header=header, comments="", fmt="%.17g")


def load_points_csv(path) -> np.ndarray:
    pts = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return np.asarray(pts, dtype=float)
