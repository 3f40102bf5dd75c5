"""Control-affine surrogates from clustered input-state snapshots.

The fit proceeds in two stages.  Around each macro center, the nearest
micro snapshots ``(x, u, x+)`` form a cluster; a least-squares fit of
``x+ ~ H [1; u]`` recovers the local drift and input matrix stacked as
``H = [g0(center) | G(center)]``.  The per-center matrices are then
interpolated entry-wise in the native space of the kernel, yielding a
surrogate ``f(x, u) = g0(x) + G(x) u`` that is exactly affine in the
input.

Clusters whose control moment matrix ``U U'`` is numerically rank
deficient are rejected; their conditioning statistic
``sqrt(N) ||U_pinv|| = sqrt(N / lambda_min(U U'))`` enters the a
posteriori error diagnostic.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .geometry import ClusterAssignment, build_clusters, fill_distance, min_dist_to_cloud
from .interpolation import DEFAULT_JITTER_LADDER, KernelInterpolator, load_bundle, save_bundle

__all__ = [
    "ControlDataset",
    "ClusterRegression",
    "local_affine_fit",
    "ControlAffineSurrogate",
    "fit_control_surrogate",
    "conditioning_stats",
    "ones_term",
    "DiagnosticBreakdown",
    "error_diagnostic",
    "control_error_map",
    "sample_control_data",
    "save_control_surrogate",
    "load_control_surrogate",
    "DegenerateClusterError",
]

_INGEST_TOL = 1e-12


class DegenerateClusterError(RuntimeError):
    """Raised when too many clusters fail the rank condition to proceed."""


@dataclass(frozen=True)
class ControlDataset:
    """Micro snapshots ``(x, u, x+)`` with a declared control bound.

    Controls exceeding the bound in max norm are rejected at ingestion.
    Duplicate states are allowed (distinct controls at the same state
    carry information); centers used later for interpolation must be
    distinct, not the micro states.
    """

    states: np.ndarray
    controls: np.ndarray
    successors: np.ndarray
    control_bound: float

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        controls = np.asarray(self.controls, dtype=float)
        successors = np.asarray(self.successors, dtype=float)
        if states.ndim != 2 or successors.shape != states.shape:
            raise ValueError("states and successors must be equal-shape 2-d arrays")
        if controls.ndim != 2 or controls.shape[0] != states.shape[0]:
            raise ValueError("controls must align row-wise with states")
        for name, arr in (("states", states), ("controls", controls), ("successors", successors)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contain non-finite entries")
        bound = float(self.control_bound)
        if not bound >= 0:
            raise ValueError(f"control_bound must be nonnegative, got {self.control_bound}")
        over = np.abs(controls).max(axis=1) > bound + _INGEST_TOL
        if np.any(over):
            idx = np.nonzero(over)[0]
            raise ValueError(
                f"{idx.size} control rows exceed the declared bound {bound} "
                f"(first offenders: {idx[:5].tolist()})"
            )
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "successors", successors)
        object.__setattr__(self, "control_bound", bound)

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def control_dim(self) -> int:
        return self.controls.shape[1]

    def __len__(self) -> int:
        return self.states.shape[0]

    def to_csv(self, path) -> None:
        n, m = self.state_dim, self.control_dim
        header = ",".join(
            [f"x{i + 1}" for i in range(n)]
            + [f"u{j + 1}" for j in range(m)]
            + [f"xp{i + 1}" for i in range(n)]
        )
        data = np.column_stack([self.states, self.controls, self.successors])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path, control_bound: float | None = None) -> "ControlDataset":
        with open(path) as fh:
            names = fh.readline().strip().split(",")
        n = sum(1 for c in names if c.startswith("x") and not c.startswith("xp"))
        m = sum(1 for c in names if c.startswith("u"))
        expected = [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)] + [
            f"xp{i + 1}" for i in range(n)
        ]
        if names != expected:
            raise ValueError(
                f"unexpected control data header {names}; want x1..xn,u1..um,xp1..xpn"
            )
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        controls = data[:, n : n + m]
        if control_bound is None:
            control_bound = float(np.abs(controls).max()) if controls.size else 0.0
        return cls(
            states=data[:, :n],
            controls=controls,
            successors=data[:, n + m :],
            control_bound=control_bound,
        )


@dataclass
class ClusterRegression:
    """Per-cluster least-squares solutions and conditioning."""

    assignment: ClusterAssignment
    solutions: np.ndarray  # (n_centers, state_dim, control_dim + 1)
    lambda_min: np.ndarray
    conditioning: np.ndarray  # sqrt(n_neighbors) * ||pinv(U)||
    kept: np.ndarray  # bool mask

    @property
    def n_rejected(self) -> int:
        return int((~self.kept).sum())

    def to_csv(self, path) -> None:
        rows = np.column_stack(
            [
                np.arange(self.kept.size),
                self.lambda_min,
                self.conditioning,
                self.kept.astype(float),
            ]
        )
        np.savetxt(
            path,
            rows,
            delimiter=",",
            header="cluster,lambda_min,sqrt_n_pinv_norm,kept",
            comments="",
            fmt="%.17g",
        )


def local_affine_fit(controls, successors):
    """Least-squares fit of one cluster: ``x+ ~ H [1; u]``.

    Returns ``(H, lambda_min, sqrt(N) ||pinv(U)||)`` where ``U`` stacks
    a row of ones over the transposed controls.  The pseudoinverse is
    applied through a least-squares solve, never formed explicitly.
    """
    controls = np.asarray(controls, dtype=float)
    successors = np.asarray(successors, dtype=float)
    n_pts = controls.shape[0]
    U = np.vstack([np.ones(n_pts), controls.T])
    gram = U @ U.T
    lam_min = float(np.linalg.eigvalsh(gram)[0])
    sol, *_ = np.linalg.lstsq(U.T, successors, rcond=None)
    H = sol.T
    cond = float(np.sqrt(n_pts / lam_min)) if lam_min > 0 else float("inf")
    return H, lam_min, cond


class ControlAffineSurrogate(BaseEstimator):
    """Surrogate ``f(x, u) = g0(x) + G(x) u`` fitted from micro snapshots.

    Parameters
    ----------
    kernel : WendlandKernel
    n_neighbors : int, default=25
        Cluster size N; must be at least ``control_dim + 1``.
    lam : float, default=0.0
        Ridge parameter of the entry-wise interpolation.
    min_cluster_eig : float, default=1e-10
        Clusters with ``lambda_min(U U') < min_cluster_eig`` are
        rejected as rank deficient.
    max_reject_frac : float, default=0.1
        Abort the fit when more than this fraction of clusters is
        rejected.

    Attributes
    ----------
    interpolator_ : KernelInterpolator
        Entry-wise interpolant of the local matrices (kept centers).
    clusters_ : ClusterRegression
    centers_ : ndarray
        Kept centers.
    fill_distance_ : float or None
        Estimated when a domain is passed to ``fit``.
    """

    def __init__(
        self,
        kernel=None,
        n_neighbors: int = 25,
        lam: float = 0.0,
        min_cluster_eig: float = 1e-10,
        max_reject_frac: float = 0.1,
        jitter_ladder=DEFAULT_JITTER_LADDER,
        refine_steps: int = 1,
    ):
        self.kernel = kernel
        self.n_neighbors = n_neighbors
        self.lam = lam
        self.min_cluster_eig = min_cluster_eig
        self.max_reject_frac = max_reject_frac
        self.jitter_ladder = jitter_ladder
        self.refine_steps = refine_steps

    def fit(self, dataset: ControlDataset, centers, domain=None, probe_resolution=None):
        """Cluster the snapshots, fit local matrices, interpolate them."""
        centers = np.asarray(centers, dtype=float)
        assignment = build_clusters(
            dataset.states, dataset.controls, centers, self.n_neighbors
        )
        n_centers = centers.shape[0]
        n, m = dataset.state_dim, dataset.control_dim
        solutions = np.zeros((n_centers, n, m + 1))
        lam_min = np.zeros(n_centers)
        conditioning = np.full(n_centers, np.inf)
        kept = np.zeros(n_centers, dtype=bool)
        for ell in range(n_centers):
            idx = assignment.neighbor_indices[ell]
            H, lm, cond = local_affine_fit(dataset.controls[idx], dataset.successors[idx])
            solutions[ell] = H
            lam_min[ell] = lm
            conditioning[ell] = cond
            kept[ell] = lm >= self.min_cluster_eig
        self.clusters_ = ClusterRegression(
            assignment=assignment,
            solutions=solutions,
            lambda_min=lam_min,
            conditioning=conditioning,
            kept=kept,
        )
        n_rejected = self.clusters_.n_rejected
        if n_rejected > self.max_reject_frac * n_centers:
            raise DegenerateClusterError(
                f"{n_rejected} of {n_centers} clusters are rank deficient "
                f"(lambda_min < {self.min_cluster_eig}); the sampled controls do "
                "not excite the inputs"
            )
        targets = solutions[kept].reshape(kept.sum(), n * (m + 1))
        self.interpolator_ = KernelInterpolator(
            kernel=self.kernel,
            lam=self.lam,
            jitter_ladder=self.jitter_ladder,
            refine_steps=self.refine_steps,
        ).fit(centers[kept], targets)
        self.centers_ = centers[kept]
        self.state_dim_ = n
        self.control_dim_ = m
        self.control_bound_ = dataset.control_bound
        self.eps_ = assignment.max_radius_eps
        self.n_rejected_ = n_rejected
        self.fill_distance_ = None
        if domain is not None:
            self.fill_distance_ = fill_distance(self.centers_, domain, probe_resolution)
        return self

    def _matrices(self, pts):
        vals = self.interpolator_.predict(pts)
        return vals.reshape(pts.shape[0], self.state_dim_, self.control_dim_ + 1)

    def predict(self, X, U) -> np.ndarray:
        """Evaluate ``g0(x) + G(x) u`` for points and controls (rows)."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        pts = X[None, :] if single else X
        U = np.asarray(U, dtype=float)
        if U.ndim == 0:
            U = U[None]
        if U.ndim == 1:
            controls = np.broadcast_to(U, (pts.shape[0], U.shape[0]))
        else:
            controls = U
        if controls.shape != (pts.shape[0], self.control_dim_):
            raise ValueError(
                f"controls must broadcast to ({pts.shape[0]}, {self.control_dim_})"
            )
        H = self._matrices(pts)
        out = H[:, :, 0] + np.einsum("qnm,qm->qn", H[:, :, 1:], controls)
        return out[0] if single else out

    def drift(self, X) -> np.ndarray:
        """Uncontrolled part ``g0`` at the query points."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        pts = X[None, :] if single else X
        out = self._matrices(pts)[:, :, 0]
        return out[0] if single else out

    def control_matrix(self, X) -> np.ndarray:
        """Input matrix ``G`` at the query points, shape (..., n, m)."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        pts = X[None, :] if single else X
        out = self._matrices(pts)[:, :, 1:]
        return out[0] if single else out


def fit_control_surrogate(dataset, centers, **params):
    """Convenience wrapper; returns the surrogate and its cluster report."""
    surrogate = ControlAffineSurrogate(**params).fit(dataset, centers)
    return surrogate, surrogate.clusters_


def conditioning_stats(regression: ClusterRegression) -> dict:
    """Aggregate conditioning of the kept clusters."""
    kept = regression.kept
    vals = regression.conditioning[kept]
    return {
        "n_clusters": int(kept.size),
        "n_rejected": regression.n_rejected,
        "max": float(vals.max()) if vals.size else float("nan"),
        "median": float(np.median(vals)) if vals.size else float("nan"),
        "min_lambda_min": float(regression.lambda_min[kept].min()) if vals.size else float("nan"),
    }


def ones_term(kernel_matrix, crossover: int = 16):
    """Max of ``v' K^-1 v`` over sign vectors: exact or spectral bound.

    Up to ``crossover`` centers every sign vector is enumerated (the
    form is even, so half suffice); beyond that the bound
    ``d / lambda_min(K)`` is returned.  The second element names the
    method used ("exact" or "bound").
    """
    K = np.asarray(kernel_matrix, dtype=float)
    d = K.shape[0]
    if d <= crossover:
        signs = np.array(
            [[1.0] + [1.0 if (i >> b) & 1 else -1.0 for b in range(d - 1)]
             for i in range(2 ** (d - 1))]
        )
        sols = np.linalg.solve(K, signs.T)
        quads = np.einsum("qd,dq->q", signs, sols)
        return float(quads.max()), "exact"
    lam_min = float(np.linalg.eigvalsh(K)[0])
    return d / lam_min, "bound"


@dataclass(frozen=True)
class DiagnosticBreakdown:
    """Terms of the a posteriori error diagnostic at one point."""

    total: float
    geometry_term: float
    sampling_term: float
    dist_to_centers: float
    fill_distance: float
    norm_bound: float
    norm_source: str
    ones_term_value: float
    ones_term_method: str
    cluster_radius_eps: float


def error_diagnostic(
    surrogate: ControlAffineSurrogate,
    x,
    lipschitz_drift: float,
    lipschitz_gain: float,
    norm_bound: float | None = None,
    fill_dist: float | None = None,
    ones_crossover: int = 16,
) -> DiagnosticBreakdown:
    """A posteriori error indicator for the control surrogate at ``x``.

    Sums a geometry term, ``h^(k - 1/2) dist(x, centers) C_H`` with
    ``C_H`` a native-norm bound on the interpolated entries, and a
    sampling term proportional to the cluster radius ``eps``:

        sqrt(2 N) max||pinv(U)|| (L_g0 + L_G R) phi(0)^(1/2)
        (max over sign vectors of v' K^-1 v)^(1/2) eps.

    ``norm_bound=None`` substitutes the largest fitted-column native
    norm for ``C_H`` and records that choice in ``norm_source``.
    """
    x = np.asarray(x, dtype=float)
    h = fill_dist if fill_dist is not None else surrogate.fill_distance_
    if h is None:
        raise ValueError(
            "fill distance unavailable: fit with a domain or pass fill_dist"
        )
    if norm_bound is None:
        c_h = float(surrogate.interpolator_.native_norms().max())
        source = "fitted-native-norm"
    else:
        c_h = float(norm_bound)
        source = "declared"
    k = surrogate.kernel.smoothness
    dist = float(min_dist_to_cloud(x[None, :], surrogate.centers_)[0])
    term1 = h ** (k - 0.5) * dist * c_h

    regression = surrogate.clusters_
    max_pinv = float(
        (regression.conditioning[regression.kept] / np.sqrt(surrogate.n_neighbors)).max()
    )
    ones_val, ones_method = ones_term(
        surrogate.interpolator_._kernel_matrix(), crossover=ones_crossover
    )
    lip = lipschitz_drift + lipschitz_gain * surrogate.control_bound_
    phi0 = float(surrogate.kernel.profile(0.0))
    term2 = (
        np.sqrt(2.0 * surrogate.n_neighbors)
        * max_pinv
        * lip
        * np.sqrt(phi0)
        * np.sqrt(ones_val)
        * surrogate.eps_
    )
    return DiagnosticBreakdown(
        total=float(term1 + term2),
        geometry_term=float(term1),
        sampling_term=float(term2),
        dist_to_centers=dist,
        fill_distance=float(h),
        norm_bound=c_h,
        norm_source=source,
        ones_term_value=float(ones_val),
        ones_term_method=ones_method,
        cluster_radius_eps=float(surrogate.eps_),
    )


def control_error_map(surrogate, system, points, control_values) -> np.ndarray:
    """Worst surrogate error over a control list, per validation point.

    The interpolated matrices are evaluated once per point; each control
    then costs only the affine combination.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    control_values = np.atleast_2d(np.asarray(control_values, dtype=float))
    if control_values.shape[1] != surrogate.control_dim_:
        control_values = control_values.reshape(-1, surrogate.control_dim_)
    errors = np.zeros(points.shape[0])
    chunk = 2048
    for start in range(0, points.shape[0], chunk):
        block = points[start : start + chunk]
        H = surrogate._matrices(block)
        g0 = H[:, :, 0]
        G = H[:, :, 1:]
        worst = np.zeros(block.shape[0])
        for u in control_values:
            pred = g0 + G @ u
            truth = system.step(block, np.broadcast_to(u, (block.shape[0], u.shape[0])))
            worst = np.maximum(worst, np.linalg.norm(pred - truth, axis=1))
        errors[start : start + chunk] = worst
    return errors


def sample_control_data(
    system, centers, n_neighbors: int, eps: float, rng, control_box=None
) -> ControlDataset:
    """Draw micro snapshots for the cluster fit around macro centers.

    ``eps = 0`` repeats each center ``n_neighbors`` times (states exact,
    controls random); ``eps > 0`` draws states uniformly from the ball
    of radius ``eps`` around each center.  Controls are uniform over the
    control box.  All draws come from ``rng`` in a fixed order, so a
    seeded generator reproduces the dataset exactly.
    """
    centers = np.asarray(centers, dtype=float)
    d, n = centers.shape
    m = system.control_dim
    box = control_box if control_box is not None else system.control_box
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    if eps == 0.0:
        states = np.repeat(centers, n_neighbors, axis=0)
    else:
        blocks = []
        for c in centers:
            direction = rng.standard_normal((n_neighbors, n))
            direction /= np.linalg.norm(direction, axis=1, keepdims=True)
            radius = eps * rng.uniform(0.0, 1.0, n_neighbors) ** (1.0 / n)
            blocks.append(c + radius[:, None] * direction)
        states = np.concatenate(blocks, axis=0)
    controls = rng.uniform(box.lower_arr, box.upper_arr, (d * n_neighbors, m))
    successors = system.step(states, controls)
    bound = float(np.max(np.abs(np.concatenate([box.lower_arr, box.upper_arr]))))
    return ControlDataset(
        states=states, controls=controls, successors=successors, control_bound=bound
    )


def save_control_surrogate(surrogate: ControlAffineSurrogate, directory) -> None:
    """Persist the surrogate (interpolant bundle plus control metadata)."""
    save_bundle(
        surrogate.interpolator_,
        directory,
        extra_meta={
            "kind": "control_affine",
            "state_dim": int(surrogate.state_dim_),
            "control_dim": int(surrogate.control_dim_),
            "control_bound": float(surrogate.control_bound_),
            "n_neighbors": int(surrogate.n_neighbors),
            "cluster_radius_eps": float(surrogate.eps_),
            "n_rejected": int(surrogate.n_rejected_),
            "fill_distance": surrogate.fill_distance_,
        },
    )
    surrogate.clusters_.to_csv(os.path.join(directory, "clusters.csv"))


def load_control_surrogate(directory) -> ControlAffineSurrogate:
    interp, meta = load_bundle(directory)
    if meta.get("kind") != "control_affine":
        raise ValueError(f"bundle at {directory} is not a control surrogate")
    surrogate = ControlAffineSurrogate(
        kernel=interp.kernel, lam=interp.lam, n_neighbors=int(meta["n_neighbors"])
    )
    surrogate.interpolator_ = interp
    surrogate.centers_ = interp.centers_
    surrogate.state_dim_ = int(meta["state_dim"])
    surrogate.control_dim_ = int(meta["control_dim"])
    surrogate.control_bound_ = float(meta["control_bound"])
    surrogate.eps_ = float(meta["cluster_radius_eps"])
    surrogate.n_rejected_ = int(meta["n_rejected"])
    surrogate.fill_distance_ = meta.get("fill_distance")
    return surrogate
