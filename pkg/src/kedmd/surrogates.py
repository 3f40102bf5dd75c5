"""Data-driven one-step surrogates of autonomous dynamical systems.

Given data sites ``X`` and their images ``F(X)`` under the true map, a
kernel regression of the coordinate observables (or user observables)
yields a surrogate map ``x -> predict(x)``.  Two variants are fitted
from the same data:

* ``standard``: regress the observables evaluated at the successor
  states; one linear solve.
* ``alternative``: propagate the observables through the cross kernel
  matrix of sites and successors; two linear solves.  With ``lam = 0``
  this variant preserves every equilibrium contained in the data sites.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .geometry import min_dist_to_cloud
from .interpolation import (
    DEFAULT_JITTER_LADDER,
    KernelInterpolator,
    _factor_spd,
    _solve_refined,
    assemble_kernel_matrix,
    load_bundle,
    save_bundle,
)
from .stability import _apply_map

__all__ = [
    "KoopmanSurrogate",
    "fit_autonomous_surrogate",
    "one_step_errors",
    "check_equilibrium_preservation",
    "ProportionalityProfile",
    "proportionality_profile",
    "RolloutResult",
    "save_surrogate",
    "load_surrogate",
]

_CHUNK = 2048


class KoopmanSurrogate(BaseEstimator):
    """One-step surrogate of an autonomous map, fitted from snapshots.

    Parameters
    ----------
    kernel : WendlandKernel
    lam : float, default=0.0
        Ridge parameter of the underlying regression.
    variant : {"standard", "alternative"}
        Which propagation of the observables to fit; see the module
        docstring.
    observables : callable or None
        Batched map ``(q, n) -> (q, M)``.  None selects the coordinate
        observables (``M = n``, identity).
    left_inverse : callable or None
        Batched map ``(q, M) -> (q, n)`` recovering states from
        observable values.  None truncates to the first ``n``
        components, which is exact for coordinate observables.
    jitter_ladder, refine_steps
        Passed to the kernel solve; see ``KernelInterpolator``.

    Attributes
    ----------
    interpolator_ : KernelInterpolator
        Carries centers and fitted coefficient matrix.
    state_dim_ : int
    observable_dim_ : int
    successors_ : ndarray
        The training images ``F(X)``.
    exited_domain_ : int
        Number of successor points outside the declared domain (0 when
        no domain was passed to ``fit``).
    """

    def __init__(
        self,
        kernel=None,
        lam: float = 0.0,
        variant: str = "standard",
        observables=None,
        left_inverse=None,
        jitter_ladder=DEFAULT_JITTER_LADDER,
        refine_steps: int = 1,
    ):
        self.kernel = kernel
        self.lam = lam
        self.variant = variant
        self.observables = observables
        self.left_inverse = left_inverse
        self.jitter_ladder = jitter_ladder
        self.refine_steps = refine_steps

    def _psi(self, X):
        return X if self.observables is None else np.asarray(self.observables(X), dtype=float)

    def _upsilon(self, values):
        if self.left_inverse is None:
            return values[..., : self.state_dim_]
        return np.asarray(self.left_inverse(values), dtype=float)

    def fit(self, X, X_next, domain=None):
        """Fit from data sites ``X`` and their one-step images ``X_next``."""
        if self.variant not in ("standard", "alternative"):
            raise ValueError(f"unknown variant {self.variant!r}")
        X = np.asarray(X, dtype=float)
        X_next = np.asarray(X_next, dtype=float)
        if X.shape != X_next.shape or X.ndim != 2:
            raise ValueError(
                f"X and X_next must be equal-shape 2-d arrays, got {X.shape} and {X_next.shape}"
            )
        self.state_dim_ = X.shape[1]
        self.successors_ = X_next
        self.exited_domain_ = 0
        if domain is not None:
            outside = ~domain.contains(X_next)
            self.exited_domain_ = int(outside.sum())
            if self.exited_domain_:
                warnings.warn(
                    f"{self.exited_domain_} successor points leave the domain; "
                    "the fitted surrogate extrapolates there",
                    stacklevel=2,
                )
        psi_next = self._psi(X_next)
        self.observable_dim_ = psi_next.shape[1]

        interp = KernelInterpolator(
            kernel=self.kernel,
            lam=self.lam,
            jitter_ladder=self.jitter_ladder,
            refine_steps=self.refine_steps,
        )
        if self.variant == "standard":
            interp.fit(X, psi_next)
        else:
            # coefficients (K + lam I)^-1 Kxf' (K + lam I)^-1 Psi_X with
            # Kxf[i, j] = k(x_i, F(x_j)); evaluation then reads
            # Psi_X' (K + lam I)^-1 Kxf (K + lam I)^-1 k_X(x)
            K = assemble_kernel_matrix(self.kernel, X)
            cho, jitter = _factor_spd(
                K + self.lam * np.eye(K.shape[0]) if self.lam else K,
                self.jitter_ladder,
            )
            shift = self.lam + jitter
            psi_sites = self._psi(X)
            cross = self.kernel.pairwise(X, X_next)
            inner = _solve_refined(cho, K, shift, psi_sites, self.refine_steps)
            coeffs = _solve_refined(cho, K, shift, cross.T @ inner, self.refine_steps)
            interp.kernel = self.kernel
            interp.centers_ = X
            interp.targets_ = psi_next
            interp.kernel_matrix_ = K
            interp.coefficients_ = np.ascontiguousarray(coeffs)
            interp.jitter_ = jitter
            interp._y_was_1d_ = False
            resid = float(np.linalg.norm(K @ coeffs + shift * coeffs - cross.T @ inner))
            interp.solve_residual_ = resid
        self.interpolator_ = interp
        return self

    def predict(self, X) -> np.ndarray:
        """One-step prediction for query points (rows, or a single point)."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        pts = X[None, :] if single else X
        out = self._upsilon(self.interpolator_.predict(pts))
        return out[0] if single else out

    def data_site_residual(self) -> float:
        """Max distance between predictions and images at the data sites."""
        preds = self.predict(self.interpolator_.centers_)
        return float(np.linalg.norm(preds - self._upsilon(self._psi(self.successors_)), axis=1).max())

    def rollout(self, x0, steps: int, true_step=None, domain=None, halt_on_exit: bool = False):
        """Iterate the surrogate from ``x0``; optionally track the true map.

        Per-step errors follow the true trajectory: the one-step error
        at step k compares ``predict`` and the true map at the true
        state, while the accumulated error compares the two
        trajectories.
        """
        x0 = np.asarray(x0, dtype=float)
        states = [x0]
        exit_step = None
        for k in range(steps):
            nxt = self.predict(states[-1])
            if domain is not None and exit_step is None and not bool(domain.contains(nxt)[0]):
                exit_step = k + 1
                if halt_on_exit:
                    states.append(nxt)
                    break
            states.append(nxt)
        states = np.stack(states)
        true_states = None
        one_step = None
        accumulated = None
        if true_step is not None:
            cur = x0
            true_list = [cur]
            errs = []
            for _ in range(states.shape[0] - 1):
                pred = self.predict(cur)
                nxt = np.asarray(true_step(cur), dtype=float)
                errs.append(float(np.linalg.norm(pred - nxt)))
                true_list.append(nxt)
                cur = nxt
            true_states = np.stack(true_list)
            one_step = np.asarray(errs)
            accumulated = np.linalg.norm(states - true_states, axis=1)
        return RolloutResult(
            states=states,
            true_states=true_states,
            one_step_errors=one_step,
            accumulated_errors=accumulated,
            exit_step=exit_step,
        )


@dataclass
class RolloutResult:
    states: np.ndarray
    true_states: np.ndarray | None
    one_step_errors: np.ndarray | None
    accumulated_errors: np.ndarray | None
    exit_step: int | None


def fit_autonomous_surrogate(system, data_sites, **params) -> KoopmanSurrogate:
    """Sample the system at the data sites and fit a surrogate."""
    data_sites = np.asarray(data_sites, dtype=float)
    images = _apply_map(system.step, data_sites)
    surrogate = KoopmanSurrogate(**params)
    return surrogate.fit(data_sites, images, domain=system.domain)


def one_step_errors(true_step, surrogate, points) -> np.ndarray:
    """Pointwise ``||predict(x) - F(x)||`` over rows of ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    errs = np.empty(points.shape[0])
    for start in range(0, points.shape[0], _CHUNK):
        block = points[start : start + _CHUNK]
        preds = surrogate.predict(block)
        truth = _apply_map(true_step, block)
        errs[start : start + _CHUNK] = np.linalg.norm(preds - truth, axis=1)
    return errs


def check_equilibrium_preservation(true_step, surrogate, x_star):
    """Residuals ``||F(x*) - x*||`` and ``||predict(x*) - x*||``.

    ``x_star`` must be one of the data sites, otherwise preservation is
    not expected and a ValueError is raised.
    """
    x_star = np.asarray(x_star, dtype=float)
    sites = surrogate.interpolator_.centers_
    hit = np.nonzero(np.all(sites == x_star, axis=1))[0]
    if hit.size == 0:
        raise ValueError("x_star is not among the data sites")
    true_residual = float(np.linalg.norm(np.asarray(true_step(x_star), dtype=float) - x_star))
    surrogate_residual = float(np.linalg.norm(surrogate.predict(x_star) - x_star))
    return true_residual, surrogate_residual


@dataclass
class ProportionalityProfile:
    """Surrogate error against distance to the data sites."""

    points: np.ndarray
    errors: np.ndarray
    dist_to_data: np.ndarray
    dist_to_equilibrium: np.ndarray | None

    @property
    def ratios(self) -> np.ndarray:
        out = np.zeros_like(self.errors)
        mask = self.dist_to_data > 1e-12
        out[mask] = self.errors[mask] / self.dist_to_data[mask]
        return out

    @property
    def max_ratio(self) -> float:
        return float(self.ratios.max())

    def box_max(self, box) -> float:
        """Max error over the points inside the box."""
        mask = box.contains(self.points)
        if not mask.any():
            raise ValueError("no profile points inside the box")
        return float(self.errors[mask].max())

    def to_csv(self, path) -> None:
        dim = self.points.shape[1]
        cols = [self.points, self.errors[:, None], self.dist_to_data[:, None]]
        header = ",".join(f"x{i + 1}" for i in range(dim)) + ",error,dist_to_data"
        if self.dist_to_equilibrium is not None:
            cols.append(self.dist_to_equilibrium[:, None])
            header += ",dist_to_equilibrium"
        np.savetxt(
            path, np.column_stack(cols), delimiter=",", header=header, comments="", fmt="%.17g"
        )


def proportionality_profile(
    true_step, surrogate, points, x_star=None
) -> ProportionalityProfile:
    """Profile of surrogate error versus distance to the data sites."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    errors = one_step_errors(true_step, surrogate, points)
    dists = min_dist_to_cloud(points, surrogate.interpolator_.centers_)
    dist_eq = None
    if x_star is not None:
        dist_eq = np.linalg.norm(points - np.asarray(x_star, dtype=float), axis=1)
    return ProportionalityProfile(
        points=points, errors=errors, dist_to_data=dists, dist_to_equilibrium=dist_eq
    )


def save_surrogate(surrogate: KoopmanSurrogate, directory) -> None:
    """Persist a coordinate-observable surrogate as a CSV bundle."""
    if surrogate.observables is not None or surrogate.left_inverse is not None:
        raise ValueError("only coordinate-observable surrogates are persistable")
    save_bundle(
        surrogate.interpolator_,
        directory,
        extra_meta={
            "kind": "koopman_autonomous",
            "variant": surrogate.variant,
            "state_dim": int(surrogate.state_dim_),
        },
    )


def load_surrogate(directory) -> KoopmanSurrogate:
    interp, meta = load_bundle(directory)
    if meta.get("kind") != "koopman_autonomous":
        raise ValueError(f"bundle at {directory} is not an autonomous surrogate")
    surrogate = KoopmanSurrogate(
        kernel=interp.kernel, lam=interp.lam, variant=meta.get("variant", "standard")
    )
    surrogate.interpolator_ = interp
    surrogate.state_dim_ = int(meta["state_dim"])
    surrogate.observable_dim_ = interp.coefficients_.shape[1]
    surrogate.successors_ = None
    surrogate.exited_domain_ = 0
    return surrogate
