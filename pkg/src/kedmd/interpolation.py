"""Kernel interpolation and ridge regression in a native space.

Fitting solves ``(K + lam I) C = Y`` for the coefficient matrix ``C``,
where ``K`` is the kernel matrix of the centers.  ``lam = 0`` gives the
interpolant (exact at the centers); ``lam > 0`` gives the regularised
regressor, which contracts the native norm.  The factorization is a
Cholesky with an escalating jitter ladder, followed by iterative
refinement of the solve residual.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from sklearn.base import BaseEstimator

from .geometry import load_points_csv, save_points_csv
from .kernels import WendlandKernel

__all__ = [
    "FactorizationError",
    "assemble_kernel_matrix",
    "native_norm",
    "KernelInterpolator",
    "RegularizerCheck",
    "verify_regularizer_identities",
    "save_bundle",
    "load_bundle",
]

DEFAULT_JITTER_LADDER = (0.0, 1e-14, 1e-12, 1e-10)
_CHUNK = 2048


class FactorizationError(RuntimeError):
    """Cholesky failed for every jitter on the ladder."""


def assemble_kernel_matrix(kernel, centers) -> np.ndarray:
    """Kernel matrix of the centers; rejects duplicate rows.

    Duplicate centers make the matrix singular, so they are reported
    with their indices instead of failing later inside the
    factorization.
    """
    centers = np.asarray(centers, dtype=float)
    if centers.ndim != 2:
        raise ValueError("centers must be a 2-d array, one point per row")
    if not np.all(np.isfinite(centers)):
        raise ValueError("centers contain non-finite entries")
    order = np.lexsort(centers.T[::-1])
    same = np.all(centers[order[1:]] == centers[order[:-1]], axis=1)
    if np.any(same):
        where = np.nonzero(same)[0]
        pairs = [(int(order[i]), int(order[i + 1])) for i in where[:10]]
        raise ValueError(f"duplicate centers at index pairs {pairs}")
    return kernel.pairwise(centers)


def native_norm(kernel_matrix, coeffs) -> float:
    """Native-space norm ``sqrt(a' K a)`` of ``f = sum_i a_i k(x_i, .)``."""
    coeffs = np.asarray(coeffs, dtype=float).ravel()
    quad = float(coeffs @ (kernel_matrix @ coeffs))
    return float(np.sqrt(max(quad, 0.0)))


def _factor_spd(matrix, jitter_ladder):
    d = matrix.shape[0]
    for jitter in jitter_ladder:
        shifted = matrix if jitter == 0.0 else matrix + jitter * np.eye(d)
        try:
            return cho_factor(shifted, lower=True), float(jitter)
        except LinAlgError:
            continue
    detail = ""
    if d <= 2048:
        eigs = np.linalg.eigvalsh(matrix)
        detail = f"; eigenvalue range [{eigs[0]:.3e}, {eigs[-1]:.3e}]"
    raise FactorizationError(
        f"Cholesky failed for a {d} x {d} kernel system after jitter ladder "
        f"{tuple(jitter_ladder)}{detail}"
    )


def _solve_refined(cho, matrix, shift, rhs, refine_steps):
    # solve (matrix + shift I) X = rhs with iterative refinement of the
    # residual; cho factors that same shifted matrix
    sol = cho_solve(cho, rhs)
    for _ in range(refine_steps):
        resid = rhs - matrix @ sol - shift * sol
        sol += cho_solve(cho, resid)
    return sol


class KernelInterpolator(BaseEstimator):
    """Interpolant or ridge regressor in the native space of a kernel.

    Parameters
    ----------
    kernel : WendlandKernel
        Positive definite kernel; its ``dim`` must match the data.
    lam : float, default=0.0
        Ridge parameter.  Zero interpolates the targets exactly at the
        centers; positive values trade exactness for a smaller native
        norm.
    jitter_ladder : tuple of float
        Diagonal shifts tried in order until the Cholesky factorization
        succeeds.  The shift actually used is reported in ``jitter_``.
    refine_steps : int, default=1
        Iterative refinement passes applied to every solve.

    Attributes
    ----------
    centers_ : ndarray of shape (n_centers, dim)
    targets_ : ndarray of shape (n_centers, n_targets)
    coefficients_ : ndarray of shape (n_centers, n_targets)
    kernel_matrix_ : ndarray of shape (n_centers, n_centers)
        Plain kernel matrix (no ridge, no jitter).
    jitter_ : float
        Diagonal shift used by the factorization.
    solve_residual_ : float
        Relative residual ``||(K + lam I) C - Y||_F / ||Y||_F``.
    """

    def __init__(
        self,
        kernel=None,
        lam: float = 0.0,
        jitter_ladder=DEFAULT_JITTER_LADDER,
        refine_steps: int = 1,
    ):
        self.kernel = kernel
        self.lam = lam
        self.jitter_ladder = jitter_ladder
        self.refine_steps = refine_steps

    def _validate_ready(self):
        if self.kernel is None:
            raise ValueError("kernel must be set before fitting")
        if not (np.isfinite(self.lam) and self.lam >= 0.0):
            raise ValueError(f"lam must be nonnegative and finite, got {self.lam}")

    def fit(self, X, y):
        """Fit coefficients for targets ``y`` sampled at the centers ``X``."""
        self._validate_ready()
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self._y_was_1d_ = y.ndim == 1
        Y = y.reshape(-1, 1) if self._y_was_1d_ else y
        if Y.ndim != 2 or Y.shape[0] != X.shape[0]:
            raise ValueError(
                f"targets must have one row per center: X has {X.shape[0]} rows, "
                f"y has shape {y.shape}"
            )
        if not np.all(np.isfinite(Y)):
            raise ValueError("targets contain non-finite entries")
        K = assemble_kernel_matrix(self.kernel, X)
        cho, jitter = _factor_spd(
            K + self.lam * np.eye(K.shape[0]) if self.lam else K,
            self.jitter_ladder,
        )
        coeffs = _solve_refined(cho, K, self.lam + jitter, Y, self.refine_steps)
        resid = np.linalg.norm(K @ coeffs + (self.lam + jitter) * coeffs - Y)
        norm_y = np.linalg.norm(Y)
        self.centers_ = X
        self.targets_ = Y
        self.kernel_matrix_ = K
        # C order, so predictions are bit-identical after a CSV round-trip
        # (BLAS picks a different summation order for Fortran-ordered input)
        self.coefficients_ = np.ascontiguousarray(coeffs)
        self.jitter_ = jitter
        self._cho_ = cho
        self.solve_residual_ = float(resid / norm_y) if norm_y > 0 else float(resid)
        return self

    def _kernel_matrix(self):
        if getattr(self, "kernel_matrix_", None) is None:
            self.kernel_matrix_ = assemble_kernel_matrix(self.kernel, self.centers_)
        return self.kernel_matrix_

    def predict(self, X) -> np.ndarray:
        """Evaluate the fitted function(s) at query points (rows)."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        pts = X[None, :] if single else X
        out = np.empty((pts.shape[0], self.coefficients_.shape[1]))
        for start in range(0, pts.shape[0], _CHUNK):
            block = pts[start : start + _CHUNK]
            out[start : start + _CHUNK] = (
                self.kernel.pairwise(block, self.centers_) @ self.coefficients_
            )
        if self._y_was_1d_:
            out = out[:, 0]
        return out[0] if single else out

    def native_norms(self) -> np.ndarray:
        """Native norm of each fitted target column."""
        K = self._kernel_matrix()
        C = self.coefficients_
        quad = np.einsum("ij,ij->j", C, K @ C)
        return np.sqrt(np.maximum(quad, 0.0))

    def pointwise_bound(self, x, column: int = 0):
        """Cauchy-Schwarz bound ``f(x)^2 <= k(x, x) ||f||^2`` at a point.

        Returns the pair (f(x)^2, bound).
        """
        x = np.asarray(x, dtype=float)
        vals = self.kernel.pairwise(x[None, :], self.centers_)[0]
        fx = float(vals @ self.coefficients_[:, column])
        kxx = self.kernel(x, x)
        norm = self.native_norms()[column]
        return fx**2, kxx * norm**2


@dataclass
class RegularizerCheck:
    """Outcome of the regularised-regressor identity checks."""

    passed: bool
    failures: list
    max_violation: float
    lam: float
    trials: int

    def raise_if_failed(self):
        if not self.passed:
            raise AssertionError(
                "regularizer identities violated: " + "; ".join(self.failures)
            )


def verify_regularizer_identities(
    kernel, centers, lam: float, trials: int = 20, rng=None, tol: float = 1e-9
) -> RegularizerCheck:
    """Numerically check the defining identities of the ridge regressor.

    For random unit-norm functions f, g in the span of the kernel
    translates this verifies, with R the ridge operator and P the
    interpolation operator:

    * self-adjointness: <R f, g> = f_X' (K + lam I)^-1 g_X = <f, R g>
    * commutation: P R f = R P f = R f
    * contraction: ||R f|| <= ||P f|| <= ||f||
    """
    centers = np.asarray(centers, dtype=float)
    if rng is None:
        rng = np.random.default_rng(0)
    K = assemble_kernel_matrix(kernel, centers)
    d = K.shape[0]
    cho_ridge, jit_r = _factor_spd(K + lam * np.eye(d) if lam else K, DEFAULT_JITTER_LADDER)
    cho_plain, jit_p = _factor_spd(K, DEFAULT_JITTER_LADDER)

    def ridge_solve(rhs):
        return _solve_refined(cho_ridge, K, lam + jit_r, rhs, 1)

    def plain_solve(rhs):
        return _solve_refined(cho_plain, K, jit_p, rhs, 1)

    failures = []
    worst = 0.0

    def check(label, value, trial):
        nonlocal worst
        worst = max(worst, value)
        if value > tol:
            failures.append(f"{label} (trial {trial}): violation {value:.3e}")

    for trial in range(trials):
        alpha = rng.standard_normal(d)
        alpha /= native_norm(K, alpha)
        beta = rng.standard_normal(d)
        beta /= native_norm(K, beta)
        f_sites = K @ alpha
        g_sites = K @ beta
        cf = ridge_solve(f_sites)
        cg = ridge_solve(g_sites)

        inner_rf_g = float(cf @ g_sites)  # = cf' K beta
        middle = float(f_sites @ cg)
        inner_f_rg = float(alpha @ (K @ cg))
        scale = max(1.0, abs(inner_rf_g), abs(middle), abs(inner_f_rg))
        check("self-adjointness <Rf,g> vs f_X'(K+lam I)^-1 g_X",
              abs(inner_rf_g - middle) / scale, trial)
        check("self-adjointness f_X'(K+lam I)^-1 g_X vs <f,Rg>",
              abs(middle - inner_f_rg) / scale, trial)

        # P(Rf) re-interpolates the ridge solution; R(Pf) rides the
        # re-interpolated f.  Both must agree with Rf in native norm.
        p_of_rf = plain_solve(K @ cf)
        r_of_pf = ridge_solve(K @ plain_solve(f_sites))
        check("commutation P(Rf) = Rf", native_norm(K, p_of_rf - cf), trial)
        check("commutation R(Pf) = Rf", native_norm(K, r_of_pf - cf), trial)

        norm_rf = native_norm(K, cf)
        norm_pf = native_norm(K, plain_solve(f_sites))
        check("contraction ||Rf|| <= ||Pf||", max(0.0, norm_rf - norm_pf), trial)
        check("contraction ||Pf|| <= ||f||", max(0.0, norm_pf - 1.0), trial)

    return RegularizerCheck(
        passed=not failures,
        failures=failures,
        max_violation=worst,
        lam=lam,
        trials=trials,
    )


def save_bundle(model: KernelInterpolator, directory, extra_meta: dict | None = None):
    """Persist a fitted model as centers.csv, coefficients.csv, meta.json."""
    os.makedirs(directory, exist_ok=True)
    save_points_csv(os.path.join(directory, "centers.csv"), model.centers_)
    coeffs = model.coefficients_
    header = ",".join(f"c{j + 1}" for j in range(coeffs.shape[1]))
    np.savetxt(
        os.path.join(directory, "coefficients.csv"),
        coeffs,
        delimiter=",",
        header=header,
        comments="",
        fmt="%.17g",
    )
    meta = {
        "kind": "interpolator",
        "kernel": {
            "dim": model.kernel.dim,
            "smoothness": model.kernel.smoothness,
            "support_radius": model.kernel.support_radius,
        },
        "lam": model.lam,
        "jitter": getattr(model, "jitter_", 0.0),
        "target_was_1d": bool(model._y_was_1d_),
    }
    if extra_meta:
        meta.update(extra_meta)
    with open(os.path.join(directory, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_bundle(directory):
    """Load a persisted model; returns (model, meta).

    The model predicts immediately; the kernel matrix is only
    reassembled if a native norm is requested.
    """
    with open(os.path.join(directory, "meta.json")) as fh:
        meta = json.load(fh)
    kernel = WendlandKernel(
        dim=int(meta["kernel"]["dim"]),
        smoothness=int(meta["kernel"]["smoothness"]),
        support_radius=float(meta["kernel"]["support_radius"]),
    )
    model = KernelInterpolator(kernel=kernel, lam=float(meta["lam"]))
    model.centers_ = load_points_csv(os.path.join(directory, "centers.csv"))
    coeffs = np.loadtxt(
        os.path.join(directory, "coefficients.csv"), delimiter=",", skiprows=1, ndmin=2
    )
    model.coefficients_ = np.asarray(coeffs, dtype=float)
    model.kernel_matrix_ = None
    model.jitter_ = float(meta.get("jitter", 0.0))
    model._y_was_1d_ = bool(meta.get("target_was_1d", False))
    return model, meta
