"""Compactly supported Wendland radial basis functions and kernels.

The radial profile ``phi`` is the classical minimal-degree polynomial
Wendland function for ambient dimension ``n`` and smoothness parameter
``k``, normalised so that ``phi(0) = 1`` and ``phi(r) = 0`` for
``r >= 1``.  With ``l = floor(n / 2) + k + 1``:

====  =========================================================================
``k``  ``phi(r)`` on ``[0, 1]``
====  =========================================================================
0      ``(1 - r)^l``
1      ``(1 - r)^(l + 1) ((l + 1) r + 1)``
2      ``(1 - r)^(l + 2) ((l^2 + 4 l + 3) r^2 + (3 l + 6) r + 3) / 3``
3      ``(1 - r)^(l + 3) ((l^3 + 9 l^2 + 23 l + 15) r^3
       + (6 l^2 + 36 l + 45) r^2 + (15 l + 45) r + 15) / 15``
====  =========================================================================

The induced kernel ``k(x, y) = phi(||x - y|| / sigma)`` is strictly
positive definite on ``R^n``, belongs to ``C^(2k)``, and its native space
is norm-equivalent to the Sobolev space of order ``(n + 1) / 2 + k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from scipy.spatial.distance import cdist

__all__ = ["WendlandKernel"]

_MAX_SMOOTHNESS = 3


def _profile_polynomial(dim: int, smoothness: int) -> Polynomial:
    """Polynomial part of the Wendland profile, valid on [0, 1]."""
    ell = dim // 2 + smoothness + 1
    one_minus_r = Polynomial([1.0, -1.0])
    if smoothness == 0:
        return one_minus_r**ell
    if smoothness == 1:
        return one_minus_r ** (ell + 1) * Polynomial([1.0, ell + 1.0])
    if smoothness == 2:
        quad = Polynomial([3.0, 3.0 * ell + 6.0, ell**2 + 4.0 * ell + 3.0])
        return one_minus_r ** (ell + 2) * quad / 3.0
    if smoothness == 3:
        cubic = Polynomial(
            [
                15.0,
                15.0 * ell + 45.0,
                6.0 * ell**2 + 36.0 * ell + 45.0,
                ell**3 + 9.0 * ell**2 + 23.0 * ell + 15.0,
            ]
        )
        return one_minus_r ** (ell + 3) * cubic / 15.0
    raise ValueError(f"smoothness must be in [0, {_MAX_SMOOTHNESS}], got {smoothness}")


@dataclass(frozen=True)
class WendlandKernel:
    """Wendland kernel ``k(x, y) = phi(||x - y|| / support_radius)``.

    Parameters
    ----------
    dim : int
        Ambient dimension ``n``; the kernel is positive definite on R^n.
    smoothness : int
        Smoothness parameter ``k`` in ``{0, 1, 2, 3}``; the profile is
        ``C^(2k)`` at the origin and at the support boundary.
    support_radius : float
        Scaling ``sigma > 0``; the kernel vanishes for
        ``||x - y|| >= sigma``.
    """

    dim: int
    smoothness: int
    support_radius: float
    _poly: Polynomial = field(init=False, repr=False, compare=False)
    _dpoly: Polynomial = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if not 0 <= self.smoothness <= _MAX_SMOOTHNESS:
            raise ValueError(
                f"smoothness must be in [0, {_MAX_SMOOTHNESS}], got {self.smoothness}"
            )
        if not (np.isfinite(self.support_radius) and self.support_radius > 0):
            raise ValueError(
                f"support_radius must be positive and finite, got {self.support_radius}"
            )
        poly = _profile_polynomial(self.dim, self.smoothness)
        object.__setattr__(self, "_poly", poly)
        object.__setattr__(self, "_dpoly", poly.deriv())

    @property
    def sobolev_order(self) -> float:
        """Order of the Sobolev space norm-equivalent to the native space."""
        return (self.dim + 1) / 2.0 + self.smoothness

    def profile(self, r):
        """Evaluate ``phi`` at nonnegative radii; exactly zero for r >= 1."""
        r = np.asarray(r, dtype=float)
        inside = r < 1.0
        out = np.zeros_like(r)
        if np.any(inside):
            out = np.where(inside, self._poly(np.minimum(r, 1.0)), 0.0)
        return out if out.ndim else float(out)

    def profile_grad(self, r):
        """Derivative ``phi'``; requires smoothness >= 1 (else not continuous)."""
        if self.smoothness < 1:
            raise ValueError("profile_grad requires smoothness >= 1")
        r = np.asarray(r, dtype=float)
        out = np.where(r < 1.0, self._dpoly(np.minimum(r, 1.0)), 0.0)
        return out if out.ndim else float(out)

    def _check_point(self, x, name: str) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(
                f"{name} must have shape ({self.dim},), got {x.shape}"
            )
        if not np.all(np.isfinite(x)):
            raise ValueError(f"{name} contains non-finite entries")
        return x

    def __call__(self, x, y) -> float:
        x = self._check_point(x, "x")
        y = self._check_point(y, "y")
        r = float(np.linalg.norm(x - y)) / self.support_radius
        return float(self.profile(r))

    def pairwise(self, X, Y=None) -> np.ndarray:
        """Kernel matrix ``(k(X_i, Y_j))_ij`` for points stored in rows."""
        X = np.asarray(X, dtype=float)
        Y = X if Y is None else np.asarray(Y, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"X must have shape (m, {self.dim}), got {X.shape}")
        if Y.ndim != 2 or Y.shape[1] != self.dim:
            raise ValueError(f"Y must have shape (m, {self.dim}), got {Y.shape}")
        return self.profile(cdist(X, Y) / self.support_radius)

    def gradient(self, x, y) -> np.ndarray:
        """Gradient of ``k(., y)`` at ``x``; zero at ``x == y`` and outside
        the support.  Requires smoothness >= 1."""
        if self.smoothness < 1:
            raise ValueError("gradient requires smoothness >= 1")
        x = self._check_point(x, "x")
        y = self._check_point(y, "y")
        diff = x - y
        dist = float(np.linalg.norm(diff))
        if dist == 0.0 or dist >= self.support_radius:
            return np.zeros(self.dim)
        r = dist / self.support_radius
        return self.profile_grad(r) * diff / (self.support_radius * dist)
