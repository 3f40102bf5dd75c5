"""Lyapunov decrease checks, margins and transfer arguments.

A Lyapunov candidate is checked along a one-step map ``G`` by the margin

    m(x) = V(x) - alpha_V(||x - x_star||) - V(G(x)),

which is nonnegative exactly where the certified decrease holds.  These
margins drive the grid checks, the practical-region estimate and the
surrogate transfer arguments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "LyapunovSpec",
    "MarginReport",
    "check_decrease",
    "sublevel_filter",
    "PracticalRegion",
    "practical_region_estimate",
    "PowerformReport",
    "check_powerform_transfer",
    "ClosedLoopReport",
    "closed_loop_check",
    "TransferCheck",
    "margin_transfer_check",
]


@dataclass(frozen=True)
class LyapunovSpec:
    """Lyapunov candidate with its comparison functions.

    ``V`` maps batches of points ``(..., dim)`` to values ``(...)``;
    ``alpha_V`` (and the optional ``alpha1``, ``alpha2``, ``omega_V``)
    map nonnegative scalars or arrays elementwise.  ``omega_V`` is a
    declared continuity modulus of ``V`` on the working domain; it is
    used in transfer arguments and is not itself verified.  ``power_p``
    marks specs whose comparison functions are power forms ``c r^p``.
    """

    V: Callable
    alpha_V: Callable
    x_star: tuple
    alpha1: Callable | None = None
    alpha2: Callable | None = None
    omega_V: Callable | None = None
    power_p: float | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "x_star", tuple(float(v) for v in np.asarray(self.x_star, dtype=float))
        )
        if self.power_p is not None and not self.power_p > 0:
            raise ValueError(f"power_p must be positive, got {self.power_p}")

    @property
    def x_star_arr(self) -> np.ndarray:
        return np.asarray(self.x_star, dtype=float)


def _apply_map(step, X):
    """Apply a one-step map to rows of X, accepting batched or per-point maps."""
    X = np.asarray(X, dtype=float)
    try:
        out = np.asarray(step(X), dtype=float)
        if out.shape == X.shape:
            return out
    except Exception:
        pass
    return np.stack([np.asarray(step(x), dtype=float) for x in X])


def _apply_scalar(fn, X):
    X = np.asarray(X, dtype=float)
    try:
        out = np.asarray(fn(X), dtype=float)
        if out.shape == (X.shape[0],):
            return out
    except Exception:
        pass
    return np.array([float(fn(x)) for x in X])


@dataclass
class MarginReport:
    """Margins of a decrease check on a set of points."""

    points: np.ndarray
    margins: np.ndarray
    x_star: np.ndarray
    label: str = "decrease"

    @property
    def min_margin(self) -> float:
        return float(self.margins.min())

    @property
    def argmin_point(self) -> np.ndarray:
        return self.points[int(np.argmin(self.margins))]

    @property
    def failure_indices(self) -> np.ndarray:
        return np.nonzero(self.margins < 0.0)[0]

    @property
    def failure_max_distance(self) -> float:
        idx = self.failure_indices
        if idx.size == 0:
            return 0.0
        return float(np.linalg.norm(self.points[idx] - self.x_star, axis=1).max())

    @property
    def ok(self) -> bool:
        return self.min_margin >= 0.0

    def summary(self) -> dict:
        return {
            "label": self.label,
            "n_points": int(self.points.shape[0]),
            "min_margin": self.min_margin,
            "argmin_point": [float(v) for v in self.argmin_point],
            "n_failures": int(self.failure_indices.size),
            "failure_max_distance": self.failure_max_distance,
        }

    def to_csv(self, path) -> None:
        dim = self.points.shape[1]
        header = ",".join(f"x{i + 1}" for i in range(dim)) + ",margin"
        data = np.column_stack([self.points, self.margins])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def check_decrease(step, spec: LyapunovSpec, points, label: str = "decrease") -> MarginReport:
    """Margins ``V(x) - alpha_V(||x - x*||) - V(G(x))`` over the points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    images = _apply_map(step, points)
    dists = np.linalg.norm(points - spec.x_star_arr, axis=1)
    margins = (
        _apply_scalar(spec.V, points)
        - np.asarray(spec.alpha_V(dists), dtype=float)
        - _apply_scalar(spec.V, images)
    )
    return MarginReport(points=points, margins=margins, x_star=spec.x_star_arr, label=label)


def sublevel_filter(spec: LyapunovSpec, points, level: float) -> np.ndarray:
    """Rows of ``points`` with ``V(x) <= level``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return points[_apply_scalar(spec.V, points) <= level]


@dataclass(frozen=True)
class PracticalRegion:
    """Failure ball and sublevel threshold of a practical decrease check."""

    failure_radius: float
    sublevel_threshold: float
    n_failures: int
    n_points: int


def practical_region_estimate(step, spec: LyapunovSpec, points) -> PracticalRegion:
    """Estimate where the decrease fails near the equilibrium.

    Returns the radius of the smallest centered ball containing every
    failing point and the smallest sublevel threshold ``c`` such that
    all failures satisfy ``V(x) <= c``; outside that set the sampled
    decrease holds.
    """
    report = check_decrease(step, spec, points)
    idx = report.failure_indices
    if idx.size == 0:
        return PracticalRegion(0.0, 0.0, 0, int(report.points.shape[0]))
    fail_pts = report.points[idx]
    radius = float(np.linalg.norm(fail_pts - spec.x_star_arr, axis=1).max())
    level = float(_apply_scalar(spec.V, fail_pts).max())
    return PracticalRegion(radius, level, int(idx.size), int(report.points.shape[0]))


@dataclass
class PowerformReport:
    """Inflated decrease check used by the power-form transfer argument."""

    report: MarginReport
    split: float

    @property
    def ok(self) -> bool:
        return self.report.ok


def check_powerform_transfer(
    step, spec: LyapunovSpec, points, split: float = 0.5
) -> PowerformReport:
    """Check the inflated decrease ``V(G x) <= V(x) - (1-s) alpha_V``.

    For power-form comparison functions the remaining ``s`` share of the
    decrease absorbs a sufficiently small surrogate error, so a
    surrogate passing this check certifies practical stability.
    """
    if spec.power_p is None:
        raise ValueError("check_powerform_transfer needs a spec with power_p set")
    if not 0.0 < split < 1.0:
        raise ValueError(f"split must lie in (0, 1), got {split}")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    images = _apply_map(step, points)
    dists = np.linalg.norm(points - spec.x_star_arr, axis=1)
    margins = (
        _apply_scalar(spec.V, points)
        - (1.0 - split) * np.asarray(spec.alpha_V(dists), dtype=float)
        - _apply_scalar(spec.V, images)
    )
    report = MarginReport(
        points=points, margins=margins, x_star=spec.x_star_arr, label="powerform"
    )
    return PowerformReport(report=report, split=split)


@dataclass
class ClosedLoopReport:
    """Decrease margins of a feedback-closed loop."""

    surrogate_report: MarginReport
    true_report: MarginReport | None
    clamped_count: int
    max_control_norm: float


def closed_loop_check(
    predict,
    controller,
    spec: LyapunovSpec,
    points,
    true_step=None,
    control_box=None,
) -> ClosedLoopReport:
    """Check the decrease of ``x -> predict(x, controller(x))``.

    Controls are clamped to ``control_box`` (a ``geometry.Box`` in the
    input space) when one is given; the number of clamped components is
    reported, as is the largest 1-norm of the applied controls.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    controls = np.stack(
        [np.atleast_1d(np.asarray(controller(x), dtype=float)) for x in points]
    )
    clamped = 0
    if control_box is not None:
        lo, hi = control_box.lower_arr, control_box.upper_arr
        clipped = np.clip(controls, lo, hi)
        clamped = int(np.sum(clipped != controls))
        controls = clipped
    max_norm = float(np.abs(controls).sum(axis=1).max()) if controls.size else 0.0
    images = predict(points, controls)
    dists = np.linalg.norm(points - spec.x_star_arr, axis=1)
    margins = (
        _apply_scalar(spec.V, points)
        - np.asarray(spec.alpha_V(dists), dtype=float)
        - _apply_scalar(spec.V, np.asarray(images, dtype=float))
    )
    surrogate_report = MarginReport(
        points=points, margins=margins, x_star=spec.x_star_arr, label="closed-loop"
    )
    true_report = None
    if true_step is not None:
        true_images = np.stack(
            [np.asarray(true_step(x, u), dtype=float) for x, u in zip(points, controls)]
        )
        true_margins = (
            _apply_scalar(spec.V, points)
            - np.asarray(spec.alpha_V(dists), dtype=float)
            - _apply_scalar(spec.V, true_images)
        )
        true_report = MarginReport(
            points=points,
            margins=true_margins,
            x_star=spec.x_star_arr,
            label="closed-loop-true",
        )
    return ClosedLoopReport(
        surrogate_report=surrogate_report,
        true_report=true_report,
        clamped_count=clamped,
        max_control_norm=max_norm,
    )


@dataclass(frozen=True)
class TransferCheck:
    """Implication check: true margins dominate the error modulus."""

    premise_count: int
    violation_indices: tuple
    n_points: int

    @property
    def ok(self) -> bool:
        return len(self.violation_indices) == 0


def margin_transfer_check(
    margins_true, margins_surrogate, errors, omega_V, slack: float = 1e-9
) -> TransferCheck:
    """Verify the margin transfer implication on sampled data.

    Wherever the true-map margin exceeds the modulus of the pointwise
    surrogate error, ``m(x) >= omega_V(err(x))``, the surrogate margin
    must be nonnegative (up to the slack).  Points failing the premise
    are ignored; points failing the conclusion despite the premise are
    reported.
    """
    margins_true = np.asarray(margins_true, dtype=float)
    margins_surrogate = np.asarray(margins_surrogate, dtype=float)
    errors = np.asarray(errors, dtype=float)
    budget = np.asarray(omega_V(errors), dtype=float)
    premise = margins_true - budget >= 0.0
    bad = premise & (margins_surrogate < -slack)
    return TransferCheck(
        premise_count=int(premise.sum()),
        violation_indices=tuple(int(i) for i in np.nonzero(bad)[0]),
        n_points=int(margins_true.shape[0]),
    )
