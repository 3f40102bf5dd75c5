"""Benchmark discrete-time systems and a config-file system loader.

Two systems ship built in:

* ``kellett``: a planar polynomial map with a known quadratic Lyapunov
  function and decrease rate, a standard verification benchmark.
* ``duffing``: the Euler discretization of a controlled Duffing-type
  oscillator, control affine with scalar input.

Custom systems are described by small JSON files whose right-hand sides
are arithmetic expressions in ``x1 .. xn`` (and ``r`` for the Euclidean
state norm), parsed with sympy.  Supported operators: ``+ - * / ^`` and
function calls known to sympy (``sqrt``, ``sin``, ...).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Callable

import numpy as np
import sympy

from .geometry import Box
from .stability import LyapunovSpec

__all__ = [
    "AutonomousSystem",
    "ControlAffineSystem",
    "kellett",
    "duffing",
    "euler_discretize",
    "from_config",
    "get_system",
    "verify_equilibria",
]


@dataclass(frozen=True)
class AutonomousSystem:
    """Discrete-time autonomous system ``x+ = step(x)`` on a box domain."""

    name: str
    dim: int
    domain: Box
    step: Callable
    equilibria: tuple = ()
    lyapunov: LyapunovSpec | None = None


@dataclass(frozen=True)
class ControlAffineSystem:
    """Discrete-time control-affine system ``x+ = drift(x) + gain(x) u``."""

    name: str
    dim: int
    control_dim: int
    domain: Box
    control_box: Box
    drift: Callable
    control_matrix: Callable
    equilibria: tuple = ()
    lyapunov: LyapunovSpec | None = None

    @property
    def control_bound(self) -> float:
        """Max-norm bound R of the control box."""
        return float(
            np.max(np.abs(np.concatenate([self.control_box.lower_arr,
                                          self.control_box.upper_arr])))
        )

    def step(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.atleast_1d(np.asarray(u, dtype=float))
        gain = self.control_matrix(x)
        return self.drift(x) + np.einsum("...nm,...m->...n", gain, u)

    def autonomous(self, u_fixed=None) -> AutonomousSystem:
        """Freeze the input (default zero) to obtain an autonomous system."""
        if u_fixed is None:
            u_fixed = np.zeros(self.control_dim)
        u_fixed = np.atleast_1d(np.asarray(u_fixed, dtype=float))

        def step(x):
            return self.step(x, u_fixed)

        return AutonomousSystem(
            name=f"{self.name}(u={u_fixed.tolist()})",
            dim=self.dim,
            domain=self.domain,
            step=step,
            equilibria=self.equilibria if not np.any(u_fixed) else (),
            lyapunov=self.lyapunov,
        )


def _kellett_step(x):
    x = np.asarray(x, dtype=float)
    shift = np.sum(x * x, axis=-1, keepdims=True) - 1.0
    x1 = x[..., :1]
    x2 = x[..., 1:2]
    return np.concatenate([(shift * x1 - x2) / 8.0, (x1 + shift * x2) / 8.0], axis=-1)


def kellett(half_width: float = 2.0) -> AutonomousSystem:
    """Planar polynomial benchmark map on ``[-w, w]^2``.

    The origin is the unique equilibrium and ``V(x) = ||x||^2``
    decreases at rate ``alpha_V(r) = 7 r^2 / 32`` on the default domain.
    The declared modulus of ``V`` uses ``|V(a) - V(b)| <=
    (||a|| + ||b||) ||a - b||`` with both points in the domain.
    """
    w = float(half_width)
    radius = w * np.sqrt(2.0)
    return AutonomousSystem(
        name="kellett",
        dim=2,
        domain=Box((-w, -w), (w, w)),
        step=_kellett_step,
        equilibria=(np.zeros(2),),
        lyapunov=LyapunovSpec(
            V=lambda x: np.sum(np.asarray(x, dtype=float) ** 2, axis=-1),
            alpha_V=lambda r: 7.0 * np.asarray(r, dtype=float) ** 2 / 32.0,
            x_star=(0.0, 0.0),
            alpha1=lambda r: np.asarray(r, dtype=float) ** 2,
            alpha2=lambda r: np.asarray(r, dtype=float) ** 2,
            omega_V=lambda s: 2.0 * radius * np.asarray(s, dtype=float),
            power_p=2.0,
        ),
    )


def duffing(dt: float = 0.05, half_width: float = 2.0, control_bound: float = 2.0) -> ControlAffineSystem:
    """Euler-discretized controlled Duffing-type oscillator.

    ``x+ = (x1 + dt x2, x2 + dt x1) + (0, -3 dt x1^3) u`` with scalar
    input; the drift has its equilibrium at the origin.
    """
    dt = float(dt)
    w = float(half_width)
    R = float(control_bound)

    def drift(x):
        x = np.asarray(x, dtype=float)
        x1 = x[..., :1]
        x2 = x[..., 1:2]
        return np.concatenate([x1 + dt * x2, x2 + dt * x1], axis=-1)

    def gain(x):
        x = np.asarray(x, dtype=float)
        x1 = x[..., 0]
        col = np.stack([np.zeros_like(x1), -3.0 * dt * x1**3], axis=-1)
        return col[..., :, None]

    return ControlAffineSystem(
        name="duffing",
        dim=2,
        control_dim=1,
        domain=Box((-w, -w), (w, w)),
        control_box=Box((-R,), (R,)),
        drift=drift,
        control_matrix=gain,
        equilibria=(np.zeros(2),),
    )


def euler_discretize(
    vector_field,
    control_fields,
    dt: float,
    domain: Box,
    control_box: Box | None = None,
    name: str = "euler",
    equilibria: tuple = (),
    lyapunov: LyapunovSpec | None = None,
):
    """Explicit Euler step of ``x' = g0(x) + G(x) u``.

    ``vector_field`` maps batches ``(..., n) -> (..., n)``;
    ``control_fields`` maps ``(..., n) -> (..., n, m)`` or is ``None``
    for an autonomous system.
    """
    dt = float(dt)

    if control_fields is None:

        def step(x):
            x = np.asarray(x, dtype=float)
            return x + dt * vector_field(x)

        return AutonomousSystem(
            name=name,
            dim=domain.dim,
            domain=domain,
            step=step,
            equilibria=equilibria,
            lyapunov=lyapunov,
        )

    if control_box is None:
        raise ValueError("control_box is required for a controlled system")

    def drift(x):
        x = np.asarray(x, dtype=float)
        return x + dt * vector_field(x)

    def gain(x):
        return dt * np.asarray(control_fields(x), dtype=float)

    return ControlAffineSystem(
        name=name,
        dim=domain.dim,
        control_dim=control_box.dim,
        domain=domain,
        control_box=control_box,
        drift=drift,
        control_matrix=gain,
        equilibria=equilibria,
        lyapunov=lyapunov,
    )


def _state_symbols(dim: int):
    return sympy.symbols(f"x1:{dim + 1}")


def _parse(expr: str, local: dict):
    return sympy.sympify(str(expr).replace("^", "**"), locals=dict(local))


def _compile_vector(exprs, dim: int):
    """Compile expressions in x1..xn (and r) to a batched (..., n) -> (..., k) map."""
    xs = _state_symbols(dim)
    local = {f"x{i + 1}": xs[i] for i in range(dim)}
    local["r"] = sympy.sqrt(sum(s**2 for s in xs))
    parsed = [_parse(e, local) for e in exprs]
    fn = sympy.lambdify(xs, parsed, modules="numpy")

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        cols = fn(*[x[..., i] for i in range(dim)])
        shape = x.shape[:-1]
        return np.stack([np.broadcast_to(np.asarray(c, dtype=float), shape) for c in cols], axis=-1)

    return evaluate


def _compile_state_scalar(expr, dim: int):
    xs = _state_symbols(dim)
    local = {f"x{i + 1}": xs[i] for i in range(dim)}
    local["r"] = sympy.sqrt(sum(s**2 for s in xs))
    parsed = _parse(expr, local)
    fn = sympy.lambdify(xs, parsed, modules="numpy")

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        out = fn(*[x[..., i] for i in range(dim)])
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1])

    return evaluate


def _compile_radius_scalar(expr):
    r = sympy.symbols("r")
    parsed = _parse(expr, {"r": r})
    fn = sympy.lambdify(r, parsed, modules="numpy")

    def evaluate(radii):
        radii = np.asarray(radii, dtype=float)
        return np.broadcast_to(np.asarray(fn(radii), dtype=float), radii.shape)

    return evaluate


def _lyapunov_from_config(cfg: dict, dim: int) -> LyapunovSpec:
    return LyapunovSpec(
        V=_compile_state_scalar(cfg["V"], dim),
        alpha_V=_compile_radius_scalar(cfg["alpha_V"]),
        x_star=tuple(float(v) for v in cfg.get("x_star", (0.0,) * dim)),
        alpha1=_compile_radius_scalar(cfg["alpha1"]) if "alpha1" in cfg else None,
        alpha2=_compile_radius_scalar(cfg["alpha2"]) if "alpha2" in cfg else None,
        omega_V=_compile_radius_scalar(cfg["omega_V"]) if "omega_V" in cfg else None,
        power_p=float(cfg["power_p"]) if "power_p" in cfg else None,
    )


def _box_from_config(spec) -> Box:
    """Accept ``{"lower": [...], "upper": [...]}`` or ``[[lo, hi], ...]``."""
    if isinstance(spec, dict):
        try:
            return Box(tuple(spec["lower"]), tuple(spec["upper"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed box bounds: {exc}") from exc
    try:
        pairs = [(float(lo), float(hi)) for lo, hi in spec]
    except (TypeError, ValueError) as exc:
        raise ValueError(f"malformed box bounds: {exc}") from exc
    return Box(tuple(lo for lo, _ in pairs), tuple(hi for _, hi in pairs))


def from_config(config) -> AutonomousSystem | ControlAffineSystem:
    """Build a system from a dict or a JSON file path.

    Required fields: ``dim``, ``domain`` (lower/upper), and either
    ``map`` (expressions of a discrete map, autonomous) or ``drift``
    plus ``dt`` (Euler discretization, optionally with a
    ``control_matrix`` expression table and ``control_box``).
    """
    if isinstance(config, (str, bytes)):
        with open(config) as fh:
            config = json.load(fh)
    if not isinstance(config, dict):
        raise ValueError("system config must be a dict or a path to a JSON file")
    try:
        dim = int(config["dim"])
        domain = _box_from_config(config["domain"])
    except KeyError as exc:
        raise ValueError(f"system config is missing field {exc}") from exc
    if domain.dim != dim:
        raise ValueError("domain bounds do not match dim")
    name = str(config.get("name", "custom"))
    equilibria = tuple(np.asarray(e, dtype=float) for e in config.get("equilibria", ()))
    lyapunov = None
    if "lyapunov" in config:
        lyapunov = _lyapunov_from_config(config["lyapunov"], dim)

    if "map" in config:
        exprs = config["map"]
        if len(exprs) != dim:
            raise ValueError(f"map needs {dim} expressions, got {len(exprs)}")
        step = _compile_vector(exprs, dim)
        return AutonomousSystem(
            name=name, dim=dim, domain=domain, step=step,
            equilibria=equilibria, lyapunov=lyapunov,
        )

    if "drift" not in config or "dt" not in config:
        raise ValueError("system config needs either 'map' or 'drift' plus 'dt'")
    field = _compile_vector(config["drift"], dim)
    control_cfg = config.get("control_matrix")
    if control_cfg is None:
        return euler_discretize(
            field, None, float(config["dt"]), domain,
            name=name, equilibria=equilibria, lyapunov=lyapunov,
        )
    rows = [list(row) for row in control_cfg]
    if len(rows) != dim or len({len(r) for r in rows}) != 1:
        raise ValueError("control_matrix must be an n x m expression table")
    m = len(rows[0])
    flat = _compile_vector([e for row in rows for e in row], dim)

    def gain(x):
        vals = flat(x)
        return vals.reshape(vals.shape[:-1] + (dim, m))

    if "control_box" not in config:
        raise ValueError("a control_matrix needs a matching 'control_box'")
    control_box = _box_from_config(config["control_box"])
    return euler_discretize(
        field, gain, float(config["dt"]), domain, control_box,
        name=name, equilibria=equilibria, lyapunov=lyapunov,
    )


def get_system(spec, dt: float = 0.05):
    """Resolve a system id ('kellett', 'duffing'), config dict, or JSON path."""
    if isinstance(spec, (AutonomousSystem, ControlAffineSystem)):
        return spec
    if isinstance(spec, str):
        if spec == "kellett":
            return kellett()
        if spec == "duffing":
            return duffing(dt=dt)
        if not os.path.exists(spec):
            raise ValueError(
                f"unknown system {spec!r}: expected 'kellett', 'duffing', "
                "or a path to a JSON system config"
            )
        return from_config(spec)
    return from_config(spec)


def verify_equilibria(system, tol: float = 1e-14) -> float:
    """Largest residual ``||F(x*) - x*||`` over registered equilibria."""
    worst = 0.0
    for x_star in system.equilibria:
        x_star = np.asarray(x_star, dtype=float)
        if hasattr(system, "control_dim"):
            image = system.step(x_star, np.zeros(system.control_dim))
        else:
            image = system.step(x_star)
        worst = max(worst, float(np.linalg.norm(image - x_star)))
    if worst > tol:
        raise AssertionError(f"registered equilibrium violated: residual {worst:.3e}")
    return worst
