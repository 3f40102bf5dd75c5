"""Command-line interface: fit, evaluate and verify surrogate models.

Subcommands: fit-autonomous, heatmap, lyapunov, fit-control,
control-heatmap, rollout, verify.  Experiments are described by a JSON
config file; a handful of flags (--seed, --lambda, --variant, --out,
--model) override or complete it.  Exit codes: 0 success, 2 config
error, 3 numerical failure, 4 property violation.

Every run is deterministic: sampling uses a counter-based generator
keyed by the seed, files are written with fixed float formats, and
metrics deliberately exclude wall-clock times (those go to stderr).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from .checks import run_all
from .control import (
    ControlAffineSurrogate,
    DegenerateClusterError,
    conditioning_stats,
    control_error_map,
    load_control_surrogate,
    sample_control_data,
    save_control_surrogate,
)
from .geometry import Box, chebyshev_grid, fill_distance, load_points_csv, staggered_grid, uniform_grid
from .interpolation import FactorizationError
from .kernels import WendlandKernel
from .stability import check_decrease, check_powerform_transfer, practical_region_estimate
from .surrogates import (
    KoopmanSurrogate,
    fit_autonomous_surrogate,
    load_surrogate,
    one_step_errors,
    save_surrogate,
)
from .systems import AutonomousSystem, ControlAffineSystem, get_system

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_PROPERTY = 4


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config

_DEFAULTS = {
    "system": "kellett",
    "dt": 0.05,
    "grid": {"type": "uniform", "delta": 0.2},
    "kernel": {"smoothness": 1, "support_radius": None},
    "lambda": 0.0,
    "variant": "standard",
    "seed": 0,
    "validation": {"delta": 0.025, "box_factor": 1.0},
    "control": {"n_neighbors": 25, "eps": "1/d", "bound": None, "values": None},
    "rollout": {
        "x0": None,
        "x0_box": None,
        "n_initial": 20,
        "steps": 20,
        "quantiles": [0.8, 0.9, 0.95],
        "control_hold": 5,
        "n_control_values": 10,
        "control_low": None,
        "control_high": None,
    },
    "lyapunov": {"split": 0.5, "powerform": False},
}


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


def _merge_section(name, raw):
    base = dict(_DEFAULTS[name])
    extra = set(raw) - set(base)
    _require(not extra, f"unknown keys in '{name}': {sorted(extra)}")
    base.update(raw)
    return base


def canonical_config(raw: dict) -> dict:
    """Validate a config dict and fill every default (idempotent)."""
    _require(isinstance(raw, dict), "config must be a JSON object")
    unknown = set(raw) - set(_DEFAULTS)
    _require(not unknown, f"unknown config keys: {sorted(unknown)}")
    cfg = {}
    cfg["system"] = raw.get("system", _DEFAULTS["system"])
    _require(
        isinstance(cfg["system"], (str, dict)),
        "'system' must be a system id, config path, or inline object",
    )
    cfg["dt"] = float(raw.get("dt", _DEFAULTS["dt"]))
    _require(cfg["dt"] > 0, "'dt' must be positive")

    grid = raw.get("grid", _DEFAULTS["grid"])
    _require(isinstance(grid, dict), "'grid' must be an object")
    gtype = grid.get("type", "uniform")
    allowed = {"uniform": {"delta"}, "chebyshev": {"points_per_axis"}, "file": {"path"}}
    _require(gtype in allowed, f"unknown grid type {gtype!r}")
    extra = set(grid) - allowed[gtype] - {"type"}
    _require(not extra, f"unknown keys in '{gtype}' grid: {sorted(extra)}")
    if gtype == "uniform":
        grid = {"type": "uniform", "delta": float(grid.get("delta", 0.2))}
        _require(grid["delta"] > 0, "grid delta must be positive")
    elif gtype == "chebyshev":
        grid = {"type": "chebyshev", "points_per_axis": int(grid.get("points_per_axis", 21))}
        _require(grid["points_per_axis"] >= 2, "points_per_axis must be >= 2")
    else:
        _require("path" in grid, "file grid needs a 'path'")
        grid = {"type": "file", "path": str(grid["path"])}
    cfg["grid"] = grid

    kern = raw.get("kernel", {})
    _require(isinstance(kern, dict), "'kernel' must be an object")
    extra = set(kern) - {"smoothness", "support_radius"}
    _require(not extra, f"unknown keys in 'kernel': {sorted(extra)}")
    smoothness = int(kern.get("smoothness", 1))
    _require(0 <= smoothness <= 3, "kernel smoothness must be in [0, 3]")
    radius = kern.get("support_radius")
    if radius is not None:
        radius = float(radius)
        _require(radius > 0, "support_radius must be positive")
    cfg["kernel"] = {"smoothness": smoothness, "support_radius": radius}

    cfg["lambda"] = float(raw.get("lambda", 0.0))
    _require(cfg["lambda"] >= 0, "'lambda' must be nonnegative")
    cfg["variant"] = str(raw.get("variant", "standard"))
    _require(cfg["variant"] in ("standard", "alternative"), "variant must be standard or alternative")
    cfg["seed"] = int(raw.get("seed", 0))
    _require(cfg["seed"] >= 0, "'seed' must be a nonnegative integer")

    val = _merge_section("validation", raw.get("validation", {}))
    val = {"delta": float(val["delta"]), "box_factor": float(val["box_factor"])}
    _require(val["delta"] > 0, "validation delta must be positive")
    _require(0 < val["box_factor"] <= 1, "box_factor must lie in (0, 1]")
    cfg["validation"] = val

    ctl = _merge_section("control", raw.get("control", {}))
    n_neighbors = int(ctl["n_neighbors"])
    _require(n_neighbors >= 2, "control n_neighbors must be >= 2")
    eps = ctl["eps"]
    if eps != "1/d":
        eps = float(eps)
        _require(eps >= 0, "control eps must be nonnegative or '1/d'")
    bound = ctl["bound"]
    if bound is not None:
        bound = float(bound)
        _require(bound > 0, "control bound must be positive")
    values = ctl["values"]
    if values is not None:
        if isinstance(values, dict):
            extra = set(values) - {"start", "step", "count"}
            _require(not extra, f"unknown keys in control values: {sorted(extra)}")
            values = {
                "start": float(values["start"]),
                "step": float(values["step"]),
                "count": int(values["count"]),
            }
            _require(values["count"] >= 1, "control values count must be >= 1")
        else:
            _require(isinstance(values, list) and values, "control values must be a list or range object")
            values = [[float(v) for v in np.atleast_1d(row)] for row in values]
    cfg["control"] = {"n_neighbors": n_neighbors, "eps": eps, "bound": bound, "values": values}

    roll = _merge_section("rollout", raw.get("rollout", {}))
    roll["steps"] = int(roll["steps"])
    _require(roll["steps"] >= 1, "rollout steps must be >= 1")
    roll["n_initial"] = int(roll["n_initial"])
    roll["control_hold"] = int(roll["control_hold"])
    roll["n_control_values"] = int(roll["n_control_values"])
    _require(roll["control_hold"] >= 1, "control_hold must be >= 1")
    if roll["x0"] is not None:
        roll["x0"] = [float(v) for v in roll["x0"]]
    if roll["x0_box"] is not None:
        roll["x0_box"] = [[float(lo), float(hi)] for lo, hi in roll["x0_box"]]
    roll["quantiles"] = [float(q) for q in roll["quantiles"]]
    _require(all(0 < q < 1 for q in roll["quantiles"]), "quantiles must lie in (0, 1)")
    for key in ("control_low", "control_high"):
        if roll[key] is not None:
            roll[key] = float(roll[key])
    cfg["rollout"] = roll

    lyap = _merge_section("lyapunov", raw.get("lyapunov", {}))
    lyap = {"split": float(lyap["split"]), "powerform": bool(lyap["powerform"])}
    _require(0 < lyap["split"] < 1, "lyapunov split must lie in (0, 1)")
    cfg["lyapunov"] = lyap
    return cfg


def load_config(path, args) -> dict:
    if path is None:
        raw = {}
    else:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}")
    cfg = canonical_config(raw)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = int(args.seed)
    if getattr(args, "lam", None) is not None:
        cfg["lambda"] = float(args.lam)
        _require(cfg["lambda"] >= 0, "'--lambda' must be nonnegative")
    if getattr(args, "variant", None) is not None:
        cfg["variant"] = args.variant
    return cfg


def _resolve_system(cfg):
    try:
        return get_system(cfg["system"], dt=cfg["dt"])
    except (ValueError, TypeError, OSError, KeyError) as exc:
        raise ConfigError(f"cannot resolve system: {exc}")


def _build_kernel(cfg, system):
    radius = cfg["kernel"]["support_radius"]
    if radius is None:
        radius = system.domain.diameter()
    return WendlandKernel(
        dim=system.dim, smoothness=cfg["kernel"]["smoothness"], support_radius=radius
    )


def _build_grid(cfg, system):
    grid = cfg["grid"]
    if grid["type"] == "uniform":
        return uniform_grid(system.domain, grid["delta"])
    if grid["type"] == "chebyshev":
        return chebyshev_grid(system.domain, grid["points_per_axis"])
    try:
        return load_points_csv(grid["path"])
    except OSError as exc:
        raise ConfigError(f"cannot read grid file: {exc}")


def _validation_grid(cfg, system):
    box = system.domain.scaled(cfg["validation"]["box_factor"])
    return staggered_grid(box, cfg["validation"]["delta"])


def _control_values(cfg, system):
    values = cfg["control"]["values"]
    if values is None:
        bound = cfg["control"]["bound"]
        if bound is None:
            bound = system.control_bound
        values = {"start": -bound, "step": 2.0 * bound / 20.0, "count": 20}
    if isinstance(values, dict):
        base = values["start"] + values["step"] * np.arange(values["count"])
        return base[:, None] if system.control_dim == 1 else np.tile(base[:, None], system.control_dim)
    arr = np.asarray(values, dtype=float)
    return arr.reshape(len(values), -1)


def _out_dir(args):
    out = args.out
    _require(out is not None, "--out DIR is required for this command")
    os.makedirs(out, exist_ok=True)
    return out


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _log(message):
    print(message, file=sys.stderr)


# ---------------------------------------------------------------- SVG

_VIRIDIS = (
    (0.267004, 0.004874, 0.329415),
    (0.282623, 0.140926, 0.457517),
    (0.253935, 0.265254, 0.529983),
    (0.206756, 0.371758, 0.553117),
    (0.163625, 0.471133, 0.558148),
    (0.127568, 0.566949, 0.550556),
    (0.134692, 0.658636, 0.517649),
    (0.266941, 0.748751, 0.440573),
    (0.477504, 0.821444, 0.318195),
    (0.741388, 0.873449, 0.149561),
    (0.993248, 0.906157, 0.143936),
)


def _color(t: float) -> str:
    t = min(max(t, 0.0), 1.0)
    pos = t * (len(_VIRIDIS) - 1)
    i = min(int(pos), len(_VIRIDIS) - 2)
    frac = pos - i
    rgb = [
        (1 - frac) * _VIRIDIS[i][c] + frac * _VIRIDIS[i + 1][c] for c in range(3)
    ]
    return "#{:02x}{:02x}{:02x}".format(*(int(round(255 * v)) for v in rgb))


def write_heatmap_svg(path, points, values, title="") -> None:
    """Self-contained SVG raster of scattered grid values, log10 color scale."""
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    if points.shape[1] != 2:
        raise ValueError("SVG heatmaps support planar data only")
    xs = np.unique(points[:, 0])
    ys = np.unique(points[:, 1])
    positive = values[values > 0]
    if positive.size == 0:
        lo_exp, hi_exp = -16.0, 0.0
    else:
        lo_exp = math.floor(math.log10(positive.min()))
        hi_exp = math.ceil(math.log10(positive.max()))
        if hi_exp <= lo_exp:
            hi_exp = lo_exp + 1.0
    scale = 640.0 / max(xs.size, ys.size)
    width = xs.size * scale
    height = ys.size * scale
    bar_w = 18.0
    margin = 8.0
    total_w = width + 3 * margin + bar_w + 60.0
    total_h = height + 2 * margin + (18.0 if title else 0.0)
    top = margin + (18.0 if title else 0.0)
    ix = np.searchsorted(xs, points[:, 0])
    iy = np.searchsorted(ys, points[:, 1])
    with open(path, "w") as fh:
        fh.write(
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{total_w:.0f}" '
            f'height="{total_h:.0f}" viewBox="0 0 {total_w:.0f} {total_h:.0f}">\n'
        )
        fh.write(f"<!-- log10 color scale from 1e{lo_exp:.0f} to 1e{hi_exp:.0f} -->\n")
        fh.write(f'<rect x="0" y="0" width="{total_w:.0f}" height="{total_h:.0f}" fill="white"/>\n')
        if title:
            fh.write(
                f'<text x="{margin}" y="{margin + 8}" font-family="monospace" '
                f'font-size="12">{title}</text>\n'
            )
        for k in range(points.shape[0]):
            v = values[k]
            if v > 0:
                t = (math.log10(v) - lo_exp) / (hi_exp - lo_exp)
            else:
                t = 0.0
            px = margin + ix[k] * scale
            py = top + (ys.size - 1 - iy[k]) * scale
            fh.write(
                f'<rect x="{px:.2f}" y="{py:.2f}" width="{scale + 0.5:.2f}" '
                f'height="{scale + 0.5:.2f}" fill="{_color(t)}"/>\n'
            )
        bar_x = width + 2 * margin
        steps = 32
        for s in range(steps):
            t = 1.0 - s / (steps - 1)
            py = top + s * height / steps
            fh.write(
                f'<rect x="{bar_x:.2f}" y="{py:.2f}" width="{bar_w:.2f}" '
                f'height="{height / steps + 0.5:.2f}" fill="{_color(t)}"/>\n'
            )
        fh.write(
            f'<text x="{bar_x + bar_w + 4:.2f}" y="{top + 10:.2f}" font-family="monospace" '
            f'font-size="11">1e{hi_exp:.0f}</text>\n'
        )
        fh.write(
            f'<text x="{bar_x + bar_w + 4:.2f}" y="{top + height:.2f}" font-family="monospace" '
            f'font-size="11">1e{lo_exp:.0f}</text>\n'
        )
        fh.write("</svg>\n")


def _write_error_csv(path, points, errors):
    dim = points.shape[1]
    header = ",".join(f"x{i + 1}" for i in range(dim)) + ",error"
    np.savetxt(
        path,
        np.column_stack([points, errors]),
        delimiter=",",
        header=header,
        comments="",
        fmt="%.17g",
    )


def _write_box_maxima(path, domain, points, errors, factors=(1.0, 0.5, 0.25)):
    rows = []
    for factor in factors:
        mask = domain.scaled(factor).contains(points)
        rows.append((factor, float(errors[mask].max()) if mask.any() else float("nan")))
    with open(path, "w") as fh:
        fh.write("box_factor,max_error\n")
        for factor, err in rows:
            fh.write(f"{factor:.17g},{err:.17g}\n")
    return rows


# ---------------------------------------------------------------- commands

def cmd_fit_autonomous(args) -> int:
    cfg = load_config(args.config, args)
    out = _out_dir(args)
    system = _resolve_system(cfg)
    if isinstance(system, ControlAffineSystem):
        system = system.autonomous()
    sites = _build_grid(cfg, system)
    kernel = _build_kernel(cfg, system)
    started = time.time()
    surrogate = fit_autonomous_surrogate(
        system, sites, kernel=kernel, lam=cfg["lambda"], variant=cfg["variant"]
    )
    _log(f"fit {sites.shape[0]} sites in {time.time() - started:.2f}s")
    model_dir = os.path.join(out, "model")
    save_surrogate(surrogate, model_dir)
    metrics = {
        "command": "fit-autonomous",
        "system": system.name,
        "grid": cfg["grid"],
        "d": int(sites.shape[0]),
        "lambda": cfg["lambda"],
        "variant": cfg["variant"],
        "kernel": {
            "dim": kernel.dim,
            "smoothness": kernel.smoothness,
            "support_radius": kernel.support_radius,
        },
        "jitter": surrogate.interpolator_.jitter_,
        "data_site_residual": surrogate.data_site_residual(),
        "successors_outside_domain": surrogate.exited_domain_,
        "fill_distance": fill_distance(sites, system.domain),
        "seed": cfg["seed"],
    }
    _write_json(os.path.join(out, "metrics.json"), metrics)
    print(f"model written to {model_dir}")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    cfg = load_config(args.config, args)
    out = _out_dir(args)
    _require(args.model is not None, "--model DIR is required for heatmap")
    surrogate = load_surrogate(args.model)
    system = _resolve_system(cfg)
    if isinstance(system, ControlAffineSystem):
        system = system.autonomous()
    points = _validation_grid(cfg, system)
    errors = one_step_errors(system.step, surrogate, points)
    _write_error_csv(os.path.join(out, "heatmap.csv"), points, errors)
    if system.dim == 2:
        write_heatmap_svg(
            os.path.join(out, "heatmap.svg"), points, errors,
            title=f"one-step error, {system.name}",
        )
    rows = _write_box_maxima(os.path.join(out, "box_maxima.csv"), system.domain, points, errors)
    _write_json(
        os.path.join(out, "heatmap_summary.json"),
        {
            "command": "heatmap",
            "n_points": int(points.shape[0]),
            "max_error": float(errors.max()),
            "mean_error": float(errors.mean()),
            "box_maxima": {f"{factor:g}": err for factor, err in rows},
        },
    )
    print(f"heatmap over {points.shape[0]} points written to {out}")
    return EXIT_OK


def cmd_lyapunov(args) -> int:
    cfg = load_config(args.config, args)
    out = _out_dir(args)
    _require(args.model is not None, "--model DIR is required for lyapunov")
    surrogate = load_surrogate(args.model)
    system = _resolve_system(cfg)
    if isinstance(system, ControlAffineSystem):
        system = system.autonomous()
    _require(system.lyapunov is not None, f"system {system.name} declares no Lyapunov data")
    spec = system.lyapunov
    points = _validation_grid(cfg, system)
    report = check_decrease(surrogate.predict, spec, points)
    report.to_csv(os.path.join(out, "margins.csv"))
    region = practical_region_estimate(surrogate.predict, spec, points)
    payload = {
        "command": "lyapunov",
        "margins": report.summary(),
        "practical_region": {
            "failure_radius": region.failure_radius,
            "sublevel_threshold": region.sublevel_threshold,
            "n_failures": region.n_failures,
        },
    }
    if cfg["lyapunov"]["powerform"]:
        _require(spec.power_p is not None, "powerform check needs power-form comparison functions")
        power = check_powerform_transfer(surrogate.predict, spec, points, split=cfg["lyapunov"]["split"])
        payload["powerform"] = {
            "split": power.split,
            "min_margin": power.report.min_margin,
            "n_failures": int(power.report.failure_indices.size),
        }
    _write_json(os.path.join(out, "lyapunov.json"), payload)
    print(
        f"min margin {report.min_margin:.6g} over {points.shape[0]} points "
        f"({report.failure_indices.size} failures)"
    )
    return EXIT_OK


def cmd_fit_control(args) -> int:
    cfg = load_config(args.config, args)
    out = _out_dir(args)
    system = _resolve_system(cfg)
    _require(
        isinstance(system, ControlAffineSystem),
        f"fit-control needs a control-affine system, got {system.name}",
    )
    centers = _build_grid(cfg, system)
    kernel = _build_kernel(cfg, system)
    d = centers.shape[0]
    eps = cfg["control"]["eps"]
    eps = 1.0 / d if eps == "1/d" else float(eps)
    bound = cfg["control"]["bound"]
    control_box = system.control_box if bound is None else Box((-bound,) * system.control_dim, (bound,) * system.control_dim)
    rng = np.random.Generator(np.random.Philox(key=cfg["seed"]))
    dataset = sample_control_data(
        system, centers, cfg["control"]["n_neighbors"], eps, rng, control_box=control_box
    )
    dataset.to_csv(os.path.join(out, "dataset.csv"))
    started = time.time()
    surrogate = ControlAffineSurrogate(
        kernel=kernel, n_neighbors=cfg["control"]["n_neighbors"], lam=cfg["lambda"]
    ).fit(dataset, centers, domain=system.domain)
    _log(f"fit {d} clusters ({len(dataset)} snapshots) in {time.time() - started:.2f}s")
    model_dir = os.path.join(out, "model")
    save_control_surrogate(surrogate, model_dir)
    metrics = {
        "command": "fit-control",
        "system": system.name,
        "grid": cfg["grid"],
        "d": int(d),
        "n_neighbors": cfg["control"]["n_neighbors"],
        "eps": eps,
        "cluster_radius_eps": surrogate.eps_,
        "lambda": cfg["lambda"],
        "seed": cfg["seed"],
        "control_bound": dataset.control_bound,
        "jitter": surrogate.interpolator_.jitter_,
        "conditioning": conditioning_stats(surrogate.clusters_),
        "fill_distance": surrogate.fill_distance_,
    }
    _write_json(os.path.join(out, "metrics.json"), metrics)
    print(f"model written to {model_dir}")
    return EXIT_OK


def cmd_control_heatmap(args) -> int:
    cfg = load_config(args.config, args)
    out = _out_dir(args)
    _require(args.model is not None, "--model DIR is required for control-heatmap")
    surrogate = load_control_surrogate(args.model)
    system = _resolve_system(cfg)
    _require(
        isinstance(system, ControlAffineSystem),
        "control-heatmap needs a control-affine system",
    )
    points = _validation_grid(cfg, system)
    controls = _control_values(cfg, system)
    errors = control_error_map(surrogate, system, points, controls)
    _write_error_csv(os.path.join(out, "control_heatmap.csv"), points, errors)
    if system.dim == 2:
        write_heatmap_svg(
            os.path.join(out, "control_heatmap.svg"), points, errors,
            title=f"worst-case error over {controls.shape[0]} inputs, {system.name}",
        )
    rows = _write_box_maxima(os.path.join(out, "box_maxima.csv"), system.domain, points, errors)
    _write_json(
        os.path.join(out, "control_heatmap_summary.json"),
        {
            "command": "control-heatmap",
            "n_points": int(points.shape[0]),
            "n_controls": int(controls.shape[0]),
            "max_error": float(errors.max()),
            "mean_error": float(errors.mean()),
            "box_maxima": {f"{factor:g}": err for factor, err in rows},
        },
    )
    print(f"worst-case control error map written to {out}")
    return EXIT_OK


def _write_trajectory(path, states, controls=None):
    steps = np.arange(states.shape[0])[:, None]
    cols = [steps, states]
    header = "step," + ",".join(f"x{i + 1}" for i in range(states.shape[1]))
    if controls is not None:
        padded = np.vstack([controls, np.full((1, controls.shape[1]), np.nan)])
        cols.append(padded)
        header += "," + ",".join(f"u{j + 1}" for j in range(controls.shape[1]))
    np.savetxt(
        path, np.column_stack(cols), delimiter=",", header=header, comments="", fmt="%.17g"
    )


def _rollout_single_autonomous(surrogate, system, x0, steps, out):
    result = surrogate.rollout(x0, steps, true_step=system.step, domain=system.domain)
    _write_trajectory(os.path.join(out, "surrogate_trajectory.csv"), result.states)
    _write_trajectory(os.path.join(out, "true_trajectory.csv"), result.true_states)
    data = np.column_stack(
        [
            np.arange(result.one_step_errors.size),
            result.one_step_errors,
            result.accumulated_errors[1:],
        ]
    )
    np.savetxt(
        os.path.join(out, "errors.csv"),
        data,
        delimiter=",",
        header="step,one_step_error,accumulated_error",
        comments="",
        fmt="%.17g",
    )
    return {
        "exit_step": result.exit_step,
        "final_accumulated_error": float(result.accumulated_errors[-1]),
        "max_one_step_error": float(result.one_step_errors.max()),
    }


def _rollout_batch_autonomous(surrogate, system, roll, rng, out):
    box = roll["x0_box"]
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    steps = roll["steps"]
    n = roll["n_initial"]
    starts = rng.uniform(lo, hi, (n, lo.size))
    curves = np.empty((n, steps + 1))
    for i, x0 in enumerate(starts):
        result = surrogate.rollout(x0, steps, true_step=system.step)
        curves[i] = result.accumulated_errors
    quantiles = roll["quantiles"]
    names = [f"q{int(round(q * 100))}" for q in quantiles]
    table = [np.arange(steps + 1), np.median(curves, axis=0)]
    for q in quantiles:
        table.append(np.quantile(curves, q, axis=0))
    table.append(curves.max(axis=0))
    header = "step,median," + ",".join(names) + ",max"
    np.savetxt(
        os.path.join(out, "envelope.csv"),
        np.column_stack(table),
        delimiter=",",
        header=header,
        comments="",
        fmt="%.17g",
    )
    return {
        "n_initial": n,
        "steps": steps,
        "final_median_error": float(np.median(curves[:, -1])),
        "final_max_error": float(curves[:, -1].max()),
    }


def _control_schedule(system, roll, rng, steps):
    lo = roll["control_low"]
    hi = roll["control_high"]
    bound = system.control_bound
    lo = -bound if lo is None else lo
    hi = bound if hi is None else hi
    values = rng.uniform(lo, hi, (roll["n_control_values"], system.control_dim))
    schedule = np.repeat(values, roll["control_hold"], axis=0)
    if schedule.shape[0] < steps:
        reps = int(np.ceil(steps / schedule.shape[0]))
        schedule = np.tile(schedule, (reps, 1))
    return schedule[:steps]


def _rollout_single_control(surrogate, system, x0, roll, rng, out):
    steps = roll["steps"]
    schedule = _control_schedule(system, roll, rng, steps)
    surr = [np.asarray(x0, dtype=float)]
    true = [np.asarray(x0, dtype=float)]
    one_step = []
    for k in range(steps):
        u = schedule[k]
        pred_from_true = surrogate.predict(true[-1], u)
        truth = system.step(true[-1], u)
        one_step.append(float(np.linalg.norm(pred_from_true - truth)))
        surr.append(surrogate.predict(surr[-1], u))
        true.append(truth)
    surr = np.stack(surr)
    true = np.stack(true)
    accumulated = np.linalg.norm(surr - true, axis=1)
    _write_trajectory(os.path.join(out, "surrogate_trajectory.csv"), surr, schedule)
    _write_trajectory(os.path.join(out, "true_trajectory.csv"), true, schedule)
    np.savetxt(
        os.path.join(out, "errors.csv"),
        np.column_stack([np.arange(steps), np.asarray(one_step), accumulated[1:]]),
        delimiter=",",
        header="step,one_step_error,accumulated_error",
        comments="",
        fmt="%.17g",
    )
    return {
        "steps": steps,
        "final_accumulated_error": float(accumulated[-1]),
        "max_one_step_error": float(max(one_step)),
    }


def _rollout_batch_control(surrogate, system, roll, rng, out):
    box = roll["x0_box"]
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    steps = roll["steps"]
    n = roll["n_initial"]
    starts = rng.uniform(lo, hi, (n, lo.size))
    lo_u = roll["control_low"]
    hi_u = roll["control_high"]
    bound = system.control_bound
    lo_u = -bound if lo_u is None else lo_u
    hi_u = bound if hi_u is None else hi_u
    curves = np.empty((n, steps + 1))
    for i, x0 in enumerate(starts):
        schedule = rng.uniform(lo_u, hi_u, (steps, system.control_dim))
        surr = np.asarray(x0, dtype=float)
        true = np.asarray(x0, dtype=float)
        curves[i, 0] = 0.0
        for k in range(steps):
            surr = surrogate.predict(surr, schedule[k])
            true = system.step(true, schedule[k])
            curves[i, k + 1] = float(np.linalg.norm(surr - true))
    quantiles = roll["quantiles"]
    names = [f"q{int(round(q * 100))}" for q in quantiles]
    table = [np.arange(steps + 1), np.median(curves, axis=0)]
    for q in quantiles:
        table.append(np.quantile(curves, q, axis=0))
    table.append(curves.max(axis=0))
    np.savetxt(
        os.path.join(out, "envelope.csv"),
        np.column_stack(table),
        delimiter=",",
        header="step,median," + ",".join(names) + ",max",
        comments="",
        fmt="%.17g",
    )
    return {
        "n_initial": n,
        "steps": steps,
        "final_median_error": float(np.median(curves[:, -1])),
        "final_max_error": float(curves[:, -1].max()),
    }


def cmd_rollout(args) -> int:
    cfg = load_config(args.config, args)
    out = _out_dir(args)
    _require(args.model is not None, "--model DIR is required for rollout")
    roll = cfg["rollout"]
    _require(
        roll["x0"] is not None or roll["x0_box"] is not None,
        "rollout needs 'x0' or 'x0_box'",
    )
    with open(os.path.join(args.model, "meta.json")) as fh:
        kind = json.load(fh).get("kind")
    system = _resolve_system(cfg)
    rng = np.random.Generator(np.random.Philox(key=cfg["seed"]))
    if kind == "control_affine":
        _require(
            isinstance(system, ControlAffineSystem),
            "a control surrogate needs a control-affine system for ground truth",
        )
        surrogate = load_control_surrogate(args.model)
        if roll["x0"] is not None:
            summary = _rollout_single_control(surrogate, system, roll["x0"], roll, rng, out)
        else:
            summary = _rollout_batch_control(surrogate, system, roll, rng, out)
    else:
        surrogate = load_surrogate(args.model)
        if isinstance(system, ControlAffineSystem):
            system = system.autonomous()
        if roll["x0"] is not None:
            summary = _rollout_single_autonomous(
                surrogate, system, roll["x0"], roll["steps"], out
            )
        else:
            summary = _rollout_batch_autonomous(surrogate, system, roll, rng, out)
    summary["command"] = "rollout"
    summary["seed"] = cfg["seed"]
    _write_json(os.path.join(out, "rollout.json"), summary)
    print(f"rollout artifacts written to {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    seed = args.seed if args.seed is not None else 0
    results = run_all(seed=seed)
    failures = 0
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failures += 0 if ok else 1
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return EXIT_OK if failures == 0 else EXIT_PROPERTY


# ---------------------------------------------------------------- entry

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kedmd",
        description="Kernel surrogate models of dynamical systems: fit, evaluate, verify.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, needs_model=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH", default=None, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", metavar="DIR", default=None, help="output directory")
        p.add_argument(
            "--lambda", dest="lam", type=float, default=None, help="override the ridge parameter"
        )
        p.add_argument(
            "--variant",
            choices=("standard", "alternative"),
            default=None,
            help="surrogate variant override",
        )
        if needs_model:
            p.add_argument("--model", metavar="DIR", default=None, help="fitted model bundle")
        p.set_defaults(fn=fn)
        return p

    add("fit-autonomous", cmd_fit_autonomous, "fit a one-step surrogate on a grid")
    add("heatmap", cmd_heatmap, "one-step error map of a fitted surrogate", needs_model=True)
    add("lyapunov", cmd_lyapunov, "decrease margins of a fitted surrogate", needs_model=True)
    add("fit-control", cmd_fit_control, "fit a control-affine surrogate from sampled snapshots")
    add("control-heatmap", cmd_control_heatmap, "worst-case error over a control list", needs_model=True)
    add("rollout", cmd_rollout, "iterate a fitted model against the truth", needs_model=True)
    add("verify", cmd_verify, "run the invariant suite")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except (FactorizationError, DegenerateClusterError, np.linalg.LinAlgError) as exc:
        _log(f"numerical failure: {exc}")
        return EXIT_NUMERICAL


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
