"""Fast invariant suite behind the ``verify`` CLI subcommand.

Each check returns ``(ok, detail)``; the runner prints one line per
check and the CLI maps any failure to a property-violation exit code.
The checks sample with a seeded counter-based generator, so repeated
runs are identical.
"""

from __future__ import annotations

import numpy as np

from .control import (
    ControlDataset,
    fit_control_surrogate,
    error_diagnostic,
    local_affine_fit,
    ones_term,
    sample_control_data,
)
from .geometry import Box, chebyshev_grid, fill_distance, nearest_neighbors, uniform_grid, staggered_grid
from .interpolation import (
    KernelInterpolator,
    assemble_kernel_matrix,
    native_norm,
    verify_regularizer_identities,
)
from .kernels import WendlandKernel
from .stability import check_decrease, margin_transfer_check
from .surrogates import (
    check_equilibrium_preservation,
    fit_autonomous_surrogate,
    one_step_errors,
    proportionality_profile,
)
from .systems import duffing, kellett, verify_equilibria


def _rng(seed):
    return np.random.Generator(np.random.Philox(key=seed))


def check_kernel_positive_definite(seed=0):
    rng = _rng(seed)
    worst = np.inf
    for trial in range(50):
        dim = int(rng.integers(1, 4))
        smoothness = int(rng.integers(0, 4))
        count = int(rng.integers(5, 41))
        pts = rng.uniform(-2, 2, (count, dim))
        kernel = WendlandKernel(dim=dim, smoothness=smoothness, support_radius=float(rng.uniform(1, 8)))
        try:
            K = assemble_kernel_matrix(kernel, pts)
        except ValueError:
            continue  # random duplicate, vanishingly unlikely
        worst = min(worst, float(np.linalg.eigvalsh(K)[0]))
    return worst > 0.0, f"min eigenvalue over 50 draws: {worst:.3e}"


def check_kernel_symmetry_and_support(seed=0):
    rng = _rng(seed)
    kernel = WendlandKernel(dim=3, smoothness=2, support_radius=1.5)
    for _ in range(200):
        x = rng.uniform(-2, 2, 3)
        y = rng.uniform(-2, 2, 3)
        kxy, kyx = kernel(x, y), kernel(y, x)
        if kxy != kyx:
            return False, f"asymmetry at {x}, {y}"
        if not 0.0 <= kxy <= 1.0:
            return False, f"value {kxy} outside [0, phi(0)]"
        gap = np.linalg.norm(y - x)
        if gap > 0:
            far = x + (1.5 + 0.05) * (y - x) / gap
            if kernel(x, far) != 0.0:
                return False, "support violation: nonzero beyond radius sigma"
    return True, "200 random pairs"


def check_kernel_gradient(seed=0):
    rng = _rng(seed)
    worst = 0.0
    for _ in range(100):
        smoothness = int(rng.integers(1, 4))
        kernel = WendlandKernel(dim=2, smoothness=smoothness, support_radius=2.5)
        x = rng.uniform(-1, 1, 2)
        y = rng.uniform(-1, 1, 2)
        if np.linalg.norm(x - y) < 1e-3:
            continue
        grad = kernel.gradient(x, y)
        h = 1e-6
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd = (kernel(x + e, y) - kernel(x - e, y)) / (2 * h)
            worst = max(worst, abs(fd - grad[i]) / max(1.0, abs(fd)))
    return worst < 1e-5, f"max relative FD mismatch {worst:.3e}"


def check_grids():
    box = Box((-2.0, -2.0), (2.0, 2.0))
    X = uniform_grid(box, 0.2)
    if X.shape != (441, 2):
        return False, f"uniform 0.2 grid has shape {X.shape}"
    if not box.contains(X).all():
        return False, "uniform grid leaves the box"
    cheb = chebyshev_grid(Box((-1.0,), (1.0,)), 3).ravel()
    if np.max(np.abs(cheb - np.array([-1.0, 0.0, 1.0]))) > 1e-15:
        return False, f"3-point Lobatto axis is {cheb}"
    return True, "counts, membership, Lobatto endpoints"


def check_fill_distance():
    box = Box((0.0, 0.0), (1.0, 1.0))
    cloud = uniform_grid(box, 0.25)
    h = fill_distance(cloud, box, probe_resolution=0.01)
    expected = 0.25 / np.sqrt(2.0)
    if abs(h - expected) > 0.02:
        return False, f"uniform-grid fill distance {h} vs {expected}"
    finer = fill_distance(uniform_grid(box, 0.125), box, probe_resolution=0.01)
    if finer > h + 1e-12:
        return False, "fill distance grew under refinement"
    zero = fill_distance(cloud, box, probe_resolution=0.25)
    return zero == 0.0, f"h={h:.4f}, refined={finer:.4f}, self-probe={zero}"


def check_knn(seed=0):
    rng = _rng(seed)
    cloud = rng.uniform(-1, 1, (200, 3))
    for _ in range(100):
        x = rng.uniform(-1, 1, 3)
        idx = nearest_neighbors(x, cloud, 7)
        dists = np.array([np.linalg.norm(x - p) for p in cloud])
        order = sorted(range(200), key=lambda i: (dists[i], i))[:7]
        if list(idx) != order:
            return False, f"knn mismatch at {x}"
        got = dists[idx]
        if np.any(np.diff(got) < 0):
            return False, "knn distances not ascending"
    return True, "100 queries vs exhaustive scan"


def _small_kellett_fit(lam=0.0, delta=0.4, variant="standard"):
    system = kellett()
    sites = uniform_grid(system.domain, delta)
    kernel = WendlandKernel(dim=2, smoothness=1, support_radius=system.domain.diameter())
    return system, fit_autonomous_surrogate(system, sites, kernel=kernel, lam=lam, variant=variant)


def check_interpolation_exactness():
    _, surrogate = _small_kellett_fit()
    resid = surrogate.data_site_residual()
    return resid <= 1e-8, f"max data-site residual {resid:.3e}"


def check_canonical_feature(seed=0):
    rng = _rng(seed)
    pts = rng.uniform(-2, 2, (40, 2))
    kernel = WendlandKernel(dim=2, smoothness=1, support_radius=6.0)
    K = assemble_kernel_matrix(kernel, pts)
    j = 17
    model = KernelInterpolator(kernel=kernel).fit(pts, K[:, j])
    err = float(np.abs(model.coefficients_[:, 0] - np.eye(40)[j]).max())
    return err <= 1e-8, f"coefficient deviation from unit vector {err:.3e}"


def check_regularizer_identities(seed=0):
    system = kellett()
    sites = uniform_grid(system.domain, 0.4)
    kernel = WendlandKernel(dim=2, smoothness=1, support_radius=system.domain.diameter())
    worst = 0.0
    for lam in (1e-4, 1e-2, 1.0):
        report = verify_regularizer_identities(kernel, sites, lam, trials=20, rng=_rng(seed))
        worst = max(worst, report.max_violation)
        if not report.passed:
            return False, f"lam={lam}: {report.failures[0]}"
    return True, f"max violation {worst:.3e} over lam in {{1e-4, 1e-2, 1}}"


def check_residual_identity(seed=0):
    rng = _rng(seed)
    system = kellett()
    sites = uniform_grid(system.domain, 0.4)
    kernel = WendlandKernel(dim=2, smoothness=1, support_radius=system.domain.diameter())
    K = assemble_kernel_matrix(kernel, sites)
    lam = 1e-2
    worst = 0.0
    for _ in range(20):
        f_sites = K @ rng.standard_normal(len(sites))
        model = KernelInterpolator(kernel=kernel, lam=lam).fit(sites, f_sites)
        lhs = f_sites - model.predict(sites)
        rhs = lam * np.linalg.solve(K + lam * np.eye(len(sites)), f_sites)
        worst = max(worst, float(np.linalg.norm(lhs - rhs) / np.linalg.norm(f_sites)))
    return worst <= 1e-10, f"max relative deviation {worst:.3e}"


def check_norm_monotone_in_lambda(seed=0):
    rng = _rng(seed)
    pts = rng.uniform(-2, 2, (60, 2))
    kernel = WendlandKernel(dim=2, smoothness=1, support_radius=6.0)
    targets = np.sin(pts[:, 0]) * pts[:, 1]
    norms = []
    for lam in (0.0, 1e-3, 1e-1, 10.0):
        model = KernelInterpolator(kernel=kernel, lam=lam).fit(pts, targets)
        norms.append(float(model.native_norms()[0]))
    ok = all(norms[i] >= norms[i + 1] - 1e-9 for i in range(len(norms) - 1))
    return ok, "norms " + ", ".join(f"{v:.4g}" for v in norms)


def check_pointwise_bound(seed=0):
    rng = _rng(seed)
    pts = rng.uniform(-2, 2, (50, 2))
    kernel = WendlandKernel(dim=2, smoothness=2, support_radius=5.0)
    model = KernelInterpolator(kernel=kernel).fit(pts, rng.standard_normal(50))
    for _ in range(200):
        x = rng.uniform(-2, 2, 2)
        lhs, rhs = model.pointwise_bound(x)
        if lhs > rhs * (1 + 1e-12) + 1e-12:
            return False, f"bound violated at {x}: {lhs} > {rhs}"
    return True, "200 random evaluation points"


def check_equilibrium_both_variants():
    worst = 0.0
    for variant in ("standard", "alternative"):
        system, surrogate = _small_kellett_fit(variant=variant)
        _, resid = check_equilibrium_preservation(system.step, surrogate, np.zeros(2))
        worst = max(worst, resid)
    return worst <= 1e-10, f"max equilibrium residual {worst:.3e}"


def check_proportionality_stable():
    system = kellett()
    kernel = WendlandKernel(dim=2, smoothness=1, support_radius=system.domain.diameter())
    ratios = []
    for delta in (0.4, 0.2):
        surrogate = fit_autonomous_surrogate(
            system, uniform_grid(system.domain, delta), kernel=kernel
        )
        profile = proportionality_profile(
            system.step, surrogate, staggered_grid(system.domain, 0.1)
        )
        ratios.append(profile.max_ratio)
    ok = ratios[1] <= 4.0 * ratios[0] and np.isfinite(ratios).all()
    return ok, f"max error/dist ratios {ratios[0]:.4g} -> {ratios[1]:.4g}"


def check_margin_bit_identity(seed=0):
    rng = _rng(seed)
    system = kellett()
    spec = system.lyapunov
    pts = rng.uniform(-2, 2, (100, 2))
    report = check_decrease(system.step, spec, pts)
    direct = (
        spec.V(pts)
        - spec.alpha_V(np.linalg.norm(pts - spec.x_star_arr, axis=1))
        - spec.V(system.step(pts))
    )
    same = np.array_equal(report.margins, direct)
    return same, "margins match the defining expression bit for bit"


def check_true_decrease(seed=0):
    rng = _rng(seed)
    system = kellett()
    pts = rng.uniform(-2, 2, (10000, 2))
    report = check_decrease(system.step, system.lyapunov, pts)
    return report.min_margin >= -1e-12, f"min margin {report.min_margin:.3e} on 10^4 samples"


def check_margin_transfer():
    system, surrogate = _small_kellett_fit(delta=0.1)
    spec = system.lyapunov
    val = staggered_grid(system.domain, 0.05)
    true_report = check_decrease(system.step, spec, val)
    surr_report = check_decrease(surrogate.predict, spec, val)
    errors = one_step_errors(system.step, surrogate, val)
    result = margin_transfer_check(
        true_report.margins, surr_report.margins, errors, spec.omega_V
    )
    return result.ok, (
        f"premise held at {result.premise_count}/{result.n_points} points, "
        f"{len(result.violation_indices)} violations"
    )


def check_registered_equilibria():
    worst = max(verify_equilibria(kellett()), verify_equilibria(duffing()))
    return True, f"max residual {worst:.3e}"


def check_true_affinity(seed=0):
    rng = _rng(seed)
    system = duffing()
    worst = 0.0
    for _ in range(100):
        x = rng.uniform(-2, 2, 2)
        u1, u2 = rng.uniform(-2, 2, 2)
        second_diff = (
            system.step(x, u1 + u2)
            - system.step(x, np.array([u1]))
            - system.step(x, np.array([u2]))
            + system.step(x, np.array([0.0]))
        )
        worst = max(worst, float(np.abs(second_diff).max()))
    return worst <= 1e-12, f"max second difference {worst:.3e}"


def check_lstsq_optimality(seed=0):
    rng = _rng(seed)
    worst = -np.inf
    for _ in range(50):
        controls = rng.uniform(-2, 2, (25, 1))
        successors = rng.standard_normal((25, 2))
        H, _, _ = local_affine_fit(controls, successors)
        U = np.vstack([np.ones(25), controls.T])
        base = np.linalg.norm(successors.T - H @ U)
        for _ in range(5):
            perturbed = np.linalg.norm(successors.T - (H + 1e-3 * rng.standard_normal(H.shape)) @ U)
            worst = max(worst, base - perturbed)
    return worst <= 1e-12, f"max residual improvement under perturbation {worst:.3e}"


def _exact_center_fit(seed=0, points_per_axis=5):
    system = duffing()
    centers = chebyshev_grid(system.domain, points_per_axis)
    kernel = WendlandKernel(dim=2, smoothness=1, support_radius=system.domain.diameter())
    dataset = sample_control_data(system, centers, 25, 0.0, _rng(seed))
    surrogate, regression = fit_control_surrogate(
        dataset, centers, kernel=kernel, n_neighbors=25
    )
    return system, centers, surrogate, regression


def check_exact_recovery(seed=0):
    system, centers, _, regression = _exact_center_fit(seed)
    worst = 0.0
    for ell, center in enumerate(centers):
        truth = np.column_stack([system.drift(center), system.control_matrix(center)])
        worst = max(worst, float(np.linalg.norm(regression.solutions[ell] - truth)))
    return worst <= 1e-8, f"max recovery residual {worst:.3e}"


def check_surrogate_affinity(seed=0):
    _, _, surrogate, _ = _exact_center_fit(seed)
    rng = _rng(seed + 1)
    worst = 0.0
    for _ in range(50):
        x = rng.uniform(-2, 2, 2)
        u1, u2 = rng.uniform(-2, 2, 2)
        second_diff = (
            surrogate.predict(x, u1 + u2)
            - surrogate.predict(x, u1)
            - surrogate.predict(x, u2)
            + surrogate.predict(x, 0.0)
        )
        worst = max(worst, float(np.abs(second_diff).max()))
    return worst <= 1e-12, f"max second difference {worst:.3e}"


def check_conditioning_value():
    _, lam_min, stat = local_affine_fit(np.array([[-1.0], [0.0], [1.0]]), np.zeros((3, 2)))
    err = abs(stat - np.sqrt(1.5))
    return err <= 1e-12 and lam_min == 2.0, f"sqrt(N)||pinv(U)|| off by {err:.3e}"


def check_ones_term(seed=0):
    rng = _rng(seed)
    kernel = WendlandKernel(dim=2, smoothness=1, support_radius=6.0)
    pts = rng.uniform(-2, 2, (12, 2))
    K = assemble_kernel_matrix(kernel, pts)
    exact, method = ones_term(K, crossover=16)
    bound, bound_method = ones_term(K, crossover=4)
    ok = method == "exact" and bound_method == "bound" and exact <= bound * (1 + 1e-12)
    return ok, f"exact {exact:.4g} <= bound {bound:.4g}"


def check_diagnostic_structure(seed=0):
    system, centers, surrogate, _ = _exact_center_fit(seed)
    surrogate.fill_distance_ = fill_distance(centers, system.domain, probe_resolution=0.05)
    on_center = error_diagnostic(surrogate, centers[3], 1.0, 1.0)
    if on_center.geometry_term != 0.0:
        return False, "geometry term nonzero at a center"
    if on_center.sampling_term != 0.0:
        return False, "sampling term nonzero for exact-center data"
    off = error_diagnostic(surrogate, np.array([0.3, -0.7]), 1.0, 1.0)
    ok = off.geometry_term > 0.0 and off.total >= off.geometry_term
    return ok, (
        f"center: ({on_center.geometry_term}, {on_center.sampling_term}); "
        f"off-center geometry term {off.geometry_term:.3e}"
    )


def check_dataset_roundtrip(seed=0):
    import os
    import tempfile

    rng = _rng(seed)
    system = duffing()
    centers = uniform_grid(system.domain, 1.0)
    dataset = sample_control_data(system, centers, 5, 0.1, rng)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "data.csv")
        dataset.to_csv(path)
        back = ControlDataset.from_csv(path, control_bound=dataset.control_bound)
    same = (
        np.array_equal(dataset.states, back.states)
        and np.array_equal(dataset.controls, back.controls)
        and np.array_equal(dataset.successors, back.successors)
    )
    return same, f"{len(dataset)} rows preserved exactly"


ALL_CHECKS = (
    ("kernel positive definite", check_kernel_positive_definite),
    ("kernel symmetry and support", check_kernel_symmetry_and_support),
    ("kernel gradient vs finite differences", check_kernel_gradient),
    ("grid construction", check_grids),
    ("fill distance", check_fill_distance),
    ("nearest neighbors vs oracle", check_knn),
    ("interpolation exact at sites", check_interpolation_exactness),
    ("canonical feature interpolation", check_canonical_feature),
    ("regularizer identities", check_regularizer_identities),
    ("ridge residual identity", check_residual_identity),
    ("native norm monotone in lambda", check_norm_monotone_in_lambda),
    ("pointwise bound", check_pointwise_bound),
    ("equilibrium preservation (both variants)", check_equilibrium_both_variants),
    ("proportional error profile stable", check_proportionality_stable),
    ("margin identity bit-exact", check_margin_bit_identity),
    ("benchmark decrease holds", check_true_decrease),
    ("margin transfer implication", check_margin_transfer),
    ("registered equilibria fixed", check_registered_equilibria),
    ("control system affine in input", check_true_affinity),
    ("cluster fit is least squares", check_lstsq_optimality),
    ("exact recovery from exact centers", check_exact_recovery),
    ("surrogate affine in input", check_surrogate_affinity),
    ("conditioning statistic exact value", check_conditioning_value),
    ("sign-vector term exact vs bound", check_ones_term),
    ("diagnostic term structure", check_diagnostic_structure),
    ("control dataset CSV round-trip", check_dataset_roundtrip),
)


def run_all(seed: int = 0):
    """Run every check; returns a list of (name, ok, detail)."""
    results = []
    for name, fn in ALL_CHECKS:
        try:
            ok, detail = fn(seed) if fn.__code__.co_argcount else fn()
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((name, bool(ok), detail))
    return results
