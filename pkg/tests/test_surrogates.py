"""One-step surrogate models, checked against dense-solve oracles."""

import numpy as np
import pytest

from kedmd import (
    KoopmanSurrogate,
    WendlandKernel,
    fit_autonomous_surrogate,
    one_step_errors,
    proportionality_profile,
)
from kedmd.geometry import Box, uniform_grid
from kedmd.surrogates import (
    check_equilibrium_preservation,
    load_surrogate,
    save_surrogate,
)
from kedmd.systems import kellett


@pytest.fixture(scope="module")
def kell():
    return kellett()


@pytest.fixture(scope="module")
def sites(kell):
    return uniform_grid(kell.domain, 0.5)


def _kernel(radius=6.0):
    return WendlandKernel(dim=2, smoothness=1, support_radius=radius)


def test_standard_variant_matches_dense_oracle(kell, sites):
    lam = 1e-4
    model = KoopmanSurrogate(kernel=_kernel(), lam=lam).fit(sites, kell.step(sites))
    K = _kernel().pairwise(sites, sites)
    coeffs = np.linalg.solve(K + lam * np.eye(len(sites)), kell.step(sites))
    rng = np.random.default_rng(0)
    x = rng.uniform(-2, 2, (20, 2))
    expected = _kernel().pairwise(x, sites) @ coeffs
    np.testing.assert_allclose(model.predict(x), expected, atol=1e-9)


def test_alternative_variant_matches_dense_oracle(kell, sites):
    lam = 1e-4
    model = KoopmanSurrogate(kernel=_kernel(), lam=lam, variant="alternative").fit(
        sites, kell.step(sites)
    )
    K = _kernel().pairwise(sites, sites)
    reg = K + lam * np.eye(len(sites))
    cross = _kernel().pairwise(sites, kell.step(sites))
    coeffs = np.linalg.solve(reg, cross.T @ np.linalg.solve(reg, sites))
    rng = np.random.default_rng(1)
    x = rng.uniform(-2, 2, (20, 2))
    expected = _kernel().pairwise(x, sites) @ coeffs
    np.testing.assert_allclose(model.predict(x), expected, atol=1e-8)


def test_alternative_variant_interpolates_coordinates_at_successors(kell, sites):
    # at lam=0 the alternative model evaluated on a data site x_i equals the
    # plain coordinate interpolant evaluated at the successor F(x_i)
    from kedmd import KernelInterpolator

    alt = KoopmanSurrogate(kernel=_kernel(), lam=0.0, variant="alternative").fit(
        sites, kell.step(sites)
    )
    coords = KernelInterpolator(kernel=_kernel(), lam=0.0).fit(sites, sites)
    np.testing.assert_allclose(
        alt.predict(sites), coords.predict(kell.step(sites)), atol=1e-8
    )


def test_data_site_residual_is_small(kell, sites):
    model = fit_autonomous_surrogate(kell, sites, kernel=_kernel(), lam=0.0)
    assert model.data_site_residual() <= 1e-10


def test_equilibrium_preserved_at_data_site(kell, sites):
    assert any(np.all(row == 0.0) for row in sites)
    for variant in ("standard", "alternative"):
        model = KoopmanSurrogate(kernel=_kernel(), lam=0.0, variant=variant).fit(
            sites, kell.step(sites)
        )
        true_res, surr_res = check_equilibrium_preservation(
            kell.step, model, np.zeros(2)
        )
        assert true_res == 0.0
        assert surr_res <= 1e-10, f"{variant}: {surr_res}"


def test_unknown_variant_rejected(sites):
    with pytest.raises(ValueError):
        KoopmanSurrogate(kernel=_kernel(), variant="banana").fit(sites, sites)


def test_exit_warning_counts_successors(recwarn, kell):
    # a map that pushes boundary points outside the domain
    grow = lambda X: 1.25 * np.asarray(X, dtype=float)
    box = Box((-1.0, -1.0), (1.0, 1.0))
    sites = uniform_grid(box, 0.5)
    model = KoopmanSurrogate(kernel=_kernel()).fit(sites, grow(sites), domain=box)
    expected = int((~box.contains(grow(sites))).sum())
    assert expected > 0
    assert model.exited_domain_ == expected
    assert any("leave the domain" in str(w.message) for w in recwarn.list)


def test_one_step_errors_matches_direct_norms(kell, sites):
    model = fit_autonomous_surrogate(kell, sites, kernel=_kernel())
    rng = np.random.default_rng(3)
    pts = rng.uniform(-2, 2, (40, 2))
    errs = one_step_errors(kell.step, model, pts)
    direct = np.linalg.norm(model.predict(pts) - kell.step(pts), axis=1)
    np.testing.assert_allclose(errs, direct, atol=1e-14)


def test_rollout_tracks_truth(kell, sites):
    model = fit_autonomous_surrogate(kell, sites, kernel=_kernel())
    result = model.rollout(np.array([1.0, 0.5]), 10, true_step=kell.step)
    assert result.states.shape == (11, 2)
    assert result.true_states.shape == (11, 2)
    assert result.accumulated_errors[0] == 0.0
    assert result.exit_step is None
    np.testing.assert_array_equal(result.states[0], [1.0, 0.5])
    # recompute the accumulated error of the last step by hand
    np.testing.assert_allclose(
        result.accumulated_errors[-1],
        np.linalg.norm(result.states[-1] - result.true_states[-1]),
        atol=1e-15,
    )


def test_rollout_halts_on_domain_exit():
    grow = lambda X: 2.0 * np.asarray(X, dtype=float)
    box = Box((-1.0, -1.0), (1.0, 1.0))
    sites = uniform_grid(box, 0.25)
    model = KoopmanSurrogate(kernel=_kernel(3.0)).fit(sites, grow(sites))
    result = model.rollout(
        np.array([0.4, 0.4]), 10, domain=box, halt_on_exit=True
    )
    assert result.exit_step is not None
    assert result.states.shape[0] == result.exit_step + 1


def test_proportionality_profile_masks_data_sites(kell, sites):
    model = fit_autonomous_surrogate(kell, sites, kernel=_kernel())
    rng = np.random.default_rng(4)
    off_grid = rng.uniform(-2, 2, (30, 2))
    pts = np.vstack([sites[:5], off_grid])
    profile = proportionality_profile(kell.step, model, pts, x_star=np.zeros(2))
    ratios = profile.ratios
    assert ratios.shape[0] == pts.shape[0]
    # data sites have zero distance; their ratio slot stays zero
    np.testing.assert_array_equal(ratios[:5], np.zeros(5))
    assert np.isfinite(ratios[5:]).all()
    assert (ratios[5:] > 0).all()
    assert profile.max_ratio == pytest.approx(ratios.max())
    assert profile.dist_to_equilibrium is not None


def test_profile_box_max(kell, sites):
    model = fit_autonomous_surrogate(kell, sites, kernel=_kernel())
    rng = np.random.default_rng(5)
    pts = rng.uniform(-2, 2, (100, 2))
    profile = proportionality_profile(kell.step, model, pts)
    inner = Box((-0.5, -0.5), (0.5, 0.5))
    mask = inner.contains(pts)
    assert profile.box_max(inner) == pytest.approx(profile.errors[mask].max())


def test_save_load_round_trip(tmp_path, kell, sites):
    model = fit_autonomous_surrogate(kell, sites, kernel=_kernel(), lam=1e-8)
    save_surrogate(model, tmp_path / "m")
    loaded = load_surrogate(tmp_path / "m")
    rng = np.random.default_rng(6)
    x = rng.uniform(-2, 2, (25, 2))
    np.testing.assert_array_equal(loaded.predict(x), model.predict(x))


def test_load_rejects_other_bundles(tmp_path, kell, sites):
    from kedmd.interpolation import save_bundle

    model = fit_autonomous_surrogate(kell, sites, kernel=_kernel())
    save_bundle(model.interpolator_, tmp_path / "plain")
    with pytest.raises(ValueError):
        load_surrogate(tmp_path / "plain")


def test_custom_observables_with_left_inverse(kell, sites):
    # observe (x, ||x||^2) and recover the state by dropping the tail
    psi = lambda X: np.column_stack([X, np.sum(X**2, axis=1)])
    ups = lambda vals: vals[..., :2]
    model = KoopmanSurrogate(
        kernel=_kernel(), observables=psi, left_inverse=ups
    ).fit(sites, kell.step(sites))
    pred = model.predict(sites)
    assert pred.shape == sites.shape
    np.testing.assert_allclose(pred, kell.step(sites), atol=1e-9)
