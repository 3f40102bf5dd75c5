"""Interpolator behavior is pinned against explicit dense linear algebra.

Every oracle here re-derives the expected quantity with plain
``np.linalg`` calls on the assembled kernel matrix, independent of the
factorization path used by the implementation.
"""

import numpy as np
import pytest

from kedmd import (
    FactorizationError,
    KernelInterpolator,
    WendlandKernel,
    assemble_kernel_matrix,
    native_norm,
    verify_regularizer_identities,
)
from kedmd.interpolation import load_bundle, save_bundle


@pytest.fixture
def kernel():
    return WendlandKernel(dim=2, smoothness=1, support_radius=4.0)


@pytest.fixture
def sites(kernel):
    rng = np.random.default_rng(42)
    return rng.uniform(-1, 1, (25, 2))


def test_interpolation_is_exact_at_sites(kernel, sites):
    rng = np.random.default_rng(0)
    y = rng.normal(size=(25, 3))
    model = KernelInterpolator(kernel=kernel, lam=0.0).fit(sites, y)
    np.testing.assert_allclose(model.predict(sites), y, atol=1e-10)
    assert model.solve_residual_ <= 1e-10


def test_prediction_matches_dense_solve_oracle(kernel, sites):
    rng = np.random.default_rng(1)
    y = rng.normal(size=25)
    model = KernelInterpolator(kernel=kernel, lam=0.0).fit(sites, y)
    K = kernel.pairwise(sites, sites)
    alpha = np.linalg.solve(K, y)
    x = rng.uniform(-1, 1, (40, 2))
    expected = kernel.pairwise(x, sites) @ alpha
    np.testing.assert_allclose(model.predict(x), expected, atol=1e-9)


def test_ridge_prediction_matches_dense_solve_oracle(kernel, sites):
    rng = np.random.default_rng(2)
    y = rng.normal(size=25)
    lam = 1e-3
    model = KernelInterpolator(kernel=kernel, lam=lam).fit(sites, y)
    K = kernel.pairwise(sites, sites)
    alpha = np.linalg.solve(K + lam * np.eye(25), y)
    x = rng.uniform(-1, 1, (10, 2))
    expected = kernel.pairwise(x, sites) @ alpha
    np.testing.assert_allclose(model.predict(x), expected, atol=1e-10)


def test_residual_identity_against_oracle(kernel, sites):
    # f_X - (R f)_X = lam (K + lam I)^{-1} f_X
    rng = np.random.default_rng(3)
    y = rng.normal(size=25)
    lam = 0.05
    model = KernelInterpolator(kernel=kernel, lam=lam).fit(sites, y)
    K = kernel.pairwise(sites, sites)
    expected_residual = lam * np.linalg.solve(K + lam * np.eye(25), y)
    got = y - model.predict(sites)
    np.testing.assert_allclose(got, expected_residual, atol=1e-12)


def test_native_norm_matches_eigendecomposition(kernel, sites):
    rng = np.random.default_rng(4)
    y = rng.normal(size=25)
    model = KernelInterpolator(kernel=kernel, lam=0.0).fit(sites, y)
    K = kernel.pairwise(sites, sites)
    # ||f||^2 = y^T K^{-1} y, computed through the spectral decomposition
    w, V = np.linalg.eigh(K)
    expected = np.sqrt(np.sum((V.T @ y) ** 2 / w))
    got = model.native_norms()
    assert got.shape == (1,)
    assert got[0] == pytest.approx(expected, rel=1e-8)
    alpha = np.linalg.solve(K, y)
    assert native_norm(K, alpha) == pytest.approx(expected, rel=1e-8)


def test_pointwise_bound_holds(kernel, sites):
    rng = np.random.default_rng(5)
    y = rng.normal(size=25)
    model = KernelInterpolator(kernel=kernel, lam=0.0).fit(sites, y)
    for _ in range(50):
        x = rng.uniform(-1.5, 1.5, 2)
        value_sq, bound_sq = model.pointwise_bound(x)
        assert value_sq <= bound_sq * (1 + 1e-9)


def test_norm_shrinks_under_regularization(kernel, sites):
    rng = np.random.default_rng(6)
    y = rng.normal(size=25)
    exact = KernelInterpolator(kernel=kernel, lam=0.0).fit(sites, y)
    ridge = KernelInterpolator(kernel=kernel, lam=1e-2).fit(sites, y)
    assert ridge.native_norms()[0] < exact.native_norms()[0]


def test_regularizer_identities(kernel, sites):
    for lam in (1e-4, 1e-2, 1.0):
        check = verify_regularizer_identities(
            kernel, sites, lam, trials=20, rng=np.random.default_rng(7)
        )
        assert check.passed, check.failures
        assert check.max_violation <= 1e-9


def test_duplicate_sites_are_rejected(kernel):
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(ValueError, match="duplicate"):
        assemble_kernel_matrix(kernel, pts)


def test_jitter_ladder_rescues_near_singular_fit(kernel):
    # two nearly coincident sites make the Gram matrix numerically rank
    # deficient; the ladder must still produce a usable factorization
    pts = np.array([[0.0, 0.0], [1e-13, 0.0], [1.0, 0.0], [0.0, 1.0]])
    y = np.array([1.0, 1.0, 2.0, 3.0])
    model = KernelInterpolator(kernel=kernel).fit(pts, y)
    assert np.isfinite(model.predict(pts)).all()


def test_factorization_error_when_ladder_exhausted(kernel):
    pts = np.array([[0.0, 0.0], [1e-13, 0.0], [1.0, 0.0]])
    y = np.array([1.0, 1.0, 2.0])
    model = KernelInterpolator(kernel=kernel, jitter_ladder=(0.0,))
    try:
        model.fit(pts, y)
    except FactorizationError as exc:
        assert "jitter" in str(exc) or "factoriz" in str(exc).lower()
    else:
        # tolerable on platforms whose Cholesky absorbs the degeneracy
        assert model.jitter_ == 0.0


def test_fit_validates_shapes(kernel, sites):
    with pytest.raises(ValueError):
        KernelInterpolator(kernel=kernel).fit(sites, np.zeros(7))
    with pytest.raises(ValueError):
        KernelInterpolator(kernel=kernel).fit(sites[:, :1], np.zeros(25))
    with pytest.raises(ValueError):
        KernelInterpolator(kernel=kernel, lam=-1.0).fit(sites, np.zeros(25))


def test_get_params_round_trip(kernel):
    model = KernelInterpolator(kernel=kernel, lam=0.5, refine_steps=2)
    params = model.get_params()
    clone = KernelInterpolator(**params)
    assert clone.lam == 0.5
    assert clone.refine_steps == 2
    assert clone.kernel is kernel


def test_bundle_round_trip(tmp_path, kernel, sites):
    rng = np.random.default_rng(8)
    y = rng.normal(size=(25, 2))
    model = KernelInterpolator(kernel=kernel, lam=1e-6).fit(sites, y)
    save_bundle(model, tmp_path / "m", extra_meta={"kind": "plain"})
    loaded, meta = load_bundle(tmp_path / "m")
    assert meta["kind"] == "plain"
    x = rng.uniform(-1, 1, (30, 2))
    np.testing.assert_array_equal(loaded.predict(x), model.predict(x))
    np.testing.assert_array_equal(loaded.centers_, model.centers_)


def test_bundle_files_are_stable(tmp_path, kernel, sites):
    y = np.arange(25, dtype=float)
    model = KernelInterpolator(kernel=kernel).fit(sites, y)
    save_bundle(model, tmp_path / "a")
    save_bundle(model, tmp_path / "b")
    for name in ("centers.csv", "coefficients.csv", "meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
