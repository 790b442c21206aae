import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from climclust import transforms as tr
from climclust.data import Dataset, SyntheticSpec, center_global, generate_synthetic, synthetic_components
from climclust.errors import ConfigError, DataError, DegenerateDataError
from oracles import haar_matrix, real_dft_matrix


def _ds(values):
    values = np.asarray(values, dtype=float)
    return Dataset(values, np.arange(values.shape[0]), np.zeros(values.shape[0]))


def _random(n, t, seed=0):
    return _ds(np.random.default_rng(seed).normal(size=(n, t)))


series = arrays(np.float64, st.tuples(st.integers(2, 6), st.integers(2, 40)), elements=st.floats(-100, 100))


# ---------------------------------------------------------------------------
# energy selection


def test_select_by_energy_ties_and_threshold():
    e = np.array([1.0, 3.0, 3.0, 1.0, 2.0])
    np.testing.assert_array_equal(tr.select_by_energy(e, 0.3), [1])
    np.testing.assert_array_equal(tr.select_by_energy(e, 0.6), [1, 2])
    np.testing.assert_array_equal(tr.select_by_energy(e, 0.8), [1, 2, 4])
    np.testing.assert_array_equal(tr.select_by_energy(e, 0.9), [0, 1, 2, 4])
    np.testing.assert_array_equal(tr.select_by_energy(e, 1.0), [0, 1, 2, 3, 4])


def test_select_rejects_zero_energy():
    with pytest.raises(DegenerateDataError):
        tr.select_by_energy(np.zeros(4), 0.5)


@pytest.mark.parametrize("alpha", [0, -0.1, 1.01, float("nan")])
def test_invalid_alpha(alpha):
    ds = _random(3, 8)
    for fn in (lambda: tr.transform_haar(ds, energy=alpha), lambda: tr.transform_fourier(ds, alpha),
               lambda: tr.transform_pca(ds, alpha)):
        with pytest.raises(ConfigError):
            fn()


# ---------------------------------------------------------------------------
# mean


def test_mean_feature():
    rep = tr.transform_mean(_ds([[1, 2, 3], [4, 4, 4]]))
    np.testing.assert_array_equal(rep.features, [[2.0], [4.0]])


def test_mean_of_centered_data_sums_to_zero():
    c = center_global(_random(5, 12, seed=4))
    rep = tr.transform_mean(c)
    assert abs(rep.features.sum() * c.length) < 1e-10


def test_mean_recovers_location_offsets():
    spec = SyntheticSpec(location_mean_spread=5, scenario_shape_amplitude=0, noise_std=0,
                         n_locations=4, n_scenarios=3, T=32)
    ds = generate_synthetic(spec)
    means, _, _ = synthetic_components(spec)
    rep = tr.transform_mean(ds)
    np.testing.assert_allclose(rep.features[:, 0], means[ds.location_ids], atol=1e-12)


def test_mean_has_no_basis():
    with pytest.raises(DataError):
        tr.reconstruct(tr.transform_mean(_random(3, 4)))


# ---------------------------------------------------------------------------
# Haar


@pytest.mark.parametrize("n", [1, 2, 4, 8, 32])
def test_haar_forward_matches_matrix(n):
    x = np.random.default_rng(n).normal(size=(3, n))
    np.testing.assert_allclose(tr.haar_forward(x), x @ haar_matrix(n).T, atol=1e-12)
    np.testing.assert_allclose(tr.haar_inverse(tr.haar_forward(x)), x, atol=1e-12)


def test_haar_constant_series():
    coef = tr.haar_coefficients(np.full((1, 16), 3.0))
    assert coef[0, 0] == pytest.approx(12.0)
    np.testing.assert_array_equal(coef[0, 1:], 0.0)


def test_haar_parseval_16():
    x = np.random.default_rng(16).normal(size=16)
    c = tr.haar_coefficients(x[None])[0]
    assert abs(np.sum(c**2) - np.sum(x**2)) <= 1e-10 * np.sum(x**2)


@given(series)
def test_haar_parseval_any_length(values):
    c = tr.haar_coefficients(values)
    e0 = np.sum(values**2, axis=1)
    np.testing.assert_allclose(np.sum(c**2, axis=1), e0, rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("t", [16, 21, 100])
def test_haar_full_energy_reconstructs(t):
    ds = _random(4, t, seed=t)
    rep = tr.transform_haar(ds, energy=1.0)
    assert rep.n_features <= tr.padded_length(t)
    np.testing.assert_allclose(tr.reconstruct(rep), ds.values, atol=1e-9)
    full = tr.transform_haar(ds, level=math.ceil(math.log2(t)))
    assert full.n_features == tr.padded_length(t)
    np.testing.assert_allclose(tr.reconstruct(full), ds.values, atol=1e-9)


def test_haar_level_nesting_and_bounds():
    t = 100
    prev = set()
    for level in range(0, 8):
        kept = set(tr.haar_level_positions(level, t).tolist())
        assert prev <= kept
        assert len(kept) == min(2**level, 128)
        prev = kept
    with pytest.raises(ConfigError):
        tr.haar_level_positions(8, t)
    with pytest.raises(ConfigError):
        tr.haar_level_positions(-1, t)


def test_haar_level_zero_is_scaled_mean():
    ds = _random(3, 10)
    rep = tr.transform_haar(ds, level=0)
    np.testing.assert_allclose(rep.features[:, 0], math.sqrt(10) * ds.values.mean(axis=1))


def test_haar_requires_one_mode():
    ds = _random(3, 8)
    with pytest.raises(ConfigError):
        tr.transform_haar(ds)
    with pytest.raises(ConfigError):
        tr.transform_haar(ds, level=1, energy=0.9)


def test_haar_truncation_is_orthogonal_projection():
    ds = _random(5, 32, seed=3)
    rep = tr.transform_haar(ds, energy=0.6)
    recon = tr.reconstruct(rep)
    resid = ds.values - recon
    # the residual is orthogonal to the kept atoms
    np.testing.assert_allclose(resid @ tr.basis_matrix(rep).T, 0.0, atol=1e-10)
    # feature distances equal distances between reconstructions
    d_feat = np.linalg.norm(rep.features[0] - rep.features[1])
    d_rec = np.linalg.norm(recon[0] - recon[1])
    assert d_feat == pytest.approx(d_rec, rel=1e-12)


# ---------------------------------------------------------------------------
# Fourier


@pytest.mark.parametrize("t", [2, 7, 8, 33])
def test_fourier_matches_explicit_basis(t):
    x = np.random.default_rng(t).normal(size=(3, t))
    np.testing.assert_allclose(tr.fourier_coefficients(x), x @ real_dft_matrix(t).T, atol=1e-12)
    np.testing.assert_allclose(tr.fourier_inverse(tr.fourier_coefficients(x)), x, atol=1e-12)


@pytest.mark.parametrize("k", [1, 5, 12])
@pytest.mark.parametrize("alpha", [0.1, 0.95, 1.0])
def test_fourier_pure_cosine(k, alpha):
    t = np.arange(64)
    ds = _ds([np.cos(2 * np.pi * k * t / 64), 2 * np.cos(2 * np.pi * k * t / 64 + 0.3)])
    rep = tr.transform_fourier(ds, alpha)
    assert rep.params["frequencies"] == [k]
    np.testing.assert_array_equal(rep.kept, [2 * k - 1, 2 * k])


def test_fourier_strong_and_weak_sinusoid():
    t = np.arange(128)
    x = 10 * np.sin(2 * np.pi * t / 128) + 0.1 * np.sin(2 * np.pi * 7 * t / 128)
    ds = _ds([x, 0.5 * x])
    rep = tr.transform_fourier(ds, 0.95)
    assert rep.params["frequencies"] == [1]


@pytest.mark.parametrize("t", [31, 64])
def test_fourier_full_energy_reconstructs(t):
    ds = _random(4, t, seed=t)
    rep = tr.transform_fourier(ds, 1.0)
    np.testing.assert_allclose(tr.reconstruct(rep), ds.values, atol=1e-9)


@given(series)
def test_fourier_parseval(values):
    c = tr.fourier_coefficients(values)
    np.testing.assert_allclose(np.sum(c**2, axis=1), np.sum(values**2, axis=1), rtol=1e-9, atol=1e-9)


# ---------------------------------------------------------------------------
# PCA


def test_pca_collinear_records():
    rng = np.random.default_rng(1)
    direction = rng.normal(size=6)
    values = rng.normal(size=(8, 1)) * direction + 3.0
    for alpha in (0.5, 0.95, 1.0):
        assert tr.transform_pca(_ds(values), alpha).n_features == 1


def test_pca_explicit_eigenvalues():
    # 4 records in 3 dims; population variances 9, 0.5, 0.5 along the axes
    values = np.array([
        [3.0, 1.0, 0.0],
        [3.0, -1.0, 0.0],
        [-3.0, 0.0, 1.0],
        [-3.0, 0.0, -1.0],
    ])
    mu, var, directions, scores = tr.pca_decomposition(values)
    np.testing.assert_allclose(var, [9.0, 0.5, 0.5], atol=1e-12)
    ratio = var / var.sum()
    assert ratio[0] == pytest.approx(0.9)
    assert tr.transform_pca(_ds(values), 0.9).n_features == 1
    assert tr.transform_pca(_ds(values), 0.95).n_features == 2


def test_pca_ratios_sum_to_one_and_gram_path():
    for shape in ((6, 40), (40, 6)):
        ds = _random(*shape, seed=sum(shape))
        rep = tr.transform_pca(ds, 1.0)
        ev = rep.explained_variance
        assert (ev / ev.sum()).sum() == pytest.approx(1.0)
        # total variance equals the trace of the covariance
        assert ev.sum() == pytest.approx(ds.values.var(axis=0).sum(), rel=1e-10)


def test_pca_gram_and_covariance_agree():
    x = np.random.default_rng(9).normal(size=(7, 12))
    _, v1, d1, s1 = tr.pca_decomposition(x)          # gram path (N < T)
    _, v2, d2, s2 = tr.pca_decomposition(np.vstack([x, x]))  # covariance path
    np.testing.assert_allclose(v1, v2, rtol=1e-9)
    np.testing.assert_allclose(np.abs(s1), np.abs(s2[:7]), atol=1e-9)


@pytest.mark.parametrize("alpha", [0.5, 0.8, 0.95])
def test_pca_reconstruction_error_equals_dropped_variance(alpha):
    ds = _random(20, 30, seed=5)
    rep = tr.transform_pca(ds, alpha)
    err = np.sum((ds.values - tr.reconstruct(rep)) ** 2)
    dropped = rep.explained_variance[rep.n_features:].sum()
    assert err == pytest.approx(ds.n_records * dropped, rel=1e-6)


def test_pca_scores_orthogonal():
    rep = tr.transform_pca(_random(15, 25, seed=2), 1.0)
    g = rep.features.T @ rep.features
    off = g - np.diag(np.diag(g))
    assert np.max(np.abs(off)) <= 1e-8 * np.max(np.diag(g))


def test_pca_zero_variance():
    with pytest.raises(DegenerateDataError):
        tr.transform_pca(_ds(np.ones((4, 5))), 0.9)


def test_pca_deterministic_signs():
    ds = _random(10, 8, seed=11)
    a = tr.transform_pca(ds, 0.9)
    b = tr.transform_pca(ds, 0.9)
    np.testing.assert_array_equal(a.features, b.features)
    idx = np.argmax(np.abs(a.basis), axis=1)
    assert np.all(a.basis[np.arange(a.basis.shape[0]), idx] > 0)


# ---------------------------------------------------------------------------
# monotonicity in alpha


@given(
    values=arrays(np.float64, st.tuples(st.integers(3, 6), st.integers(4, 24)), elements=st.floats(-10, 10)),
    a1=st.floats(0.05, 1.0),
    a2=st.floats(0.05, 1.0),
)
def test_kept_dimension_monotone_in_alpha(values, a1, a2):
    if np.ptp(values) < 1e-6:
        return
    lo, hi = sorted((a1, a2))
    ds = _ds(values)
    for fn in (lambda a: tr.transform_haar(ds, energy=a), lambda a: tr.transform_fourier(ds, a),
               lambda a: tr.transform_pca(ds, a)):
        try:
            p_lo, p_hi = fn(lo).n_features, fn(hi).n_features
        except DegenerateDataError:
            continue
        assert p_lo <= p_hi


# ---------------------------------------------------------------------------
# dispatch and persistence


def test_dispatch_and_identity():
    ds = _random(3, 8)
    np.testing.assert_array_equal(tr.transform(ds, tr.IDENTITY).features, ds.values)
    z = tr.transform(ds, tr.ZSCORE).features
    np.testing.assert_allclose(z.std(axis=1), 1.0)
    assert tr.transform(ds, tr.HAAR_LEVEL, level=2).n_features == 4
    with pytest.raises(ConfigError):
        tr.transform(ds, "wavelet")


@pytest.mark.parametrize("kind,params", [
    (tr.HAAR_ENERGY, {"energy": 0.9}),
    (tr.FOURIER_ENERGY, {"energy": 0.9}),
    (tr.PCA, {"energy": 0.9}),
    (tr.MEAN, {}),
])
def test_representation_round_trip(tmp_path, kind, params):
    rep = tr.transform(_random(5, 16, seed=1), kind, **params)
    tr.write_representation(rep, tmp_path / "rep.csv")
    back = tr.read_representation(tmp_path / "rep.csv")
    assert back.kind == rep.kind and back.params == rep.params
    np.testing.assert_array_equal(back.features, rep.features)
    if rep.kept is not None:
        np.testing.assert_array_equal(back.kept, rep.kept)
