from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from radar.density import (
    CovarianceKind,
    DensityError,
    GmmModel,
    apply_standardizer,
    fit_gmm,
    fit_standardizer,
    kmeans_init,
    mixture_components,
)

ALL_KINDS = list(CovarianceKind)


def two_blobs(n=400, d=3, sep=8.0, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n // 2, d))
    b = rng.standard_normal((n - n // 2, d)) + sep
    return np.vstack([a, b])


# -- k-means ---------------------------------------------------------------

def test_kmeans_exact_points():
    pts = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    centers = kmeans_init(pts, 3, seed=0)
    assert {tuple(c) for c in centers} == {tuple(p) for p in pts}


def test_kmeans_identical_points():
    pts = np.tile([1.5, -2.0], (20, 1))
    centers = kmeans_init(pts, 3, seed=0)
    assert np.allclose(centers, [1.5, -2.0])


def test_kmeans_two_blobs_accuracy():
    X = two_blobs(n=1000, sep=10.0, seed=1)
    centers = kmeans_init(X, 2, seed=2)
    blob_means = np.array([X[:500].mean(axis=0), X[500:].mean(axis=0)])
    # match centers to blobs and compare against the sample-mean oracle
    order = np.argsort(centers[:, 0])
    blob_order = np.argsort(blob_means[:, 0])
    tol = 3.0 / math.sqrt(500)
    assert np.abs(centers[order] - blob_means[blob_order]).max() < tol


def test_kmeans_too_few_points():
    with pytest.raises(DensityError, match="at least"):
        kmeans_init(np.zeros((2, 3)), 5, seed=0)


# -- mixture fitting ---------------------------------------------------------

def test_component_count_rule():
    assert mixture_components(10) == 20
    assert mixture_components(30) == 50
    assert mixture_components(5) == 10


def test_k1_diag_closed_form():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((500, 4)) * 2.0 + 1.0
    model = fit_gmm(X, 1, CovarianceKind.DIAG, reg=1e-3, seed=0)
    np.testing.assert_allclose(model.means[0], X.mean(axis=0), atol=1e-10)
    np.testing.assert_allclose(
        model.covariances[0], X.var(axis=0) + 1e-3, atol=1e-8
    )
    assert model.weights[0] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_em_trace_non_decreasing(kind):
    X = two_blobs(seed=5)
    model = fit_gmm(X, 2, kind, seed=1)
    trace = model.loglik_trace
    assert len(trace) >= 2
    assert all(b >= a - 1e-8 for a, b in zip(trace, trace[1:]))


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_covariance_validity(kind):
    X = two_blobs(seed=6)
    model = fit_gmm(X, 3, kind, reg=1e-3, seed=2)
    if kind is CovarianceKind.DIAG:
        eigs = model.covariances
    elif kind is CovarianceKind.SPHERICAL:
        eigs = model.covariances
    elif kind is CovarianceKind.TIED:
        eigs = np.linalg.eigvalsh(model.covariances)
    else:
        eigs = np.concatenate([np.linalg.eigvalsh(c) for c in model.covariances])
    assert np.min(eigs) >= 1e-3 - 1e-12
    assert model.weights.sum() == pytest.approx(1.0, abs=1e-9)


def test_determinism():
    X = two_blobs(seed=7)
    a = fit_gmm(X, 3, CovarianceKind.DIAG, seed=9)
    b = fit_gmm(X, 3, CovarianceKind.DIAG, seed=9)
    np.testing.assert_array_equal(a.weights, b.weights)
    np.testing.assert_array_equal(a.means, b.means)
    np.testing.assert_array_equal(a.covariances, b.covariances)


def test_expressiveness_order():
    rng = np.random.default_rng(8)
    X = rng.multivariate_normal([0, 0], [[2.0, 1.2], [1.2, 1.5]], size=600)
    finals = {}
    for kind in (CovarianceKind.SPHERICAL, CovarianceKind.DIAG, CovarianceKind.FULL):
        finals[kind] = fit_gmm(X, 2, kind, seed=3).loglik_trace[-1]
    assert finals[CovarianceKind.FULL] >= finals[CovarianceKind.DIAG] - 1e-6
    assert finals[CovarianceKind.DIAG] >= finals[CovarianceKind.SPHERICAL] - 1e-6


def test_fit_rejects_bad_input():
    with pytest.raises(DensityError, match="at least"):
        fit_gmm(np.zeros((2, 3)), 5, seed=0)
    bad = np.zeros((10, 2))
    bad[0, 0] = np.nan
    with pytest.raises(DensityError, match="non-finite"):
        fit_gmm(bad, 2, seed=0)


# -- log-density -------------------------------------------------------------

def std_normal_1d():
    return GmmModel(
        weights=np.array([1.0]),
        means=np.zeros((1, 1)),
        covariances=np.array([[1.0]]),
        kind=CovarianceKind.DIAG,
        reg=0.0,
    )


def test_logpdf_standard_normal():
    assert std_normal_1d().logpdf(np.array([[0.0]]))[0] == pytest.approx(
        -0.9189385332046727, abs=1e-12
    )


def test_logpdf_mixture_collapse():
    two = GmmModel(
        weights=np.array([0.5, 0.5]),
        means=np.zeros((2, 1)),
        covariances=np.ones((2, 1)),
        kind=CovarianceKind.DIAG,
        reg=0.0,
    )
    x = np.linspace(-3, 3, 7)[:, None]
    np.testing.assert_allclose(two.logpdf(x), std_normal_1d().logpdf(x), atol=1e-12)


def test_logpdf_matches_naive_summation():
    rng = np.random.default_rng(9)
    k, d = 4, 3
    model = GmmModel(
        weights=rng.dirichlet(np.ones(k)),
        means=rng.standard_normal((k, d)),
        covariances=rng.uniform(0.5, 2.0, (k, d)),
        kind=CovarianceKind.DIAG,
        reg=0.0,
    )
    x = rng.standard_normal((50, d))
    # naive oracle without log-sum-exp
    dens = np.zeros(50)
    for j in range(k):
        quad = ((x - model.means[j]) ** 2 / model.covariances[j]).sum(axis=1)
        norm = np.prod(2 * np.pi * model.covariances[j]) ** -0.5
        dens += model.weights[j] * norm * np.exp(-0.5 * quad)
    np.testing.assert_allclose(model.logpdf(x), np.log(dens), atol=1e-10)


def test_logpdf_dim_mismatch():
    with pytest.raises(DensityError, match="dimension mismatch"):
        std_normal_1d().logpdf(np.zeros((3, 2)))


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_logpdf_finite_all_kinds(kind):
    X = two_blobs(seed=10)
    model = fit_gmm(X, 2, kind, seed=0)
    vals = model.logpdf(X)
    assert np.isfinite(vals).all()


# -- sampling ----------------------------------------------------------------

def test_sample_clt_bounds():
    draws = std_normal_1d().sample(100_000, seed=11)
    assert abs(draws.mean()) < 0.02
    assert abs(draws.var() - 1.0) < 0.03


def test_sample_degenerate_weight():
    model = GmmModel(
        weights=np.array([1.0, 0.0]),
        means=np.array([[0.0], [100.0]]),
        covariances=np.ones((2, 1)),
        kind=CovarianceKind.DIAG,
        reg=0.0,
    )
    draws = model.sample(1000, seed=12)
    assert np.abs(draws).max() < 10.0  # everything from component 0


def test_spherical_equals_diag_with_equal_variances():
    means = np.array([[0.0, 0.0], [4.0, 4.0]])
    weights = np.array([0.5, 0.5])
    diag = GmmModel(weights, means, np.full((2, 2), 0.7), CovarianceKind.DIAG, 0.0)
    sph = GmmModel(weights, means, np.array([0.7, 0.7]), CovarianceKind.SPHERICAL, 0.0)
    a = diag.sample(4000, seed=13).ravel()
    b = sph.sample(4000, seed=14).ravel()
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_sample_determinism():
    model = std_normal_1d()
    np.testing.assert_array_equal(model.sample(100, seed=1), model.sample(100, seed=1))


def test_serialization_round_trip():
    X = two_blobs(seed=15)
    for kind in ALL_KINDS:
        model = fit_gmm(X, 2, kind, seed=1)
        back = GmmModel.from_dict(model.to_dict())
        np.testing.assert_allclose(back.weights, model.weights)
        np.testing.assert_allclose(back.means, model.means)
        np.testing.assert_allclose(back.covariances, model.covariances)
        assert back.kind == model.kind


# -- standardizer --------------------------------------------------------------

def test_standardizer_self_apply():
    rng = np.random.default_rng(16)
    X = rng.standard_normal((400, 6)) * 3.0 + 5.0
    stats_ = fit_standardizer(X)
    Z = apply_standardizer(stats_, X)
    assert np.abs(Z.mean(axis=0)).max() < 1e-9
    np.testing.assert_allclose(Z.std(axis=0), 1.0, atol=1e-6)


def test_standardizer_constant_column():
    X = np.ones((50, 2))
    X[:, 1] = np.arange(50)
    stats_ = fit_standardizer(X)
    Z = apply_standardizer(stats_, X)
    assert np.all(Z[:, 0] == 0.0)
    assert stats_.std[0] == 1e-8


def test_standardizer_transfer_clt():
    rng = np.random.default_rng(17)
    a = rng.standard_normal((2000, 3))
    b = rng.standard_normal((2000, 3))
    stats_ = fit_standardizer(a)
    z = apply_standardizer(stats_, b)
    assert np.abs(z.mean(axis=0)).max() < 5.0 / math.sqrt(2000)


def test_standardizer_empty_rejected():
    with pytest.raises(DensityError, match="empty"):
        fit_standardizer(np.zeros((0, 3)))
