import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg as sla

from latentcheck import frechet, nets
from latentcheck.errors import ConfigError, InputError


def random_summary(rng, dim=4, count=40):
    a = rng.normal(size=(dim, dim))
    cov = a @ a.T / dim + 0.1 * np.eye(dim)
    return frechet.GaussianSummary(rng.normal(size=dim), cov, count)


def test_fit_gaussian_hand_value():
    pts = np.array([[0.0, 0.0], [2.0, 0.0]])
    g = frechet.fit_gaussian(pts)
    assert g.mean == pytest.approx([1.0, 0.0])
    assert g.covariance == pytest.approx(np.array([[2.0, 0.0], [0.0, 0.0]]))
    assert g.count == 2


def test_fit_gaussian_identical_points_zero_covariance():
    g = frechet.fit_gaussian(np.ones((5, 3)))
    assert g.covariance == pytest.approx(np.zeros((3, 3)))


def test_fit_gaussian_symmetric_pair_zero_mean():
    v = np.array([1.5, -2.0, 0.25])
    g = frechet.fit_gaussian(np.stack([v, -v]))
    assert g.mean == pytest.approx(np.zeros(3))


def test_fit_gaussian_needs_two_rows():
    with pytest.raises(InputError):
        frechet.fit_gaussian(np.ones((1, 3)))


def test_distance_self_is_zero():
    g = random_summary(np.random.default_rng(0))
    assert frechet.frechet_distance(g, g) <= 1e-8


def test_distance_equal_identity_covariances():
    eye = np.eye(2)
    a = frechet.GaussianSummary(np.zeros(2), eye, 10)
    b = frechet.GaussianSummary(np.array([3.0, 4.0]), eye, 10)
    assert frechet.frechet_distance(a, b) == pytest.approx(25.0, abs=1e-6)


def test_distance_one_dimensional_closed_form():
    a = frechet.GaussianSummary(np.zeros(1), np.array([[1.0]]), 10)
    b = frechet.GaussianSummary(np.zeros(1), np.array([[4.0]]), 10)
    # (sigma_a - sigma_b)^2 = (1 - 2)^2
    assert frechet.frechet_distance(a, b) == pytest.approx(1.0, abs=1e-6)


def test_distance_symmetric():
    rng = np.random.default_rng(1)
    a, b = random_summary(rng), random_summary(rng)
    d_ab = frechet.frechet_distance(a, b)
    d_ba = frechet.frechet_distance(b, a)
    assert abs(d_ab - d_ba) < 1e-6


def test_distance_matches_scipy_sqrtm_oracle():
    rng = np.random.default_rng(2)
    for _ in range(10):
        a, b = random_summary(rng), random_summary(rng)
        mine = frechet.frechet_distance(a, b)
        eps = 1e-6
        ca = a.covariance + eps * np.eye(a.dim)
        cb = b.covariance + eps * np.eye(b.dim)
        covmean = sla.sqrtm(ca @ cb)
        diff = a.mean - b.mean
        oracle = float(diff @ diff + np.trace(ca) + np.trace(cb) - 2 * np.trace(covmean.real))
        assert mine == pytest.approx(oracle, abs=1e-8)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_equal_covariance_reduces_to_mean_gap(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 6))
    a = rng.normal(size=(dim, dim))
    cov = a @ a.T + 0.05 * np.eye(dim)
    mu_a, mu_b = rng.normal(size=dim), rng.normal(size=dim)
    ga = frechet.GaussianSummary(mu_a, cov, 10)
    gb = frechet.GaussianSummary(mu_b, cov, 10)
    gap = float(((mu_a - mu_b) ** 2).sum())
    assert frechet.frechet_distance(ga, gb) == pytest.approx(gap, abs=1e-6)


def test_distance_dimension_mismatch():
    rng = np.random.default_rng(3)
    with pytest.raises(ConfigError):
        frechet.frechet_distance(random_summary(rng, 3), random_summary(rng, 4))


def test_summary_rejects_asymmetric_covariance():
    with pytest.raises(ConfigError):
        frechet.GaussianSummary(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]), 5)


def test_extract_raw_features_flattens():
    data = np.zeros((7, 4, 4))
    feats = frechet.extract_features(frechet.FeatureExtractor("raw"), data)
    assert feats.shape == (7, 16)


def test_extract_penultimate_dimension():
    rng = np.random.default_rng(4)
    net = nets.init_network(10, [6, 3], ["tanh", "identity"], rng)
    ex = frechet.FeatureExtractor("penultimate", net)
    feats = frechet.extract_features(ex, rng.normal(size=(5, 10)))
    assert feats.shape == (5, 6)


def test_extract_features_pure():
    rng = np.random.default_rng(5)
    data = rng.normal(size=(6, 8))
    ex = frechet.FeatureExtractor("raw")
    assert np.array_equal(
        frechet.extract_features(ex, data), frechet.extract_features(ex, data)
    )


def test_extractor_requires_classifier_for_penultimate():
    with pytest.raises(ConfigError):
        frechet.FeatureExtractor("penultimate")
