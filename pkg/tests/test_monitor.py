import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from latentcheck import monitor, vae
from latentcheck.errors import ConfigError, ParameterError


@pytest.fixture(scope="module")
def encoder():
    cfg = vae.VaeConfig(latent_dim=4, hidden=(8,), activation="tanh", seed=2)
    return vae.build_vae(cfg, data_dim=6)


def test_confidence_is_one_at_origin():
    assert monitor.latent_confidence(np.zeros(7)) == 1.0


def test_confidence_reference_values():
    # kappa=2, z=(1,1): exp(-0.5); kappa=1, z=(2,): exp(-2)
    assert monitor.latent_confidence(np.ones(2)) == pytest.approx(
        0.6065306597126334, abs=1e-12
    )
    assert monitor.latent_confidence(np.array([2.0])) == pytest.approx(
        0.1353352832366127, abs=1e-12
    )


@given(arrays(np.float64, 5, elements=st.floats(-5, 5)))
def test_log_space_matches_product_form(z):
    product = float(np.prod(np.exp(-0.5 * z * z)) ** (1.0 / len(z)))
    assert abs(monitor.latent_confidence(z) - product) < 1e-12


def test_confidence_decreases_in_each_coordinate():
    base = np.array([0.5, -1.0, 2.0])
    for dim in range(3):
        ladder = []
        for scale in (0.0, 0.5, 1.0, 2.0, 4.0):
            z = base.copy()
            z[dim] = scale * np.sign(z[dim] if z[dim] != 0 else 1.0)
            ladder.append(monitor.latent_confidence(z))
        assert all(a > b for a, b in zip(ladder, ladder[1:]))


def test_confidence_permutation_invariant():
    z = np.array([0.3, -1.7, 2.2, 0.0])
    assert monitor.latent_confidence(z) == pytest.approx(
        monitor.latent_confidence(z[::-1].copy()), abs=1e-15
    )


def test_confidence_no_underflow_at_extreme_codes():
    assert monitor.latent_confidence(np.full(16, 38.0)) > 0.0


def test_confidence_of_input_uses_posterior_mean(encoder):
    x = np.full(6, 0.5)
    mu, _ = vae.encode(encoder, x)
    expected = monitor.latent_confidence(mu)
    assert monitor.confidence(x, encoder) == pytest.approx(expected, abs=1e-15)
    assert 0.0 < monitor.confidence(x, encoder) <= 1.0


def test_judge_threshold_boundary_is_trusted(encoder):
    x = np.full(6, 0.5)
    conf = monitor.confidence(x, encoder)
    cfg = monitor.MonitorConfig(encoder, threshold=conf)
    verdict, score = monitor.judge(x, cfg)
    assert verdict == "trusted" and score == conf
    above = monitor.MonitorConfig(encoder, threshold=min(conf * 1.01, 0.999999))
    assert monitor.judge(x, above)[0] == "flagged"


def test_judge_is_pure(encoder):
    cfg = monitor.MonitorConfig(encoder, threshold=0.1)
    x = np.full(6, 0.25)
    assert monitor.judge(x, cfg) == monitor.judge(x, cfg)


def test_config_validation(encoder):
    with pytest.raises(ParameterError):
        monitor.MonitorConfig(encoder, threshold=0.0)
    with pytest.raises(ParameterError):
        monitor.MonitorConfig(encoder, threshold=1.0)
    cond = vae.build_vae(
        vae.VaeConfig(latent_dim=2, hidden=(4,), conditional=True, num_classes=3),
        data_dim=6,
    )
    with pytest.raises(ConfigError):
        monitor.MonitorConfig(cond, threshold=0.5)


def test_stream_stats_empty(encoder):
    cfg = monitor.MonitorConfig(encoder)
    stats = monitor.stream_stats([], cfg)
    assert stats.count == 0 and stats.flagged == 0
    assert stats.mean is None and stats.min is None and stats.max is None
    assert stats.flag_rate is None


def test_stream_stats_identical_inputs(encoder):
    cfg = monitor.MonitorConfig(encoder)
    x = np.full(6, 0.5)
    stats = monitor.stream_stats([x, x, x], cfg)
    assert stats.count == 3
    assert stats.min == stats.max == pytest.approx(stats.mean)


def test_stream_stats_tiny_threshold_flags_nothing(encoder):
    rng = np.random.default_rng(0)
    cfg = monitor.MonitorConfig(encoder, threshold=1e-12)
    stats = monitor.stream_stats(rng.uniform(0, 1, size=(10, 6)), cfg)
    assert stats.flagged == 0 and stats.flag_rate == 0.0
