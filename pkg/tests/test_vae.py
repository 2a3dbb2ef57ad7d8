import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from latentcheck import nets, vae
from latentcheck.errors import (
    ConditioningError,
    DimensionError,
    DomainError,
    InputError,
)


def small_cfg(**kw):
    base = dict(latent_dim=3, epochs=2, batch_size=8, lr=1e-3, seed=0, hidden=(8,), activation="tanh")
    base.update(kw)
    return vae.VaeConfig(**base)


@pytest.fixture(scope="module")
def toy_data():
    rng = np.random.default_rng(123)
    # two blurry blob archetypes, values in [0, 1]
    protos = np.stack([rng.uniform(0.1, 0.9, 12), rng.uniform(0.1, 0.9, 12)])
    y = rng.integers(0, 2, size=64)
    x = np.clip(protos[y] + 0.05 * rng.normal(size=(64, 12)), 0.0, 1.0)
    return x, y


# --- KL term -----------------------------------------------------------------


def test_kl_zero_at_prior():
    mu = np.zeros((1, 4))
    logvar = np.zeros((1, 4))  # sigma^2 = 1
    assert vae.kl_divergence(mu, logvar)[0] == pytest.approx(0.0, abs=1e-12)


def test_kl_hand_value():
    # kappa=1, mu=1, sigma^2=1: -0.5 * (1 + 0 - 1 - 1) = 0.5
    assert vae.kl_divergence(np.array([[1.0]]), np.array([[0.0]]))[0] == pytest.approx(0.5)


@given(
    arrays(np.float64, 4, elements=st.floats(-5, 5)),
    arrays(np.float64, 4, elements=st.floats(-3, 3)),
)
def test_kl_nonnegative(mu, logvar):
    assert vae.kl_divergence(mu, logvar) >= -1e-12


def test_kl_zero_only_at_prior():
    assert vae.kl_divergence(np.array([0.1, 0.0]), np.zeros(2)) > 0.0
    assert vae.kl_divergence(np.zeros(2), np.array([0.0, 0.2])) > 0.0


def test_reparameterize_zero_eps_returns_mean():
    mu = np.array([0.3, -1.2])
    z = vae.reparameterize(mu, np.array([4.0, 0.25]), np.zeros(2))
    assert np.array_equal(z, mu)


# --- structure ---------------------------------------------------------------


def test_encoder_output_width_is_twice_latent(toy_data):
    model = vae.build_vae(small_cfg(latent_dim=8), data_dim=12)
    assert model.encoder.output_dim == 16


def test_model_invariants_enforced():
    cfg = small_cfg()
    model = vae.build_vae(cfg, data_dim=12)
    with pytest.raises(DimensionError):
        vae.VaeModel(model.encoder, model.decoder, cfg.latent_dim + 1, False, 0, 12)
    with pytest.raises(DimensionError):
        vae.TwoStageVae(model, vae.build_vae(small_cfg(latent_dim=2), data_dim=5))


def test_conditional_needs_two_classes():
    from latentcheck.errors import ParameterError

    with pytest.raises(ParameterError):
        vae.build_vae(small_cfg(conditional=True, num_classes=1), data_dim=12)


# --- loss and gradients ------------------------------------------------------


def test_vae_loss_rejects_out_of_range_pixels():
    model = vae.build_vae(small_cfg(), data_dim=4)
    with pytest.raises(DomainError):
        vae.vae_loss(model, np.array([[0.0, 0.5, 1.5, 0.2]]), eps=np.zeros((1, 3)))


def test_vae_loss_conditioning_errors():
    cond = vae.build_vae(small_cfg(conditional=True, num_classes=3), data_dim=4)
    x = np.full((2, 4), 0.5)
    with pytest.raises(ConditioningError):
        vae.vae_loss(cond, x, None, eps=np.zeros((2, 3)))
    plain = vae.build_vae(small_cfg(), data_dim=4)
    with pytest.raises(ConditioningError):
        vae.vae_loss(plain, x, np.array([0, 1]), eps=np.zeros((2, 3)))


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("conditional", [False, True])
def test_vae_loss_gradients_match_finite_differences(seed, conditional):
    rng = np.random.default_rng(seed)
    cfg = small_cfg(conditional=conditional, num_classes=3 if conditional else 0, seed=seed)
    model = vae.build_vae(cfg, data_dim=5, rng=rng)
    x = rng.uniform(0.05, 0.95, size=(6, 5))
    y = rng.integers(0, 3, size=6) if conditional else None
    eps = rng.standard_normal((6, cfg.latent_dim))

    _, analytic = vae.vae_loss(model, x, y, eps=eps)
    numeric = nets.finite_difference(
        lambda: vae.vae_loss(model, x, y, eps=eps)[0], vae.parameters(model)
    )
    assert nets.max_relative_error(analytic, numeric) < 1e-6


def test_gaussian_likelihood_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    cfg = small_cfg(seed=5)
    model = vae.build_vae(cfg, data_dim=4, likelihood="gaussian", rng=rng)
    x = rng.normal(size=(3, 4))  # unbounded data is fine here
    eps = rng.standard_normal((3, cfg.latent_dim))
    _, analytic = vae.vae_loss(model, x, eps=eps)
    numeric = nets.finite_difference(
        lambda: vae.vae_loss(model, x, eps=eps)[0], vae.parameters(model)
    )
    assert nets.max_relative_error(analytic, numeric) < 1e-6


# --- encode / decode ---------------------------------------------------------


def test_encode_returns_positive_variance_and_is_deterministic(toy_data):
    x, _ = toy_data
    model = vae.build_vae(small_cfg(), data_dim=12)
    mu1, s1 = vae.encode(model, x)
    mu2, s2 = vae.encode(model, x)
    assert (s1 > 0).all()
    assert np.array_equal(mu1, mu2) and np.array_equal(s1, s2)


def test_decode_outputs_in_unit_interval():
    rng = np.random.default_rng(8)
    model = vae.build_vae(small_cfg(), data_dim=12)
    out = vae.decode(model, rng.normal(size=(20, 3)))
    assert (out > 0).all() and (out < 1).all()


def test_decode_rejects_wrong_latent_length():
    model = vae.build_vae(small_cfg(), data_dim=12)
    with pytest.raises(DimensionError):
        vae.decode(model, np.zeros(5))


# --- training ----------------------------------------------------------------


def test_train_rejects_empty_dataset():
    with pytest.raises(InputError):
        vae.train_vae(np.zeros((0, 4)), None, small_cfg())


def test_train_loss_decreases_and_is_deterministic(toy_data):
    x, _ = toy_data
    cfg = small_cfg(epochs=15)
    m1, h1 = vae.train_vae(x, None, cfg)
    m2, h2 = vae.train_vae(x, None, cfg)
    assert h1[-1] < h1[0]
    assert h1 == h2
    for a, b in zip(vae.parameters(m1), vae.parameters(m2)):
        assert np.array_equal(a, b)


def test_two_stage_shapes_and_training(toy_data):
    x, y = toy_data
    cfg = small_cfg(conditional=True, num_classes=2, epochs=8)
    ts, (h1, h2) = vae.train_two_stage(x, y, cfg)
    assert ts.stage2.data_dim == ts.stage1.latent_dim
    assert ts.stage2.likelihood == "gaussian"
    assert h2[-1] < h2[0]


def test_generate_is_seed_deterministic_and_in_range(toy_data):
    x, y = toy_data
    cfg = small_cfg(conditional=True, num_classes=2, epochs=3)
    ts, _ = vae.train_two_stage(x, y, cfg)
    xa, ua = vae.generate(ts, 1, np.random.default_rng(99))
    xb, ub = vae.generate(ts, 1, np.random.default_rng(99))
    assert np.array_equal(xa, xb) and np.array_equal(ua, ub)
    assert len(ua) == ts.stage2.latent_dim
    assert (xa >= 0).all() and (xa <= 1).all()
    with pytest.raises(ConditioningError):
        vae.generate(ts, 7, np.random.default_rng(0))
