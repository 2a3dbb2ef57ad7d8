"""Variational autoencoders over image data, trained with manual backprop.

The encoder maps an input (optionally concatenated with a one-hot class
label) to 2*latent_dim outputs: the posterior mean followed by the log
variance. The decoder maps a latent vector (plus the same one-hot) back to
data space. Loss is reconstruction + KL(q(z|x) || N(0, I)) with one
reparameterized sample z = mu + sigma * eps per example.

Two likelihoods are supported: "bernoulli" (per-pixel cross-entropy against
[0,1] data through a sigmoid head) for models over pixels, and "gaussian"
(unit-variance squared error through an identity head) for the second stage
of a two-stage model, whose "data" are unbounded first-stage latent codes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import nets
from .errors import (
    ConditioningError,
    DimensionError,
    DomainError,
    InputError,
    NumericFailure,
    ParameterError,
)

LIKELIHOODS = ("bernoulli", "gaussian")


@dataclass
class VaeModel:
    encoder: nets.Network
    decoder: nets.Network
    latent_dim: int
    conditional: bool
    num_classes: int
    data_dim: int
    likelihood: str = "bernoulli"
    gaussian_variance: float = 1.0  # fixed observation variance of the gaussian head

    def __post_init__(self):
        k, cond = self.latent_dim, int(self.conditional) * self.num_classes
        if self.latent_dim < 1:
            raise ParameterError("latent_dim must be >= 1")
        if self.conditional and self.num_classes < 2:
            raise ParameterError("conditional models need num_classes >= 2")
        if self.likelihood not in LIKELIHOODS:
            raise ParameterError(f"unknown likelihood {self.likelihood!r}")
        if self.gaussian_variance <= 0.0:
            raise ParameterError("gaussian_variance must be positive")
        if self.encoder.output_dim != 2 * k:
            raise DimensionError(
                f"encoder emits {self.encoder.output_dim} values, expected 2*latent_dim = {2 * k}"
            )
        if self.encoder.input_dim != self.data_dim + cond:
            raise DimensionError("encoder input width != data_dim (+ one-hot)")
        if self.decoder.input_dim != k + cond:
            raise DimensionError("decoder input width != latent_dim (+ one-hot)")
        if self.decoder.output_dim != self.data_dim:
            raise DimensionError("decoder output width != data_dim")


@dataclass
class TwoStageVae:
    stage1: VaeModel
    stage2: VaeModel

    def __post_init__(self):
        if self.stage2.data_dim != self.stage1.latent_dim:
            raise DimensionError("stage2 data_dim must equal stage1 latent_dim")
        if (self.stage1.conditional, self.stage1.num_classes) != (
            self.stage2.conditional,
            self.stage2.num_classes,
        ):
            raise DimensionError("both stages must share conditional/num_classes")


@dataclass
class VaeConfig:
    latent_dim: int = 8
    epochs: int = 10
    batch_size: int = 64
    lr: float = 1e-3
    conditional: bool = False
    num_classes: int = 0
    seed: int = 0
    hidden: tuple[int, ...] = (256, 128)
    activation: str = "relu"
    gaussian_variance: float = 1.0  # only used by gaussian-likelihood (stage-2) models


def one_hot(y, num_classes: int) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y))
    if y.ndim != 1:
        raise ConditioningError("labels must be a flat sequence")
    if np.any((y < 0) | (y >= num_classes)):
        raise ConditioningError(f"labels must lie in [0, {num_classes})")
    out = np.zeros((len(y), num_classes))
    out[np.arange(len(y)), y] = 1.0
    return out


def _conditioned(model: VaeModel, data: np.ndarray, y) -> np.ndarray:
    """Append one-hot(y) when the model is conditional; validate either way."""
    if model.conditional:
        if y is None:
            raise ConditioningError("conditional model requires a class label")
        oh = one_hot(y, model.num_classes)
        if len(oh) == 1 and len(data) > 1:
            oh = np.repeat(oh, len(data), axis=0)
        if len(oh) != len(data):
            raise ConditioningError("one label per input required")
        return np.concatenate([data, oh], axis=1)
    if y is not None:
        raise ConditioningError("unconditional model takes no label")
    return data


def reparameterize(mu: np.ndarray, sigma2: np.ndarray, eps: np.ndarray) -> np.ndarray:
    return mu + np.sqrt(sigma2) * eps


def kl_divergence(mu: np.ndarray, logvar: np.ndarray) -> np.ndarray:
    """Per-example KL(N(mu, diag(exp(logvar))) || N(0, I)), closed form."""
    return -0.5 * np.sum(1.0 + logvar - mu**2 - np.exp(logvar), axis=-1)


def build_vae(cfg: VaeConfig, data_dim: int, likelihood: str = "bernoulli",
              rng: np.random.Generator | None = None) -> VaeModel:
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    cond = cfg.num_classes if cfg.conditional else 0
    enc_sizes = list(cfg.hidden) + [2 * cfg.latent_dim]
    enc_acts = [cfg.activation] * len(cfg.hidden) + ["identity"]
    encoder = nets.init_network(data_dim + cond, enc_sizes, enc_acts, rng)
    head = "sigmoid" if likelihood == "bernoulli" else "identity"
    dec_sizes = list(reversed(cfg.hidden)) + [data_dim]
    dec_acts = [cfg.activation] * len(cfg.hidden) + [head]
    decoder = nets.init_network(cfg.latent_dim + cond, dec_sizes, dec_acts, rng)
    return VaeModel(
        encoder, decoder, cfg.latent_dim, cfg.conditional, cfg.num_classes,
        data_dim, likelihood, cfg.gaussian_variance,
    )


def parameters(model: VaeModel) -> list[np.ndarray]:
    return nets.parameters(model.encoder) + nets.parameters(model.decoder)


def _check_data_domain(model: VaeModel, x: np.ndarray) -> None:
    if model.likelihood == "bernoulli" and (x.min() < 0.0 or x.max() > 1.0):
        raise DomainError("inputs must lie in [0, 1] for the bernoulli likelihood")


def vae_loss(model: VaeModel, x: np.ndarray, y=None, eps: np.ndarray | None = None,
             rng: np.random.Generator | None = None):
    """Mean per-example (reconstruction + KL) and its parameter gradients.

    The reparameterization noise `eps` may be passed explicitly (finite
    difference checks hold it fixed) or drawn from `rng`.

    Returns (loss, grads) with grads aligned to parameters(model).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    nets.require_finite("input", x)
    _check_data_domain(model, x)
    n, k = len(x), model.latent_dim

    enc_out, enc_trace = nets.forward_trace(model.encoder, _conditioned(model, x, y))
    mu, logvar = enc_out[:, :k], enc_out[:, k:]
    if eps is None:
        if rng is None:
            raise ParameterError("vae_loss needs eps or rng")
        eps = rng.standard_normal((n, k))
    sigma = np.exp(0.5 * logvar)
    z = mu + sigma * eps

    dec_out, dec_trace = nets.forward_trace(model.decoder, _conditioned(model, z, y))
    if model.likelihood == "bernoulli":
        logits = dec_trace.pres[-1]
        recon = np.sum(np.logaddexp(0.0, logits) - x * logits, axis=1)
        g_pre = (dec_out - x) / n  # exact dL/dlogits for sigmoid + BCE
    else:
        diff = dec_out - x
        recon = 0.5 * np.sum(diff**2, axis=1) / model.gaussian_variance
        g_pre = diff / (model.gaussian_variance * n)

    loss = float(np.mean(recon + kl_divergence(mu, logvar)))
    if not math.isfinite(loss):
        raise NumericFailure("vae loss is not finite")

    dec_grads, dec_in_grad = nets.backward(model.decoder, dec_trace, g_pre, from_preactivation=True)
    g_z = dec_in_grad[:, :k]  # one-hot columns carry no gradient we keep

    g_mu = g_z + mu / n
    g_logvar = g_z * (0.5 * sigma * eps) + 0.5 * (np.exp(logvar) - 1.0) / n
    enc_grads, _ = nets.backward(model.encoder, enc_trace, np.concatenate([g_mu, g_logvar], axis=1))
    return loss, enc_grads + dec_grads


def encode(model: VaeModel, x: np.ndarray, y=None):
    """Posterior (mu, sigma^2); deterministic, no sampling."""
    x = np.asarray(x, dtype=np.float64)
    squeezed = x.ndim == 1
    out = nets.forward(model.encoder, _conditioned(model, np.atleast_2d(x), y))
    k = model.latent_dim
    mu, sigma2 = out[:, :k], np.exp(out[:, k:])
    return (mu[0], sigma2[0]) if squeezed else (mu, sigma2)


def decode(model: VaeModel, z: np.ndarray, y=None) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    squeezed = z.ndim == 1
    z2 = np.atleast_2d(z)
    if z2.shape[1] != model.latent_dim:
        raise DimensionError(
            f"latent length {z2.shape[1]} != latent_dim {model.latent_dim}"
        )
    out = nets.forward(model.decoder, _conditioned(model, z2, y))
    return out[0] if squeezed else out


def _train_loop(model: VaeModel, data_for_epoch, labels, cfg: VaeConfig,
                rng: np.random.Generator, on_epoch=None) -> list[float]:
    params = parameters(model)
    state = nets.init_adam(params, lr=cfg.lr)
    history = []
    for epoch in range(cfg.epochs):
        x = data_for_epoch(epoch)
        n = len(x)
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            yb = labels[idx] if labels is not None else None
            eps = rng.standard_normal((len(idx), cfg.latent_dim))
            try:
                loss, grads = vae_loss(model, x[idx], yb, eps=eps)
            except NumericFailure as exc:
                raise NumericFailure(f"training diverged at epoch {epoch}, batch {b}") from exc
            total += loss * len(idx)
            nets.adam_step(params, grads, state)
        history.append(total / n)
        if on_epoch is not None:
            on_epoch(epoch, history[-1])
    return history


def _check_training_inputs(x: np.ndarray, labels, cfg: VaeConfig) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise InputError("training data must be a nonempty (N, d) array")
    if cfg.conditional and labels is None:
        raise ConditioningError("conditional training requires labels")
    if not cfg.conditional and labels is not None:
        raise ConditioningError("unconditional training takes no labels")
    if labels is not None and len(labels) != len(x):
        raise DimensionError("images and labels disagree in length")
    return x


def train_vae(x: np.ndarray, labels, cfg: VaeConfig, on_epoch=None):
    """Train a (conditional) VAE; returns (model, per-epoch mean loss)."""
    x = _check_training_inputs(x, labels, cfg)
    if x.min() < 0.0 or x.max() > 1.0:
        raise DomainError("training data must lie in [0, 1]")
    labels = np.asarray(labels) if labels is not None else None
    rng = np.random.default_rng(cfg.seed)
    model = build_vae(cfg, x.shape[1], "bernoulli", rng)
    history = _train_loop(model, lambda _e: x, labels, cfg, rng, on_epoch)
    return model, history


def train_two_stage(x: np.ndarray, labels, cfg: VaeConfig,
                    stage2_cfg: VaeConfig | None = None, on_epoch=None):
    """Train stage 1 on pixels, then stage 2 on its sampled latent codes.

    Stage 2 sees one fresh posterior sample z ~ Q(z|x) per example per
    epoch, with the same labels, and uses the gaussian likelihood since
    latent codes are unbounded. Its observation variance defaults well
    below the per-dimension variance of the codes; at variance 1 the
    rate-distortion trade never favors encoding them and the second stage
    degenerates to a per-class mean.

    Returns (TwoStageVae, (stage1 history, stage2 history)).
    """
    stage1, hist1 = train_vae(x, labels, cfg, on_epoch)
    if stage2_cfg is None:
        stage2_cfg = replace(cfg, hidden=(64, 64), gaussian_variance=0.1)
    stage2_cfg = replace(stage2_cfg, conditional=cfg.conditional, num_classes=cfg.num_classes)

    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels) if labels is not None else None
    mu, sigma2 = encode(stage1, x, labels)
    sigma = np.sqrt(sigma2)
    rng = np.random.default_rng(stage2_cfg.seed)
    stage2 = build_vae(stage2_cfg, stage1.latent_dim, "gaussian", rng)

    def sample_codes(_epoch):
        return mu + sigma * rng.standard_normal(mu.shape)

    hist2 = _train_loop(stage2, sample_codes, labels, stage2_cfg, rng, on_epoch)
    return TwoStageVae(stage1, stage2), (hist1, hist2)


def generate(model: TwoStageVae, y, rng: np.random.Generator):
    """Sample u ~ N(0, I), decode through both stages; returns (x_hat, u)."""
    if model.stage1.conditional:
        if y is None or not (0 <= int(y) < model.stage1.num_classes):
            raise ConditioningError(
                f"label must lie in [0, {model.stage1.num_classes})"
            )
    u = rng.standard_normal(model.stage2.latent_dim)
    z_hat = decode(model.stage2, u, y)
    x_hat = decode(model.stage1, z_hat, y)
    return x_hat, u
