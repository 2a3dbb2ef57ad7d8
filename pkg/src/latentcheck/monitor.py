"""Runtime in-distribution confidence scoring through the learned encoder.

The score of an input is the geometric-mean unit-normal likelihood of its
posterior-mean latent code: conf(z) = (prod_i exp(-0.5 z_i^2))^(1/kappa),
evaluated in log space as exp(-0.5/kappa * sum z_i^2). It lies in (0, 1],
equals 1 exactly at z = 0, and decays as the code moves away from the
prior mean, which flags inputs unlike the training data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import vae
from .errors import ConfigError, NumericFailure, ParameterError


@dataclass
class MonitorConfig:
    encoder: vae.VaeModel
    threshold: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ParameterError("threshold must lie strictly in (0, 1)")
        if self.encoder.conditional:
            raise ConfigError("monitoring requires an unconditional encoder")


def latent_confidence(z: np.ndarray) -> float | np.ndarray:
    """conf(z) for a raw latent vector (or batch of them)."""
    z = np.asarray(z, dtype=np.float64)
    kappa = z.shape[-1]
    conf = np.exp(-0.5 * np.sum(z * z, axis=-1) / kappa)
    return float(conf) if conf.ndim == 0 else conf


def confidence(x: np.ndarray, encoder: vae.VaeModel) -> float | np.ndarray:
    """Score an input (or batch) by the confidence of its posterior mean."""
    mu, _ = vae.encode(encoder, x)
    if not np.all(np.isfinite(mu)):
        raise NumericFailure("encoder produced non-finite latent code")
    return latent_confidence(mu)


def judge(x: np.ndarray, cfg: MonitorConfig):
    """Returns ("trusted" | "flagged", confidence); trusted iff conf >= threshold."""
    conf = confidence(x, cfg.encoder)
    verdict = "trusted" if conf >= cfg.threshold else "flagged"
    return verdict, conf


@dataclass
class StreamStats:
    count: int = 0
    flagged: int = 0
    mean: float | None = None
    min: float | None = None
    max: float | None = None

    @property
    def flag_rate(self) -> float | None:
        return None if self.count == 0 else self.flagged / self.count


def stream_stats(inputs, cfg: MonitorConfig) -> StreamStats:
    """Single-pass confidence statistics over a stream of inputs."""
    stats = StreamStats()
    total = 0.0
    for x in inputs:
        verdict, conf = judge(np.asarray(x), cfg)
        stats.count += 1
        stats.flagged += verdict == "flagged"
        total += conf
        stats.min = conf if stats.min is None else min(stats.min, conf)
        stats.max = conf if stats.max is None else max(stats.max, conf)
    if stats.count:
        stats.mean = total / stats.count
    return stats
