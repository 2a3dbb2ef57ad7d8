"""Fault-revealing test synthesis from the two-stage latent manifold.

Each attempt samples a target label and a second-stage latent vector,
decodes through both stages, and keeps the case when the model under test
disagrees with the conditioning label and the latent vector is not an
l2-duplicate of an already accepted case with the same label. Search mode
replaces the plain draw with a short hill climb on a fitness that trades
off misclassification pressure against in-distribution confidence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import monitor, nets, vae
from .errors import ConfigError, DimensionError, ParameterError


@dataclass
class ModelUnderTest:
    network: nets.Network
    num_classes: int

    def __post_init__(self):
        if self.network.output_dim != self.num_classes:
            raise DimensionError(
                f"classifier emits {self.network.output_dim} logits for "
                f"{self.num_classes} classes"
            )


def predict(mut: ModelUnderTest, x: np.ndarray):
    """(argmax label, softmax vector); ties break toward the lowest index."""
    logits = nets.forward(mut.network, x)
    probs = nets.softmax(logits)
    labels = np.argmax(probs, axis=-1)
    if probs.ndim == 1:
        return int(labels), probs
    return labels, probs


@dataclass
class GenConfig:
    n: int
    k_dist: float = 3.0
    max_attempts: int | None = None  # defaults to 1000 * n
    mode: str = "random"
    w_fault: float = 1.0
    w_real: float = 1.0
    steps: int = 10
    step_scale: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError("n must be >= 1")
        if self.k_dist <= 0:
            raise ParameterError("dedup distance must be positive")
        if self.mode not in ("random", "search"):
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.w_fault < 0 or self.w_real < 0:
            raise ParameterError("fitness weights must be nonnegative")
        if self.mode == "search" and self.w_fault == 0 and self.w_real == 0:
            raise ParameterError("search mode needs a nonzero fitness weight")
        if self.steps < 0 or self.step_scale <= 0:
            raise ParameterError("steps must be >= 0 and step_scale > 0")
        if self.max_attempts is None:
            self.max_attempts = 1000 * self.n
        if self.max_attempts < 1:
            raise ParameterError("max_attempts must be >= 1")


@dataclass
class TestCase:
    x: np.ndarray  # synthesized input
    expected: int  # conditioning label
    u: np.ndarray  # generating second-stage latent
    predicted: int
    prob: float  # p(predicted | x)

    @property
    def fault_revealing(self) -> bool:
        return self.predicted != self.expected


@dataclass
class GenStats:
    attempts: int = 0
    fault_attempts: int = 0
    duplicates_rejected: int = 0
    accepted: int = 0
    status: str = "full"

    @property
    def fault_rate(self) -> float:
        return self.fault_attempts / self.attempts if self.attempts else 0.0


def is_duplicate(u: np.ndarray, label: int, archive, k_dist: float) -> bool:
    """True iff some archived case shares the label within l2 k_dist."""
    for u_i, label_i in archive:
        if label_i == label and float(np.linalg.norm(u_i - u)) < k_dist:
            return True
    return False


def fitness(u: np.ndarray, label: int, two_stage: vae.TwoStageVae,
            mut: ModelUnderTest, w_fault: float = 1.0, w_real: float = 1.0) -> float:
    """w_fault * (1 - p_mut(label | decode(u, label))) + w_real * conf(u)."""
    y = label if two_stage.stage1.conditional else None
    x_hat = vae.decode(two_stage.stage1, vae.decode(two_stage.stage2, u, y), y)
    _, probs = predict(mut, x_hat)
    return w_fault * (1.0 - float(probs[label])) + w_real * monitor.latent_confidence(u)


def hill_climb(start: np.ndarray, fitness_fn, steps: int, step_scale: float,
               rng: np.random.Generator) -> np.ndarray:
    """Accept-if-better random walk; returns the best-seen point."""
    best = np.asarray(start, dtype=np.float64)
    best_fit = fitness_fn(best)
    for _ in range(steps):
        candidate = best + step_scale * rng.standard_normal(best.shape)
        candidate_fit = fitness_fn(candidate)
        if candidate_fit > best_fit:
            best, best_fit = candidate, candidate_fit
    return best


def generate_suite(two_stage: vae.TwoStageVae, mut: ModelUnderTest, cfg: GenConfig):
    """Collect cfg.n fault-revealing, de-duplicated test cases.

    Returns (cases, GenStats); stats.status is "partial" when max_attempts
    ran out first. Deterministic for a fixed cfg.seed.
    """
    stage1, stage2 = two_stage.stage1, two_stage.stage2
    if stage1.conditional and mut.num_classes != stage1.num_classes:
        raise ConfigError("model under test and VAE disagree on class count")
    if mut.network.input_dim != stage1.data_dim:
        raise ConfigError("model under test and VAE disagree on input dimension")

    rng = np.random.default_rng(cfg.seed)
    cases: list[TestCase] = []
    archive: list[tuple[np.ndarray, int]] = []
    stats = GenStats()
    while len(cases) < cfg.n and stats.attempts < cfg.max_attempts:
        stats.attempts += 1
        label = int(rng.integers(mut.num_classes))
        y = label if stage1.conditional else None
        u = rng.standard_normal(stage2.latent_dim)
        if cfg.mode == "search" and cfg.steps > 0:
            u = hill_climb(
                u,
                lambda v: fitness(v, label, two_stage, mut, cfg.w_fault, cfg.w_real),
                cfg.steps,
                cfg.step_scale,
                rng,
            )
        x_hat = vae.decode(stage1, vae.decode(stage2, u, y), y)
        predicted, probs = predict(mut, x_hat)
        if predicted != label:
            stats.fault_attempts += 1
            if is_duplicate(u, label, archive, cfg.k_dist):
                stats.duplicates_rejected += 1
            else:
                cases.append(TestCase(x_hat, label, u, predicted, float(probs[predicted])))
                archive.append((u, label))
    stats.accepted = len(cases)
    stats.status = "full" if stats.accepted >= cfg.n else "partial"
    return cases, stats
