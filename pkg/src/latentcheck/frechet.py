"""Frechet distance between Gaussians fitted to feature representations.

d^2 = ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)

The symmetric-sandwich square root equals sqrt(S_a S_b) in trace but stays
within symmetric eigendecompositions, which is numerically robust. Features
come from a pluggable extractor: raw pixels or the penultimate layer of a
supplied classifier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nets
from .errors import ConfigError, InputError, NumericFailure


@dataclass
class GaussianSummary:
    mean: np.ndarray
    covariance: np.ndarray
    count: int

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.covariance = np.asarray(self.covariance, dtype=np.float64)
        if self.count < 2:
            raise InputError("a Gaussian summary needs at least 2 samples")
        if np.abs(self.covariance - self.covariance.T).max() > 1e-9:
            raise ConfigError("covariance is not symmetric")

    @property
    def dim(self) -> int:
        return len(self.mean)


def fit_gaussian(features: np.ndarray) -> GaussianSummary:
    """Sample mean and unbiased covariance, symmetrized."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    n = len(features)
    if n < 2:
        raise InputError("need at least 2 feature rows")
    mean = features.mean(axis=0)
    centered = features - mean
    cov = centered.T @ centered / (n - 1)
    cov = 0.5 * (cov + cov.T)
    return GaussianSummary(mean, cov, n)


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(matrix)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: GaussianSummary, b: GaussianSummary, eps: float = 1e-6) -> float:
    if a.dim != b.dim:
        raise ConfigError(f"dimension mismatch: {a.dim} vs {b.dim}")
    ca = a.covariance + eps * np.eye(a.dim)
    cb = b.covariance + eps * np.eye(b.dim)
    try:
        root_a = _psd_sqrt(ca)
        inner = root_a @ cb @ root_a
        vals = np.linalg.eigvalsh(0.5 * (inner + inner.T))
    except np.linalg.LinAlgError as exc:
        raise NumericFailure("eigendecomposition failed in frechet_distance") from exc
    tr_sqrt = float(np.sqrt(np.clip(vals, 0.0, None)).sum())
    diff = a.mean - b.mean
    d = float(diff @ diff + np.trace(ca) + np.trace(cb) - 2.0 * tr_sqrt)
    return max(d, 0.0)


@dataclass
class FeatureExtractor:
    mode: str = "raw"  # "raw" | "penultimate"
    classifier: nets.Network | None = None

    def __post_init__(self):
        if self.mode not in ("raw", "penultimate"):
            raise ConfigError(f"unknown extractor mode {self.mode!r}")
        if self.mode == "penultimate" and self.classifier is None:
            raise ConfigError("penultimate mode needs a classifier")


def extract_features(extractor: FeatureExtractor, dataset: np.ndarray) -> np.ndarray:
    """Raw mode flattens pixels; penultimate returns the last hidden layer."""
    data = np.asarray(dataset, dtype=np.float64)
    flat = data.reshape(len(data), -1)
    if extractor.mode == "raw":
        return flat
    _, trace = nets.forward_trace(extractor.classifier, flat)
    if len(extractor.classifier.layers) < 2:
        raise ConfigError("classifier has no penultimate layer")
    return trace.posts[-2]
