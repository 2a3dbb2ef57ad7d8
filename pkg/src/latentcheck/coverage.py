"""Test-adequacy criteria over the learned latent space and structural baselines.

Combination coverage partitions each latent dimension into k sections of
equal standard-normal probability mass and asks a suite to hit every
(k^kappa) section combination, or every t-way projection of one. Neuron
coverage and neuron boundary coverage are the structural baselines, and
Cramer's V quantifies how strongly a criterion's obligations associate
with class labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import nets, vae
from .errors import (
    AssociationUndefined,
    ConfigError,
    DimensionError,
    InputError,
    ParameterError,
)


def _phi(x: float) -> float:
    """Standard normal CDF via erf."""
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def _phi_inverse(p: float) -> float:
    """Bisection inversion of the CDF, |phi(b) - p| < 1e-12."""
    lo, hi = -12.0, 12.0
    while hi - lo > 1e-15:
        mid = 0.5 * (lo + hi)
        if _phi(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class SectionGrid:
    kappa: int
    k: int
    boundaries: np.ndarray  # (k-1,) ascending cut points, shared by all dims

    @property
    def combination_count(self) -> int:
        return self.k**self.kappa


def build_grid(kappa: int, k: int) -> SectionGrid:
    """Equal-probability-mass partition: cut points at Phi^-1(j/k)."""
    if kappa < 1:
        raise ParameterError("kappa must be >= 1")
    if k < 2:
        raise ParameterError("k must be >= 2")
    b = np.array([_phi_inverse(j / k) for j in range(1, k)])
    b = 0.5 * (b - b[::-1])  # enforce the symmetry the quantiles have exactly
    return SectionGrid(kappa, k, b)


def section_of(grid: SectionGrid, z: np.ndarray) -> np.ndarray:
    """Per-dimension section indices; values on a cut point go up."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != grid.kappa:
        raise DimensionError(f"latent length {z.shape[-1]} != grid kappa {grid.kappa}")
    return np.searchsorted(grid.boundaries, z, side="right")


def key_index(grid: SectionGrid, sections: np.ndarray) -> int:
    """Canonical integer for a combination key: sum(sections[i] * k^i)."""
    idx = 0
    for i, s in enumerate(np.asarray(sections).tolist()):
        idx += int(s) * grid.k**i
    return idx


def index_key(grid: SectionGrid, index: int) -> tuple[int, ...]:
    sections = []
    for _ in range(grid.kappa):
        index, s = divmod(index, grid.k)
        sections.append(s)
    return tuple(sections)


@dataclass
class CoverageReport:
    criterion: str
    parameters: dict
    obligation_count: int
    hits: dict[int, int]
    provenance: dict = field(default_factory=dict)
    events: dict[tuple[int, int], int] | None = None  # (obligation, label) -> count

    @property
    def covered_count(self) -> int:
        return sum(1 for c in self.hits.values() if c > 0)

    @property
    def percent(self) -> float:
        return 100.0 * self.covered_count / self.obligation_count


def _accumulate(hits, events, obligation, label):
    hits[obligation] = hits.get(obligation, 0) + 1
    if events is not None:
        key = (obligation, int(label))
        events[key] = events.get(key, 0) + 1


def _encode_means(encoder: vae.VaeModel, testset, labels) -> np.ndarray:
    y = labels if encoder.conditional else None
    mu, _ = vae.encode(encoder, np.atleast_2d(np.asarray(testset, dtype=np.float64)), y)
    return mu


def mcc_measure(testset, labels, encoder: vae.VaeModel, grid: SectionGrid,
                provenance: dict | None = None) -> CoverageReport:
    """Combination coverage of the k^kappa section grid, means-only encoding."""
    if encoder.latent_dim != grid.kappa:
        raise ConfigError(
            f"encoder latent_dim {encoder.latent_dim} != grid kappa {grid.kappa}"
        )
    hits: dict[int, int] = {}
    events = {} if labels is not None else None
    if len(testset) > 0:
        mu = _encode_means(encoder, testset, labels)
        keys = section_of(grid, mu)
        for row in range(len(mu)):
            _accumulate(hits, events, key_index(grid, keys[row]),
                        labels[row] if labels is not None else 0)
    return CoverageReport(
        "mcc", {"k": grid.k, "kappa": grid.kappa}, grid.combination_count,
        hits, provenance or {}, events,
    )


def tway_measure(testset, labels, encoder: vae.VaeModel, grid: SectionGrid, t: int,
                 provenance: dict | None = None) -> CoverageReport:
    """t-way combination coverage: every (dimension subset, section tuple) pair.

    Obligation id = subset_rank * k^t + sum(sections[dim_i] * k^i) with
    subsets ranked in lexicographic combinations order.
    """
    if not 1 <= t <= grid.kappa:
        raise ParameterError(f"t must lie in [1, {grid.kappa}]")
    if encoder.latent_dim != grid.kappa:
        raise ConfigError("encoder latent_dim != grid kappa")
    subsets = list(combinations(range(grid.kappa), t))
    block = grid.k**t
    hits: dict[int, int] = {}
    events = {} if labels is not None else None
    if len(testset) > 0:
        mu = _encode_means(encoder, testset, labels)
        keys = section_of(grid, mu)
        for row in range(len(mu)):
            label = labels[row] if labels is not None else 0
            for rank, dims in enumerate(subsets):
                local = 0
                for i, d in enumerate(dims):
                    local += int(keys[row][d]) * grid.k**i
                _accumulate(hits, events, rank * block + local, label)
    return CoverageReport(
        "tway", {"k": grid.k, "kappa": grid.kappa, "t": t},
        len(subsets) * block, hits, provenance or {}, events,
    )


def hidden_activations(net: nets.Network, x) -> np.ndarray:
    """Post-activation values of every non-output layer, (N, #hidden)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    _, trace = nets.forward_trace(net, x)
    if len(net.layers) < 2:
        raise ConfigError("network has no hidden layers to profile")
    return np.concatenate(trace.posts[:-1], axis=1)


def nc_measure(model: nets.Network, testset, threshold: float = 0.5, labels=None,
               provenance: dict | None = None) -> CoverageReport:
    """Neuron coverage under per-suite min-max scaling.

    A neuron is covered when its scaled activation exceeds the threshold
    for at least one input; constant neurons scale to 0 everywhere.
    """
    if len(testset) == 0:
        raise InputError("neuron coverage needs a nonempty suite")
    acts = hidden_activations(model, testset)
    lo, hi = acts.min(axis=0), acts.max(axis=0)
    span = hi - lo
    scaled = np.zeros_like(acts)
    varying = span > 0
    scaled[:, varying] = (acts[:, varying] - lo[varying]) / span[varying]
    over = scaled > threshold
    hits = {int(j): int(c) for j, c in enumerate(over.sum(axis=0)) if c > 0}
    events = None
    if labels is not None:
        events = {}
        for row, label in enumerate(labels):
            for j in np.nonzero(over[row])[0]:
                key = (int(j), int(label))
                events[key] = events.get(key, 0) + 1
    return CoverageReport(
        "nc", {"threshold": threshold}, acts.shape[1], hits, provenance or {}, events,
    )


@dataclass
class ActivationProfile:
    lows: np.ndarray
    highs: np.ndarray

    def __post_init__(self):
        self.lows = np.asarray(self.lows, dtype=np.float64)
        self.highs = np.asarray(self.highs, dtype=np.float64)
        if self.lows.shape != self.highs.shape:
            raise DimensionError("profile lows/highs shapes differ")
        if np.any(self.lows > self.highs):
            raise ConfigError("profile has low > high")


def profile_activations(model: nets.Network, dataset) -> ActivationProfile:
    """Observed (low, high) bounds per hidden neuron over a profiling set."""
    if len(dataset) == 0:
        raise InputError("profiling needs a nonempty dataset")
    acts = hidden_activations(model, dataset)
    return ActivationProfile(acts.min(axis=0), acts.max(axis=0))


def nbc_measure(model: nets.Network, testset, profile: ActivationProfile, labels=None,
                provenance: dict | None = None) -> CoverageReport:
    """Neuron boundary coverage: 2 obligations per neuron.

    Obligation 2j is the upper bound of neuron j (activation > high),
    2j + 1 the lower (activation < low).
    """
    n_hidden = sum(l.out_dim for l in model.layers[:-1])
    if profile.lows.shape != (n_hidden,):
        raise ConfigError(
            f"profile covers {profile.lows.shape[0]} neurons, model has {n_hidden}"
        )
    hits: dict[int, int] = {}
    events = {} if labels is not None else None
    if len(testset) > 0:
        acts = hidden_activations(model, testset)
        upper = acts > profile.highs
        lower = acts < profile.lows
        for row in range(len(acts)):
            label = labels[row] if labels is not None else 0
            for j in np.nonzero(upper[row])[0]:
                _accumulate(hits, events, 2 * int(j), label)
            for j in np.nonzero(lower[row])[0]:
                _accumulate(hits, events, 2 * int(j) + 1, label)
    return CoverageReport(
        "nbc", {}, 2 * n_hidden, hits, provenance or {}, events,
    )


def cramers_v(hit_events) -> float:
    """Association in [0, 1] between obligations and labels.

    Accepts an iterable of (obligation, label) events or a {(obligation,
    label): count} mapping. Chi-squared over the contingency table, then
    V = sqrt(chi2 / (n * (min(rows, cols) - 1))).
    """
    if isinstance(hit_events, dict):
        counts = {k: int(v) for k, v in hit_events.items() if v > 0}
    else:
        counts = {}
        for obligation, label in hit_events:
            key = (obligation, label)
            counts[key] = counts.get(key, 0) + 1
    rows = sorted({k[0] for k in counts})
    cols = sorted({k[1] for k in counts})
    if len(rows) < 2 or len(cols) < 2:
        raise AssociationUndefined("need >= 2 distinct obligations and labels")
    table = np.zeros((len(rows), len(cols)))
    ri = {r: i for i, r in enumerate(rows)}
    ci = {c: j for j, c in enumerate(cols)}
    for (r, c), v in counts.items():
        table[ri[r], ci[c]] = v
    # all-zero rows/columns cannot occur when built from events, but a
    # caller-supplied mapping may contain them
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    if table.shape[0] < 2 or table.shape[1] < 2:
        raise AssociationUndefined("contingency table degenerates to one row/column")
    n = table.sum()
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / n
    chi2 = float(((table - expected) ** 2 / expected).sum())
    v = math.sqrt(chi2 / (n * (min(table.shape) - 1)))
    return min(max(v, 0.0), 1.0)
