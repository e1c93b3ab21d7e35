"""Rank-transform normalization and the rank-covariance Gibbs mechanism."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .errors import OutOfRegime, TooFewSamples
from .mechanism import GibbsTarget, OrthoFrame, SamplerConfig, sample
from .spectral import Dataset, covariance, eig_sym
from .theory import NO_UTILITY_LABEL, OUT_OF_REGIME_LABEL, guarantee_label, privacy_profile, sigma_beta


@dataclass(frozen=True)
class RankDataset:
    dataset: Dataset
    source: Dataset
    tie_count: tuple

    @property
    def values(self) -> np.ndarray:
        return self.dataset.values

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def p(self) -> int:
        return self.dataset.p

    def summary(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "norm_certified": self.dataset.norm_certified,
            "tie_count": list(self.tie_count),
            "max_row_norm_sq": float(np.max(np.sum(self.values**2, axis=1))),
        }


def _tied_entries(col: np.ndarray) -> int:
    _, counts = np.unique(col, return_counts=True)
    return int(counts[counts > 1].sum())


def rank_transform(dataset: Dataset) -> RankDataset:
    """Average ranks per feature, centered by ``(n+1)/2`` and scaled by ``2/(n-1)``.

    Entries land in ``[-1, 1]``, so every row satisfies ``||r|| <= sqrt(p)``.
    A constant feature maps to an all-zero column.
    """
    n = dataset.n
    if n < 2:
        raise TooFewSamples(f"rank transform needs n >= 2, got n={n}")
    raw = rankdata(dataset.values, method="average", axis=0)
    r = (2.0 / (n - 1)) * (raw - (n + 1) / 2.0)
    ties = tuple(_tied_entries(dataset.values[:, j]) for j in range(dataset.p))
    return RankDataset(Dataset(r, norm_certified=True), dataset, ties)


def rank_covariance(dataset: Dataset) -> np.ndarray:
    return covariance(rank_transform(dataset).dataset)


@dataclass
class RankMechanismResult:
    frame: OrthoFrame
    beta: float
    sigma_beta: Optional[float]
    guarantee_label: str


def rank_mechanism(dataset: Dataset, beta: float, k: int, config: Optional[SamplerConfig] = None, rng=None) -> RankMechanismResult:
    """Gibbs draw on the rank covariance, with the plug-in guarantee as metadata."""
    config = config or SamplerConfig()
    ranked = rank_transform(dataset).dataset
    summary = eig_sym(covariance(ranked), k, n=ranked.n)
    frame = sample(GibbsTarget(summary, beta), config, rng)
    if beta == 0:
        return RankMechanismResult(frame, 0.0, 0.0, NO_UTILITY_LABEL)
    try:
        s2 = sigma_beta(privacy_profile(summary), beta)
    except OutOfRegime:
        return RankMechanismResult(frame, float(beta), None, OUT_OF_REGIME_LABEL)
    return RankMechanismResult(frame, float(beta), float(np.sqrt(s2)), guarantee_label(float(np.sqrt(s2))))
