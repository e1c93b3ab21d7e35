"""Data-adaptive choice of ``beta`` under a target privacy level.

The spectral statistics that the calibration formula needs are privatized with
Gaussian noise at budget ``rho``; a private test decides whether the target
``w^2`` is achievable, and if so the mechanism runs at the private plug-in
estimate of ``beta(w^2)``. The end-to-end guarantee is ``sqrt(rho^2 + w^2)``-AGDP.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Union

import numpy as np

from .errors import ConfigError, MissingSampleCount, NonpositiveBudget
from .mechanism import (
    Frame,
    GibbsTarget,
    SamplerConfig,
    ZeroFrame,
    as_summary,
    sample,
    sub_generator,
)
from .spectral import Dataset, SpectralSummary, hilbert
from .theory import guarantee_label

# generator stream ids under the run seed
NOISE_STREAM = 1
SAMPLER_STREAM = 2


@dataclass(frozen=True)
class PrivateSpectralStats:
    d_plus: float
    h_plus: float
    s2_plus: float
    rho: float
    v_d: float
    v_h: float
    v_s: float
    seed: Optional[int] = None

    def to_dict(self):
        return asdict(self)


def _sample_count(summary: SpectralSummary) -> float:
    if summary.n is None:
        raise MissingSampleCount("sample count n is required")
    return float(summary.n)


def raw_stats(summary: SpectralSummary):
    """Non-private ``(D, H, S^2)``: estimates of ``theta^2 Delta``, ``H(gamma_k)``, ``sigma_min^2``."""
    summary.require_gap()
    n = _sample_count(summary)
    p = summary.p
    lam_k = float(summary.eigenvalues[summary.k - 1])
    d = n**2 * summary.gap / p**3
    h = hilbert(summary, lam_k, 0)
    s2 = -(p**3) / (2.0 * n**2) * hilbert(summary, lam_k, 1)
    return float(d), float(h), float(s2)


def noise_variances(summary: SpectralSummary, rho: float):
    """Noise variances ``(v_D, v_H, v_S)`` before the ``1/p`` scaling."""
    if not rho > 0:
        raise NonpositiveBudget(f"rho must be > 0, got {rho!r}")
    summary.require_gap()
    n = _sample_count(summary)
    p = summary.p
    lam_k = float(summary.eigenvalues[summary.k - 1])
    v_d = (np.sqrt(6.0) * n / (rho * p**1.5)) ** 2
    v_h = (np.sqrt(3.0) * p**1.5 / (rho * n) * hilbert(summary, lam_k, 1)) ** 2
    v_s = (np.sqrt(3.0) * p**4.5 / (rho * n**3) * hilbert(summary, lam_k, 2)) ** 2
    return float(v_d), float(v_h), float(v_s)


def privatize_stats(summary: SpectralSummary, rho: float, rng=None, noise=None, seed=None) -> PrivateSpectralStats:
    """Noisy, clipped ``(D, H, S^2_rho)`` with ``S^2_rho = S^2 + 3 sqrt(v_S / p)``.

    ``noise`` overrides the three standard-normal draws (used to test the
    zero-noise path); otherwise they come from ``rng``.
    """
    d, h, s2 = raw_stats(summary)
    v_d, v_h, v_s = noise_variances(summary, rho)
    p = summary.p
    if noise is None:
        if rng is None:
            rng = sub_generator(seed if seed is not None else 0, NOISE_STREAM)
        noise = rng.standard_normal(3)
    g = np.asarray(noise, dtype=float)
    s2_rho = s2 + 3.0 * np.sqrt(v_s / p)
    d_n = d + np.sqrt(v_d / p) * g[0]
    h_n = h + np.sqrt(v_h / p) * g[1]
    s_n = s2_rho + np.sqrt(v_s / p) * g[2]
    return PrivateSpectralStats(
        d_plus=float(max(d_n, 0.0)),
        h_plus=float(max(h_n, 0.0)),
        s2_plus=float(max(s_n, 0.0)),
        rho=float(rho),
        v_d=v_d,
        v_h=v_h,
        v_s=v_s,
        seed=seed,
    )


def feasibility_test(stats: PrivateSpectralStats, w_sq: float) -> int:
    return int(w_sq >= stats.s2_plus)


def private_beta(stats: PrivateSpectralStats, w_sq: float) -> float:
    root = np.sqrt(max(w_sq * w_sq - stats.s2_plus * w_sq, 0.0))
    return float(2.0 * stats.d_plus * (w_sq + root) + stats.h_plus)


@dataclass
class AdaptiveResult:
    frame: Frame
    stats: PrivateSpectralStats
    test: int
    beta_used: Optional[float]
    rho: float
    w_sq: float
    seed: int

    @property
    def guarantee(self) -> float:
        return float(np.hypot(self.rho, np.sqrt(self.w_sq)))

    @property
    def guarantee_label(self) -> str:
        return guarantee_label(self.guarantee)

    def report(self) -> dict:
        return {
            "rho": self.rho,
            "w_sq": self.w_sq,
            "test": self.test,
            "beta_used": self.beta_used,
            "zero_frame": bool(self.frame.is_zero),
            "guarantee": self.guarantee,
            "guarantee_label": self.guarantee_label,
            "seed": self.seed,
            "stats": {
                "d_plus": self.stats.d_plus,
                "h_plus": self.stats.h_plus,
                "s2_plus": self.stats.s2_plus,
            },
        }


def adaptive_mechanism(
    dataset: Union[Dataset, SpectralSummary],
    rho: float,
    w_sq: float,
    k: int,
    config: Optional[SamplerConfig] = None,
) -> AdaptiveResult:
    """Private test, private ``beta``, then the Gibbs draw (or the zero frame)."""
    config = config or SamplerConfig()
    if not rho > 0:
        raise NonpositiveBudget(f"rho must be > 0, got {rho!r}")
    if not w_sq > 0:
        raise ConfigError(f"w_sq must be > 0, got {w_sq!r}")
    summary = as_summary(dataset, k)
    seed = config.seed
    stats = privatize_stats(summary, rho, rng=sub_generator(seed, NOISE_STREAM), seed=seed)
    test = feasibility_test(stats, w_sq)
    if not test:
        return AdaptiveResult(ZeroFrame(summary.p, k), stats, 0, None, float(rho), float(w_sq), seed)
    beta = private_beta(stats, w_sq)
    frame = sample(GibbsTarget(summary, beta), config, sub_generator(seed, SAMPLER_STREAM))
    return AdaptiveResult(frame, stats, 1, beta, float(rho), float(w_sq), seed)
