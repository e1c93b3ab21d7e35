"""Plug-in asymptotic curves for utility and privacy of the Gibbs mechanism.

All values are asymptotic plug-in estimates: limiting spectral quantities are
replaced by their empirical counterparts computed from a ``SpectralSummary``.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special

from .errors import DimensionMismatch, DomainError, InfeasibleTarget, NormViolationWarning, OutOfRegime
from .spectral import NORM_SLACK, SpectralSummary, hilbert, kkernel

PLUGIN_LABEL = "asymptotic plug-in estimate"
NO_UTILITY_LABEL = "0-AGDP (no utility, perfect privacy)"
OUT_OF_REGIME_LABEL = "beta <= H(lambda_k): outside the characterized regime, no guarantee label"


@dataclass(frozen=True)
class PrivacyProfile:
    theta: float
    delta: float
    h: float
    hprime: float
    hsecond: float
    sigma_min_sq: float
    beta_crit: float

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class UtilityPrediction:
    beta: float
    overlap_diag: tuple
    spec_err_sq: float
    fro_err_sq: float

    def to_dict(self):
        d = asdict(self)
        d["overlap_diag"] = list(self.overlap_diag)
        return d


def privacy_profile(summary: SpectralSummary) -> PrivacyProfile:
    summary.require_gap()
    theta = summary.theta
    lam_k = float(summary.eigenvalues[summary.k - 1])
    delta = summary.gap
    h = hilbert(summary, lam_k, 0)
    h1 = hilbert(summary, lam_k, 1)
    h2 = hilbert(summary, lam_k, 2)
    return PrivacyProfile(
        theta=theta,
        delta=delta,
        h=h,
        hprime=h1,
        hsecond=h2,
        sigma_min_sq=-h1 / (2.0 * theta**2),
        beta_crit=h - delta * h1,
    )


def utility_prediction(summary: SpectralSummary, beta: float) -> UtilityPrediction:
    """Limiting overlap diagonal and squared subspace errors at noise level ``beta``."""
    if beta < 0:
        raise DomainError("beta must be >= 0")
    k = summary.k
    if beta == 0:
        return UtilityPrediction(0.0, tuple([0.0] * k), 1.0, 2.0 * k)
    ratios = np.array([hilbert(summary, float(lam)) / beta for lam in summary.top])
    overlap = np.clip(1.0 - ratios, 0.0, None)
    capped = np.minimum(1.0, ratios)
    return UtilityPrediction(
        beta=float(beta),
        overlap_diag=tuple(float(x) for x in overlap),
        spec_err_sq=float(capped[-1]),
        fro_err_sq=float(2.0 * capped.sum()),
    )


def sigma_beta(profile: PrivacyProfile, beta: float) -> float:
    """Squared AGDP parameter ``sigma_beta^2`` (constant on the privacy plateau)."""
    pr = profile
    if not beta > pr.h:
        raise OutOfRegime(f"beta={beta!r} must exceed H(lambda_k)={pr.h!r}")
    if beta <= pr.beta_crit:
        return -pr.hprime / (2.0 * pr.theta**2)
    a = beta - pr.h
    return a * a / (2.0 * a + pr.delta * pr.hprime) / (2.0 * pr.delta * pr.theta**2)


def beta_for_target(profile: PrivacyProfile, w_sq: float) -> float:
    """Largest ``beta`` whose plug-in guarantee is ``w``-AGDP."""
    pr = profile
    if w_sq < pr.sigma_min_sq:
        raise InfeasibleTarget(
            f"w^2={w_sq!r} is below sigma_min^2={pr.sigma_min_sq!r}; not achievable"
        )
    root = np.sqrt(max(w_sq * (w_sq - pr.sigma_min_sq), 0.0))
    return float(2.0 * pr.theta**2 * pr.delta * (w_sq + root) + pr.h)


def worst_case_neighbor(summary: SpectralSummary, beta: float):
    """Added data point ``x*`` maximizing the plug-in variance function, and ``t*``."""
    summary.require_gap()
    k = summary.k
    lam_k = float(summary.eigenvalues[k - 1])
    h = hilbert(summary, lam_k, 0)
    if not beta > h:
        raise OutOfRegime(f"beta={beta!r} must exceed H(lambda_k)={h!r}")
    h1 = hilbert(summary, lam_k, 1)
    a = beta - h
    denom = 2.0 * a + summary.gap * h1
    t_star = 1.0 if denom <= 0 else min(a / denom, 1.0)
    u = summary.eigenvectors
    x = np.sqrt(summary.p) * (np.sqrt(t_star) * u[:, k - 1] + np.sqrt(1.0 - t_star) * u[:, k])
    return x, float(t_star)


def _variance_from_coords(summary: SpectralSummary, m_top: np.ndarray, m_cross: np.ndarray, beta: float) -> float:
    # m_top[j, l] = u_j^T E u_l ; m_cross[i, j] = u_{k+i}^T E u_j
    k = summary.k
    top = summary.top
    kmat = np.array([[kkernel(summary, top[j], top[l]) for l in range(k)] for j in range(k)])
    first = 0.5 * np.sum(kmat * m_top**2)
    hs = np.array([hilbert(summary, float(lam)) for lam in top])
    weights = (beta - hs)[None, :] / (top[None, :] - summary.bulk[:, None])
    second = np.sum(weights * m_cross**2)
    return float(first + second)


def variance_function(summary: SpectralSummary, e: np.ndarray, beta: float) -> float:
    """Variance functional of a symmetric perturbation ``E``."""
    e = np.asarray(e, dtype=float)
    if e.shape != (summary.p, summary.p):
        raise DimensionMismatch(f"E has shape {e.shape}, expected ({summary.p}, {summary.p})")
    if beta < 0:
        raise DomainError("beta must be >= 0")
    u = summary.eigenvectors
    k = summary.k
    rot = u.T @ e @ u[:, :k]
    return _variance_from_coords(summary, rot[:k], rot[k:], beta)


def variance_function_datapoint(summary: SpectralSummary, x: np.ndarray, n: float, beta: float) -> float:
    """Variance functional for ``E = sqrt(p) x x^T / n`` without forming ``E``."""
    x = np.asarray(x, dtype=float)
    p = summary.p
    if x.shape != (p,):
        raise DimensionMismatch(f"x has shape {x.shape}, expected ({p},)")
    if x @ x > p * (1.0 + NORM_SLACK):
        warnings.warn("||x||^2 exceeds p", NormViolationWarning, stacklevel=2)
    c = summary.eigenvectors.T @ x
    k = summary.k
    scale = np.sqrt(p) / n
    ct, cb = c[:k], c[k:]
    return _variance_from_coords(summary, scale * np.outer(ct, ct), scale * np.outer(cb, ct), beta)


def gdp_tradeoff(mu, alpha):
    """Type-II error of the optimal level-``alpha`` test of N(0,1) vs N(mu,1)."""
    mu_a = np.asarray(mu, dtype=float)
    a = np.asarray(alpha, dtype=float)
    if np.any(mu_a < 0) or np.any(np.isnan(mu_a)):
        raise DomainError("mu must be >= 0")
    if np.any((a < 0) | (a > 1)) or np.any(np.isnan(a)):
        raise DomainError("alpha must lie in [0, 1]")
    # Phi^{-1}(1 - alpha) = -Phi^{-1}(alpha), better conditioned for small alpha
    out = special.ndtr(-special.ndtri(a) - mu_a)
    out = np.where(a == 0, np.where(np.isinf(mu_a), 0.0, 1.0), out)
    out = np.where(a == 1, 0.0, out)
    return float(out) if out.ndim == 0 else out


def renyi_gauss(mu: float, alpha_order: float) -> float:
    """Order-``alpha`` Renyi divergence of N(mu,1) from N(0,1)."""
    if not alpha_order > 1:
        raise DomainError("Renyi order must exceed 1")
    return float(alpha_order * mu * mu / 2.0)


def guarantee_label(mu: float) -> str:
    return f"{mu:.6g}-AGDP ({PLUGIN_LABEL})"
