"""Monte-Carlo audit harness.

Estimates finite-p utility and trade-off functions of the Gibbs mechanism and
sets them beside the plug-in asymptotic curves. The trade-off audit follows the
four-step recipe: null statistics ``||V^T x*||^2``, their empirical ``1 - alpha``
quantiles, alternative statistics on the dataset with ``x*`` added, and the
fraction of alternative statistics strictly below each quantile.

The single-neighbor audit is an estimate of the worst case, not a certified
lower bound on the trade-off function.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, DimensionMismatch, MissingSampleCount, UnsupportedDimension
from .mechanism import (
    GibbsTarget,
    OrthoFrame,
    SamplerConfig,
    as_summary,
    sample_batch_coords,
)
from .spectral import Dataset, SpectralSummary, eig_sym
from .theory import (
    PLUGIN_LABEL,
    UtilityPrediction,
    gdp_tradeoff,
    privacy_profile,
    sigma_beta,
    utility_prediction,
    worst_case_neighbor,
)

SCHEMA = "audit/v1"
NULL_STREAM = 11
ALT_STREAM = 12
UTILITY_STREAM = 13


def default_alpha_grid() -> np.ndarray:
    return np.round(np.arange(1, 100) / 100.0, 2)


@dataclass
class UtilityEstimate:
    spec_err_sq_hat: float
    fro_err_sq_hat: float
    overlap_diag_hat: list
    n_mc: int
    seed: int
    theoretical: UtilityPrediction
    acceptance_rate: Optional[float] = None

    @property
    def max_deviation(self) -> float:
        th = self.theoretical
        devs = [abs(self.spec_err_sq_hat - th.spec_err_sq), abs(self.fro_err_sq_hat - th.fro_err_sq)]
        devs += [abs(a - b) for a, b in zip(self.overlap_diag_hat, th.overlap_diag)]
        return float(max(devs))

    def to_dict(self) -> dict:
        return {
            "kind": "utility",
            "spec_err_sq_hat": self.spec_err_sq_hat,
            "fro_err_sq_hat": self.fro_err_sq_hat,
            "overlap_diag_hat": list(self.overlap_diag_hat),
            "n_mc": self.n_mc,
            "seed": self.seed,
            "acceptance_rate": self.acceptance_rate,
            "theoretical": self.theoretical.to_dict(),
            "max_deviation": self.max_deviation,
        }


@dataclass
class TradeoffEstimate:
    alpha_grid: np.ndarray
    beta_hat: np.ndarray
    n_mc: int
    seed: int
    theoretical_overlay: np.ndarray
    sigma_hat: float
    beta: float
    t_star: Optional[float] = None
    alternative: str = "neighbor"
    extra: dict = field(default_factory=dict)

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.beta_hat - self.theoretical_overlay)))

    @property
    def beta_hat_monotone(self) -> np.ndarray:
        """Reporting-only correction: running minimum along increasing alpha."""
        order = np.argsort(self.alpha_grid, kind="stable")
        out = np.empty_like(self.beta_hat)
        out[order] = np.minimum.accumulate(self.beta_hat[order])
        return out

    def to_dict(self) -> dict:
        return {
            "kind": "tradeoff",
            "alternative": self.alternative,
            "beta": self.beta,
            "t_star": self.t_star,
            "sigma_hat": self.sigma_hat,
            "label": PLUGIN_LABEL,
            "n_mc": self.n_mc,
            "seed": self.seed,
            "alpha_grid": [float(a) for a in self.alpha_grid],
            "beta_hat": [float(b) for b in self.beta_hat],
            "beta_hat_monotone": [float(b) for b in self.beta_hat_monotone],
            "theoretical_overlay": [float(t) for t in self.theoretical_overlay],
            "max_deviation": self.max_deviation,
            **self.extra,
        }


def overlap_metrics(coords: np.ndarray, k: int):
    """Per-draw (spec_err_sq, fro_err_sq, overlap diagonal) from eigenbasis coords.

    With ``A = U_*^T V`` the overlap is ``O = A A^T``; then
    ``||U_* U_*^T - V V^T||^2 = 1 - lambda_min(O)`` and the squared Frobenius
    error is ``2k - 2 tr(O)``.
    """
    a = coords[:, :k, :]
    o = np.einsum("mik,mjk->mij", a, a)
    lam_min = np.linalg.eigvalsh(o)[:, 0]
    spec = np.clip(1.0 - lam_min, 0.0, 1.0)
    diag = np.einsum("mii->mi", o)
    fro = 2.0 * k - 2.0 * diag.sum(axis=1)
    return spec, fro, diag


def estimate_utility(
    source: Union[Dataset, SpectralSummary],
    beta: float,
    k: int,
    n_mc: int,
    config: Optional[SamplerConfig] = None,
    workers: int = 1,
) -> UtilityEstimate:
    """Sample-mean squared subspace errors over ``n_mc`` draws."""
    if n_mc < 1:
        raise ConfigError("n_mc must be >= 1")
    config = config or SamplerConfig()
    summary = as_summary(source, k)
    target = GibbsTarget(summary, beta)
    batch = sample_batch_coords(target, n_mc, config, workers, stream=UTILITY_STREAM)
    spec, fro, diag = overlap_metrics(batch.coords, k)
    rate = float(np.mean(batch.acceptance_rates)) if batch.acceptance_rates is not None else None
    return UtilityEstimate(
        spec_err_sq_hat=float(np.mean(spec)),
        fro_err_sq_hat=float(np.mean(fro)),
        overlap_diag_hat=[float(x) for x in diag.mean(axis=0)],
        n_mc=n_mc,
        seed=config.seed,
        theoretical=utility_prediction(summary, beta),
        acceptance_rate=rate,
    )


def nearest_rank_quantile(sorted_values: np.ndarray, q: float) -> float:
    """Nearest-rank ``q``-quantile of an ascending sample (``q = 0`` gives the min)."""
    m = sorted_values.shape[0]
    idx = min(max(math.ceil(q * m) - 1, 0), m - 1)
    return float(sorted_values[idx])


def projection_stats(coords: np.ndarray, x_coords: np.ndarray) -> np.ndarray:
    """``||V^T x||^2`` for each draw, with ``V = U W`` and ``x_coords = U^T x``."""
    proj = np.einsum("mpk,p->mk", coords, x_coords)
    return np.einsum("mk,mk->m", proj, proj)


def empirical_tradeoff(null_stats: np.ndarray, alt_stats: np.ndarray, alpha_grid) -> np.ndarray:
    s = np.sort(null_stats)
    t = np.array([nearest_rank_quantile(s, 1.0 - a) for a in alpha_grid])
    return np.mean(alt_stats[None, :] < t[:, None], axis=1)


def neighbor_summary(summary: SpectralSummary, x: np.ndarray) -> SpectralSummary:
    """Spectrum of ``(n Sigma + x x^T) / (n + 1)``."""
    if summary.n is None:
        raise MissingSampleCount("the add-one neighbor needs the sample count n")
    n = float(summary.n)
    cov = (n * summary.matrix() + np.outer(x, x)) / (n + 1.0)
    return eig_sym(0.5 * (cov + cov.T), summary.k, n=n + 1.0)


def estimate_tradeoff(
    source: Union[Dataset, SpectralSummary],
    beta: float,
    k: int,
    n_mc: int,
    alpha_grid: Optional[Sequence[float]] = None,
    config: Optional[SamplerConfig] = None,
    workers: int = 1,
    alternative: str = "neighbor",
) -> TradeoffEstimate:
    """Empirical trade-off between the dataset and its worst-case add-one neighbor.

    ``alternative="null"`` replaces the neighbor with a second independent
    batch from the null distribution (a calibration check: the estimate should
    then track ``1 - alpha``).
    """
    if n_mc < 100:
        raise ConfigError("n_mc must be >= 100 for trade-off estimation")
    if alternative not in ("neighbor", "null"):
        raise ConfigError(f"unknown alternative {alternative!r}")
    config = config or SamplerConfig()
    alpha = default_alpha_grid() if alpha_grid is None else np.asarray(alpha_grid, dtype=float)
    if np.any((alpha < 0) | (alpha > 1)):
        raise ConfigError("alpha grid must lie in [0, 1]")
    summary = as_summary(source, k)
    x_star, t_star = worst_case_neighbor(summary, beta)
    profile = privacy_profile(summary)
    sigma_hat = float(np.sqrt(sigma_beta(profile, beta)))

    null_target = GibbsTarget(summary, beta)
    null_batch = sample_batch_coords(null_target, n_mc, config, workers, stream=NULL_STREAM)
    null_stats = projection_stats(null_batch.coords, summary.eigenvectors.T @ x_star)

    if alternative == "neighbor":
        alt_summary = neighbor_summary(summary, x_star)
        alt_target = GibbsTarget(alt_summary, beta)
        expected = gdp_tradeoff(sigma_hat, alpha)
    else:
        alt_summary = summary
        alt_target = null_target
        expected = 1.0 - alpha
    alt_batch = sample_batch_coords(alt_target, n_mc, config, workers, stream=ALT_STREAM)
    alt_stats = projection_stats(alt_batch.coords, alt_summary.eigenvectors.T @ x_star)

    beta_hat = empirical_tradeoff(null_stats, alt_stats, alpha)
    extra = {
        "null_stat_mean": float(np.mean(null_stats)),
        "alt_stat_mean": float(np.mean(alt_stats)),
        "sampler_mode": config.mode,
    }
    return TradeoffEstimate(alpha, beta_hat, n_mc, config.seed, np.asarray(expected, dtype=float),
                            sigma_hat, float(beta), t_star, alternative, extra)


def _sphere_expectation(sig: np.ndarray, beta: float, power: int, n: int) -> float:
    p = sig.shape[0]
    top = int(np.argmax(sig))
    others = [i for i in range(p) if i != top]
    c = p * beta / 2.0
    if p == 2:
        phi = (np.arange(n) + 0.5) * (2.0 * np.pi / n)
        v1, v2 = np.cos(phi), np.sin(phi)
        expo = c * (sig[top] * v1**2 + sig[others[0]] * v2**2)
        w = np.exp(expo - expo.max())
        return float(np.sum(w * v1 ** (2 * power)) / np.sum(w))
    t, gw = np.polynomial.legendre.leggauss(n)
    phi = (np.arange(n) + 0.5) * (2.0 * np.pi / n)
    tt, pp = np.meshgrid(t, phi, indexing="ij")
    s = np.sqrt(1.0 - tt**2)
    v2, v3 = s * np.cos(pp), s * np.sin(pp)
    expo = c * (sig[top] * tt**2 + sig[others[0]] * v2**2 + sig[others[1]] * v3**2)
    w = np.exp(expo - expo.max()) * gw[:, None]
    return float(np.sum(w * tt ** (2 * power)) / np.sum(w))


def sphere_quadrature_moments(sigma_diag, beta: float, moment: int = 2, tol: float = 1e-4, n_start: int = 2000, n_max: int = 16000) -> float:
    """``E[(v^T u_1)^moment]`` under the k = 1 Gibbs law on the unit sphere, p in {2, 3}.

    ``Sigma = diag(sigma_diag)`` and ``u_1`` is the coordinate axis of its largest
    entry. The grid is doubled until two successive resolutions agree to ``tol``.
    """
    sig = np.asarray(sigma_diag, dtype=float)
    if sig.ndim != 1 or sig.shape[0] not in (2, 3):
        raise UnsupportedDimension("quadrature oracle supports p in {2, 3} only")
    if moment not in (2, 4):
        raise ConfigError("moment must be 2 or 4")
    power = moment // 2
    n = n_start
    prev = _sphere_expectation(sig, beta, power, n)
    while n < n_max:
        n *= 2
        cur = _sphere_expectation(sig, beta, power, n)
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    raise ConfigError("sphere quadrature did not converge")


def circle_angle_cdf(sigma_diag, beta: float, angles: np.ndarray, n: int = 20000) -> np.ndarray:
    """CDF of the angle ``atan2(v_2, v_1)`` in ``[-pi, pi)`` for p = 2, k = 1."""
    sig = np.asarray(sigma_diag, dtype=float)
    if sig.shape != (2,):
        raise UnsupportedDimension("angle CDF is defined for p = 2")
    phi = -np.pi + (np.arange(n) + 0.5) * (2.0 * np.pi / n)
    expo = beta * (sig[0] * np.cos(phi) ** 2 + sig[1] * np.sin(phi) ** 2)
    w = np.exp(expo - expo.max())
    cdf = np.cumsum(w) / np.sum(w)
    edges = phi + np.pi / n
    return np.interp(angles, edges, cdf, left=0.0, right=1.0)


def procrustes_align(v, u_ref) -> OrthoFrame:
    """Rotate ``V`` within its span to best match ``U_ref`` in Frobenius norm."""
    v = v.matrix if isinstance(v, OrthoFrame) else np.asarray(v, dtype=float)
    u = u_ref.matrix if isinstance(u_ref, OrthoFrame) else np.asarray(u_ref, dtype=float)
    if v.shape != u.shape:
        raise DimensionMismatch(f"shape mismatch {v.shape} vs {u.shape}")
    a, _, bt = np.linalg.svd(v.T @ u)
    return OrthoFrame(v @ (a @ bt))


def compare_report(estimates=(), theory_overlays=None, runtimes=None, meta=None) -> dict:
    """Bundle estimates, overlays and deviations into one ``audit/v1`` document."""
    sections = [e.to_dict() if hasattr(e, "to_dict") else dict(e) for e in estimates]
    devs = [s["max_deviation"] for s in sections if "max_deviation" in s]
    report = {
        "schema": SCHEMA,
        "label": PLUGIN_LABEL,
        "estimates": sections,
        "theory": dict(theory_overlays or {}),
        "max_deviation": max(devs) if devs else None,
        "seeds": sorted({s["seed"] for s in sections if "seed" in s}),
    }
    if runtimes is not None:
        report["runtimes"] = dict(runtimes)
    if meta:
        report["meta"] = dict(meta)
    return report


def dumps_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False)


def loads_report(text: str) -> dict:
    report = json.loads(text)
    if report.get("schema") != SCHEMA:
        raise ConfigError(f"unsupported report schema {report.get('schema')!r}")
    return report
