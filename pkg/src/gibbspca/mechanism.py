"""Samplers for the Gibbs distribution on p x k orthonormal frames.

The target has density proportional to ``exp((p * beta / 2) * tr(V^T Sigma V))``
against the Haar measure. Every sampler works in eigenbasis coordinates
``W = U^T V`` and only maps back to the ambient space at the end, so Monte-Carlo
consumers can skip the ``O(p^2 k)`` product when they only need projections.

Two Gibbs samplers are provided:

* ``approximate``: independent Gaussian ``Z`` block with entry variances
  ``1 / (beta p (lam_j - lam_{k+i}))``, a Haar ``Q`` and the assembly
  ``W = [(I - Z^T Z)_+^{1/2}; Z] Q``.
* ``exact_mh``: an independence Metropolis-Hastings chain on ``Z`` that uses
  the Gaussian above as proposal. The exact ``Z`` marginal differs from the
  proposal only by the factor ``det(I - Z^T Z)^{-1/2}`` on ``{Z^T Z < I}``, so
  the acceptance ratio is available in closed form.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import (
    ChainInitFailure,
    ConfigError,
    DegenerateGap,
    DimensionMismatch,
    NormViolationWarning,
    RankOutOfRange,
)
from .spectral import Dataset, SpectralSummary, summarize

logger = logging.getLogger(__name__)

DEFAULT_SEED = 0x5EED
ORTHO_TOL = 1e-8
BOUNDARY_EPS = 1e-12
MAX_INIT_TRIES = 1000
_MH_CHUNK = 4096

MODES = ("approximate", "exact_mh")


@dataclass(frozen=True)
class SamplerConfig:
    mode: str = "approximate"
    mh_burnin: int = 64
    mh_thin: int = 1
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown sampler mode {self.mode!r}; expected one of {MODES}")
        if self.mh_burnin < 0:
            raise ConfigError("mh_burnin must be >= 0")
        if self.mh_thin < 1:
            raise ConfigError("mh_thin must be >= 1")


@dataclass(frozen=True)
class GibbsTarget:
    summary: SpectralSummary
    beta: float

    def __post_init__(self):
        beta = float(self.beta)
        if not np.isfinite(beta) or beta < 0:
            raise ConfigError(f"beta must be finite and >= 0, got {self.beta!r}")
        object.__setattr__(self, "beta", beta)
        if beta > 0:
            self.summary.require_gap()

    @property
    def k(self) -> int:
        return self.summary.k

    @property
    def p(self) -> int:
        return self.summary.p

    def proposal_scale(self) -> np.ndarray:
        """Standard deviations of the Gaussian ``Z`` entries, shape ``(p - k, k)``."""
        s = self.summary
        diff = s.top[None, :] - s.bulk[:, None]
        if np.any(diff <= 0):
            raise DegenerateGap("lambda_k must exceed lambda_(k+1) for beta > 0")
        return 1.0 / np.sqrt(self.beta * s.p * diff)


@dataclass(frozen=True)
class OrthoFrame:
    matrix: np.ndarray
    is_zero = False

    def __post_init__(self):
        v = np.array(self.matrix, dtype=float)
        if v.ndim != 2 or v.shape[1] > v.shape[0]:
            raise DimensionMismatch(f"frame must be p x k with k <= p, got {v.shape}")
        dev = np.max(np.abs(v.T @ v - np.eye(v.shape[1])))
        if dev > ORTHO_TOL:
            raise DimensionMismatch(f"frame columns not orthonormal (deviation {dev:.2e})")
        v.setflags(write=False)
        object.__setattr__(self, "matrix", v)

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    @property
    def k(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class ZeroFrame:
    """The all-zeros output of a failed feasibility test. Never a valid frame."""

    p: int
    k: int
    is_zero = True

    @property
    def matrix(self) -> np.ndarray:
        return np.zeros((self.p, self.k))


Frame = Union[OrthoFrame, ZeroFrame]


def sub_generator(seed: int, *key: int) -> np.random.Generator:
    """Counter-based child generator: same ``(seed, key)`` -> same stream."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(x) for x in key))
    return np.random.Generator(np.random.PCG64(ss))


def _as_generator(rng, config: Optional[SamplerConfig] = None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        seed = config.seed if config is not None else DEFAULT_SEED
        return sub_generator(seed)
    return sub_generator(int(rng))


def haar_coords(p: int, k: int, rng) -> np.ndarray:
    if not 1 <= k <= p:
        raise RankOutOfRange(f"need 1 <= k <= p, got k={k}, p={p}")
    g = rng.standard_normal((p, k))
    q, r = np.linalg.qr(g)
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    return q * d


def sample_haar_frame(p: int, k: int, rng=None) -> OrthoFrame:
    """Haar-uniform p x k frame (QR of a Gaussian matrix, R diagonal made positive)."""
    return OrthoFrame(haar_coords(p, k, _as_generator(rng)))


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def assemble(z: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Eigenbasis coordinates ``[(I - Z^T Z)_+^{1/2}; Z] Q``.

    When clipping is active (``Z^T Z`` has eigenvalues above one) the stacked
    matrix is not orthonormal; it is then replaced by its polar factor, which
    only rescales the clipped directions.
    """
    k = z.shape[1]
    if k == 1:
        norm_sq = float(z[:, 0] @ z[:, 0])
        if norm_sq <= 1.0:
            return np.vstack([[[np.sqrt(1.0 - norm_sq)]], z]) @ q
        # clipped: the stacked column is z itself; rescale it onto the sphere
        return np.vstack([[[0.0]], z / np.sqrt(norm_sq)]) @ q
    g = z.T @ z
    m = np.vstack([_psd_sqrt(np.eye(k) - g), z])
    w, v = np.linalg.eigh(0.5 * (g + g.T))
    if w.max() > 1.0:
        # clipped directions have Gram eigenvalue w > 1; the polar factor
        # M (M^T M)^{-1/2} rescales exactly those back to unit length
        scale = 1.0 / np.sqrt(np.maximum(w, 1.0))
        m = m @ ((v * scale) @ v.T)
    return m @ q


def log_weight_z(z: np.ndarray) -> float:
    """``-1/2 log det(I - Z^T Z)`` on ``{Z^T Z < I}``, else ``-inf``.

    This is the log density ratio of the exact ``Z`` marginal to the Gaussian
    proposal, up to an additive constant.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    g = z.T @ z
    if g.shape == (1, 1):
        eig = g.reshape(1)
    else:
        eig = np.linalg.eigvalsh(0.5 * (g + g.T))
    if eig.max() >= 1.0 - BOUNDARY_EPS:
        return -np.inf
    return float(-0.5 * np.sum(np.log1p(-eig)))


def _log_weights(zs: np.ndarray) -> np.ndarray:
    # zs: (m, p - k, k)
    if zs.shape[2] == 1:
        eig = np.einsum("mij,mij->m", zs, zs)[:, None]
    else:
        g = np.einsum("mia,mib->mab", zs, zs)
        eig = np.linalg.eigvalsh(g)
    out = np.full(zs.shape[0], -np.inf)
    ok = eig.max(axis=1) < 1.0 - BOUNDARY_EPS
    out[ok] = -0.5 * np.sum(np.log1p(-eig[ok]), axis=1)
    return out


@dataclass
class ChainResult:
    zs: np.ndarray
    acceptance_rate: float
    n_proposals: int
    n_accepted: int


def mh_chain(target: GibbsTarget, n_keep: int, config: SamplerConfig, rng=None) -> ChainResult:
    """Run the independence MH chain on ``Z`` and return retained states.

    The chain starts from the first proposal inside ``{Z^T Z < I}``, runs
    ``config.mh_burnin`` steps, then keeps one state every ``config.mh_thin``
    steps.
    """
    if target.beta <= 0:
        raise ConfigError("the MH corrector needs beta > 0; beta = 0 is exactly Haar")
    rng = _as_generator(rng, config)
    scale = target.proposal_scale()
    shape = scale.shape

    for _ in range(MAX_INIT_TRIES):
        z_cur = rng.standard_normal(shape) * scale
        lw_cur = log_weight_z(z_cur)
        if np.isfinite(lw_cur):
            break
    else:
        raise ChainInitFailure(
            f"{MAX_INIT_TRIES} consecutive proposals fell outside Z^T Z < I"
        )

    n_steps = config.mh_burnin + (n_keep - 1) * config.mh_thin + 1 if n_keep > 0 else 0
    kept = np.empty((n_keep,) + shape)
    n_kept = 0
    accepted = 0
    step = 0
    while step < n_steps:
        m = min(_MH_CHUNK, n_steps - step)
        props = rng.standard_normal((m,) + shape) * scale
        log_u = np.log(rng.random(m))
        lw = _log_weights(props)
        for j in range(m):
            if log_u[j] < lw[j] - lw_cur:
                z_cur = props[j]
                lw_cur = lw[j]
                accepted += 1
            s = step + j - config.mh_burnin
            if s >= 0 and s % config.mh_thin == 0:
                kept[n_kept] = z_cur
                n_kept += 1
        step += m
    rate = accepted / n_steps if n_steps else float("nan")
    return ChainResult(kept, rate, n_steps, accepted)


@dataclass
class DrawInfo:
    coords: np.ndarray
    acceptance_rate: Optional[float] = None
    clipped: bool = False


def draw_coords(target: GibbsTarget, config: SamplerConfig, rng) -> DrawInfo:
    """One draw in eigenbasis coordinates, per ``config.mode``."""
    p, k = target.p, target.k
    if target.beta == 0:
        return DrawInfo(haar_coords(p, k, rng))
    if config.mode == "approximate":
        q = haar_coords(k, k, rng)
        z = rng.standard_normal((p - k, k)) * target.proposal_scale()
        clipped = not np.isfinite(log_weight_z(z))
        return DrawInfo(assemble(z, q), clipped=clipped)
    chain = mh_chain(target, 1, config, rng)
    q = haar_coords(k, k, rng)
    return DrawInfo(assemble(chain.zs[0], q), acceptance_rate=chain.acceptance_rate)


def _to_frame(target: GibbsTarget, coords: np.ndarray) -> OrthoFrame:
    if target.beta == 0:
        # Haar coordinates are already a Haar frame; no rotation needed.
        return OrthoFrame(coords)
    return OrthoFrame(target.summary.eigenvectors @ coords)


def sample_approx(target: GibbsTarget, rng=None) -> OrthoFrame:
    """Approximate Gibbs draw from the independent-Gaussian construction."""
    info = draw_coords(target, SamplerConfig(mode="approximate"), _as_generator(rng))
    return _to_frame(target, info.coords)


def sample_exact_mh(target: GibbsTarget, config: SamplerConfig, rng=None) -> OrthoFrame:
    """Exact Gibbs draw: one retained state of the Z-space MH chain after burn-in."""
    config = SamplerConfig("exact_mh", config.mh_burnin, config.mh_thin, config.seed)
    info = draw_coords(target, config, _as_generator(rng, config))
    return _to_frame(target, info.coords)


def sample(target: GibbsTarget, config: SamplerConfig, rng=None) -> OrthoFrame:
    info = draw_coords(target, config, _as_generator(rng, config))
    return _to_frame(target, info.coords)


@dataclass
class BatchCoords:
    coords: np.ndarray  # (count, p, k)
    acceptance_rates: Optional[np.ndarray]
    clipped: int


def sample_batch_coords(
    target: GibbsTarget,
    count: int,
    config: SamplerConfig,
    workers: int = 1,
    stream: int = 0,
) -> BatchCoords:
    """``count`` draws in eigenbasis coordinates.

    Draw ``i`` uses the generator keyed by ``(config.seed, stream, i)``, so the
    output does not depend on ``workers``.
    """
    if count < 1:
        raise ConfigError("count must be >= 1")
    out = np.empty((count, target.p, target.k))
    rates = np.empty(count) if (config.mode == "exact_mh" and target.beta > 0) else None
    clipped = np.zeros(count, dtype=bool)

    def work(lo, hi):
        for i in range(lo, hi):
            info = draw_coords(target, config, sub_generator(config.seed, stream, i))
            out[i] = info.coords
            clipped[i] = info.clipped
            if rates is not None:
                rates[i] = info.acceptance_rate

    workers = max(1, int(workers))
    if workers == 1:
        work(0, count)
    else:
        bounds = np.linspace(0, count, workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(work, lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]
            for f in futures:
                f.result()
    return BatchCoords(out, rates, int(clipped.sum()))


def sample_batch(target: GibbsTarget, count: int, config: SamplerConfig, workers: int = 1, stream: int = 0):
    batch = sample_batch_coords(target, count, config, workers, stream)
    return [_to_frame(target, c) for c in batch.coords]


def as_summary(source: Union[Dataset, SpectralSummary], k: int) -> SpectralSummary:
    if isinstance(source, SpectralSummary):
        return source if source.k == k else source.with_rank(k)
    if isinstance(source, Dataset):
        if not source.norm_certified:
            warnings.warn(
                "dataset is not norm-certified (||x|| <= sqrt(p)); privacy semantics do not apply",
                NormViolationWarning,
                stacklevel=3,
            )
        if not 1 <= k < source.p:
            raise RankOutOfRange(f"need 1 <= k < p, got k={k}, p={source.p}")
        return summarize(source, k)
    raise TypeError(f"expected Dataset or SpectralSummary, got {type(source).__name__}")


def exp_mechanism(
    dataset: Union[Dataset, SpectralSummary],
    beta: float,
    k: int,
    config: Optional[SamplerConfig] = None,
    rng=None,
) -> OrthoFrame:
    """Privatized top-k frame drawn from the Gibbs distribution of the data covariance."""
    config = config or SamplerConfig()
    summary = as_summary(dataset, k)
    target = GibbsTarget(summary, beta)
    return sample(target, config, rng)
