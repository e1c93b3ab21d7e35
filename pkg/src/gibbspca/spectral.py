"""Datasets, covariance spectra and the empirical Hilbert-transform statistics.

The bulk statistics are normalized by ``1/p`` (not ``1/(p - k)``) everywhere:

    H(lam)         = (1/p) sum_i 1 / (lam - lam_{k+i})
    K(lam, lam')   = (1/p) sum_i 1 / ((lam - lam_{k+i}) (lam' - lam_{k+i}))

with the sum running over the ``p - k`` bulk eigenvalues.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    DegenerateGap,
    DimensionMismatch,
    EmptyDataset,
    MissingSampleCount,
    NotSymmetric,
    PoleViolation,
    RankOutOfRange,
)

NORM_SLACK = 1e-9
GAP_TOL = 1e-12
POLE_MARGIN = 1e-12


@dataclass(frozen=True)
class Dataset:
    """``n`` samples in ``p`` dimensions, one sample per row."""

    values: np.ndarray
    norm_certified: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2:
            raise DimensionMismatch(f"dataset must be 2-D, got shape {values.shape}")
        if values.shape[0] == 0:
            raise EmptyDataset("dataset has no samples")
        if values.shape[1] == 0:
            raise DimensionMismatch("dataset has no features")
        if not np.all(np.isfinite(values)):
            raise DimensionMismatch("dataset contains non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.norm_certified and not norm_bound_holds(values):
            raise DimensionMismatch("norm_certified set but a row exceeds sqrt(p)")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def certified(self) -> "Dataset":
        """Return a copy flagged as norm-certified (checks the bound)."""
        return Dataset(self.values, norm_certified=True)


def norm_bound_holds(values: np.ndarray) -> bool:
    p = values.shape[1]
    sq = np.einsum("ij,ij->i", values, values)
    return bool(np.all(sq <= p * (1.0 + NORM_SLACK)))


def covariance(dataset: Dataset) -> np.ndarray:
    """Uncentered sample covariance ``(1/n) X^T X``."""
    if dataset.n == 0:
        raise EmptyDataset("covariance of an empty dataset")
    x = dataset.values
    cov = x.T @ x / dataset.n
    return 0.5 * (cov + cov.T)


@dataclass(frozen=True)
class SpectralSummary:
    """Descending eigendecomposition of a covariance matrix plus target rank.

    ``n`` is the originating sample count. It may be non-integral for purely
    synthetic spectra (e.g. ``n = p**1.5`` to pin ``theta = 1``).
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    k: int
    n: Optional[float] = None

    def __post_init__(self):
        lam = np.array(self.eigenvalues, dtype=float)
        vecs = np.array(self.eigenvectors, dtype=float)
        p = lam.shape[0]
        if vecs.shape != (p, p):
            raise DimensionMismatch(f"eigenvectors shape {vecs.shape} != ({p}, {p})")
        if np.any(np.diff(lam) > 0):
            raise DimensionMismatch("eigenvalues must be non-increasing")
        if not 1 <= self.k < p:
            raise RankOutOfRange(f"need 1 <= k < p, got k={self.k}, p={p}")
        lam.setflags(write=False)
        vecs.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "eigenvectors", vecs)

    @classmethod
    def from_spectrum(cls, eigenvalues, k, n=None, eigenvectors=None):
        """Build a summary directly from a spectrum (eigenbasis defaults to I)."""
        lam = np.sort(np.asarray(eigenvalues, dtype=float))[::-1]
        if eigenvectors is None:
            eigenvectors = np.eye(lam.shape[0])
        return cls(lam, eigenvectors, k, n)

    @property
    def p(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def top(self) -> np.ndarray:
        return self.eigenvalues[: self.k]

    @property
    def bulk(self) -> np.ndarray:
        return self.eigenvalues[self.k :]

    @property
    def u_star(self) -> np.ndarray:
        return self.eigenvectors[:, : self.k]

    @property
    def u_perp(self) -> np.ndarray:
        return self.eigenvectors[:, self.k :]

    @property
    def gap(self) -> float:
        return float(self.eigenvalues[self.k - 1] - self.eigenvalues[self.k])

    @property
    def degenerate(self) -> bool:
        return self.gap <= GAP_TOL

    @property
    def theta(self) -> float:
        if self.n is None:
            raise MissingSampleCount("sample count n is required for theta")
        return float(self.n) / self.p**1.5

    def require_gap(self):
        if self.degenerate:
            raise DegenerateGap(
                f"spectral gap lambda_k - lambda_(k+1) = {self.gap:.3e} is degenerate"
            )

    def matrix(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.T

    def with_rank(self, k: int) -> "SpectralSummary":
        return SpectralSummary(self.eigenvalues, self.eigenvectors, k, self.n)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    # argmax returns the lowest index among ties in |entry|
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def eig_sym(matrix, k: int, n: Optional[float] = None, tol: float = 1e-8) -> SpectralSummary:
    """Full descending eigendecomposition with a deterministic sign convention."""
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    p = a.shape[0]
    if not 1 <= k < p:
        raise RankOutOfRange(f"need 1 <= k < p, got k={k}, p={p}")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.T)) > tol * scale:
        raise NotSymmetric("matrix is not symmetric within tolerance")
    lam, vecs = np.linalg.eigh(0.5 * (a + a.T))
    lam = lam[::-1].copy()
    vecs = _fix_signs(vecs[:, ::-1])
    return SpectralSummary(lam, vecs, k, n)


def summarize(dataset: Dataset, k: int) -> SpectralSummary:
    return eig_sym(covariance(dataset), k, n=dataset.n)


def _bulk_offsets(summary: SpectralSummary, lam: float) -> np.ndarray:
    lk1 = summary.eigenvalues[summary.k]
    if not lam > lk1 + POLE_MARGIN:
        raise PoleViolation(f"lambda={lam!r} must exceed lambda_(k+1)={lk1!r}")
    return lam - summary.bulk


def hilbert(summary: SpectralSummary, lam: float, order: int = 0) -> float:
    """Empirical Hilbert transform of the bulk spectrum, or its 1st/2nd derivative."""
    d = _bulk_offsets(summary, lam)
    p = summary.p
    if order == 0:
        return float(np.sum(1.0 / d) / p)
    if order == 1:
        return float(-np.sum(1.0 / d**2) / p)
    if order == 2:
        return float(2.0 * np.sum(1.0 / d**3) / p)
    raise ValueError(f"order must be 0, 1 or 2, got {order}")


def kkernel(summary: SpectralSummary, lam: float, lam2: float) -> float:
    d1 = _bulk_offsets(summary, lam)
    d2 = _bulk_offsets(summary, lam2)
    return float(np.sum(1.0 / (d1 * d2)) / summary.p)


def spiked_spectrum(p: int, spikes, bulk: float = 1.0) -> np.ndarray:
    """Eigenvalues ``(spikes..., bulk, ..., bulk)`` in descending order."""
    spikes = sorted((float(s) for s in spikes), reverse=True)
    if len(spikes) >= p:
        raise RankOutOfRange("need fewer spikes than dimensions")
    return np.array(spikes + [float(bulk)] * (p - len(spikes)))


def spiked_summary(p: int, k: int, spikes, bulk: float = 1.0, theta: float = 1.0) -> SpectralSummary:
    """Synthetic spiked spectrum with ``n = theta * p**1.5`` (possibly fractional)."""
    return SpectralSummary.from_spectrum(spiked_spectrum(p, spikes, bulk), k, n=theta * p**1.5)


def spiked_dataset(p: int, spikes, bulk: float = 1.0, theta: float = 1.0, rng=None) -> Dataset:
    """Dataset whose uncentered covariance has exactly the spiked spectrum.

    ``n = round(theta * p**1.5)`` rows are built as ``sqrt(n) Y diag(sqrt(lam)) R^T``
    with ``Y`` having orthonormal columns and ``R`` a random rotation.
    """
    rng = np.random.default_rng(rng)
    n = int(round(theta * p**1.5))
    if n < p:
        raise RankOutOfRange(f"need n >= p for an exact spectrum, got n={n}, p={p}")
    lam = spiked_spectrum(p, spikes, bulk)
    y, _ = np.linalg.qr(rng.standard_normal((n, p)))
    r, rr = np.linalg.qr(rng.standard_normal((p, p)))
    r = r * np.sign(np.diag(rr))
    x = np.sqrt(n) * (y * np.sqrt(lam)) @ r.T
    return Dataset(x, norm_certified=norm_bound_holds(x))
