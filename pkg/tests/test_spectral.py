import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gibbspca.errors import (
    DegenerateGap,
    EmptyDataset,
    MissingSampleCount,
    NotSymmetric,
    PoleViolation,
    RankOutOfRange,
)
from gibbspca.spectral import (
    Dataset,
    SpectralSummary,
    covariance,
    eig_sym,
    hilbert,
    kkernel,
    spiked_dataset,
    spiked_summary,
    summarize,
)


def equal_bulk(p=5, lam=2.0, k=1):
    return spiked_summary(p, k, [lam], 1.0, 1.0)


def test_hilbert_equal_bulk_closed_forms():
    s = equal_bulk()
    assert hilbert(s, 2.0, 0) == pytest.approx(0.8, abs=1e-14)
    assert hilbert(s, 2.0, 1) == pytest.approx(-0.8, abs=1e-14)
    assert hilbert(s, 2.0, 2) == pytest.approx(1.6, abs=1e-14)
    assert kkernel(s, 2.0, 2.0) == pytest.approx(0.8, abs=1e-14)


def test_hilbert_far_spike():
    s = equal_bulk(lam=101.0)
    assert hilbert(s, 101.0) == pytest.approx(0.008, rel=1e-12)


def resolvent_trace(sigma, k, lam, power):
    # oracle: (1/p) Tr[(lam I - P_bulk Sigma P_bulk)^{-power}] restricted to the bulk subspace
    w, v = np.linalg.eigh(sigma)
    v = v[:, ::-1][:, k:]
    bulk = v.T @ sigma @ v
    r = np.linalg.inv(lam * np.eye(bulk.shape[0]) - bulk)
    return np.trace(np.linalg.matrix_power(r, power)) / sigma.shape[0]


def test_hilbert_against_resolvent_oracle():
    rng = np.random.default_rng(3)
    p, k = 12, 2
    q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    lam = np.sort(rng.uniform(0.1, 1.0, p))[::-1]
    lam[:k] = [4.0, 3.0]
    sigma = (q * lam) @ q.T
    s = eig_sym(sigma, k, n=100)
    for x in (3.0, 4.0, 5.5):
        assert hilbert(s, x, 0) == pytest.approx(resolvent_trace(sigma, k, x, 1), rel=1e-10)
        assert hilbert(s, x, 1) == pytest.approx(-resolvent_trace(sigma, k, x, 2), rel=1e-10)
        assert hilbert(s, x, 2) == pytest.approx(2 * resolvent_trace(sigma, k, x, 3), rel=1e-10)
    # K is a symmetric kernel, and K(l, l) = -H'(l)
    assert kkernel(s, 4.0, 3.0) == pytest.approx(kkernel(s, 3.0, 4.0))
    assert kkernel(s, 4.0, 4.0) == pytest.approx(-hilbert(s, 4.0, 1))


def test_hilbert_derivative_matches_finite_difference():
    s = spiked_summary(30, 2, [3.0, 2.5], 1.0)
    h = 1e-5
    fd = (hilbert(s, 2.5 + h) - hilbert(s, 2.5 - h)) / (2 * h)
    assert hilbert(s, 2.5, 1) == pytest.approx(fd, rel=1e-7)


def test_pole_violation():
    s = equal_bulk()
    with pytest.raises(PoleViolation):
        hilbert(s, 1.0)
    with pytest.raises(PoleViolation):
        kkernel(s, 2.0, 0.5)


def test_gap_and_theta():
    s = equal_bulk()
    assert s.gap == 1.0
    assert s.theta == pytest.approx(1.0)
    assert not s.degenerate
    flat = SpectralSummary.from_spectrum(np.ones(4), 1, n=8)
    assert flat.degenerate
    with pytest.raises(DegenerateGap):
        flat.require_gap()
    with pytest.raises(MissingSampleCount):
        SpectralSummary.from_spectrum(np.array([2.0, 1.0]), 1).theta


def test_covariance_is_uncentered():
    x = np.array([[1.0, 2.0], [3.0, 4.0], [-1.0, 0.5]])
    np.testing.assert_allclose(covariance(Dataset(x)), x.T @ x / 3)


def test_dataset_validation():
    with pytest.raises(EmptyDataset):
        Dataset(np.zeros((0, 3)))
    with pytest.raises(Exception):
        Dataset(np.array([[np.nan, 1.0]]))
    d = Dataset(np.ones((2, 3)))
    assert (d.n, d.p) == (2, 3)
    with pytest.raises(ValueError):
        d.values[0, 0] = 5.0


def test_eig_sym_rejects_asymmetric():
    with pytest.raises(NotSymmetric):
        eig_sym(np.array([[1.0, 2.0], [0.0, 1.0]]), 1)


def test_rank_bounds():
    with pytest.raises(RankOutOfRange):
        spiked_summary(5, 5, [2.0])
    with pytest.raises(RankOutOfRange):
        eig_sym(np.eye(3), 0)


def test_eig_sym_sign_convention_is_deterministic():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((6, 6))
    a = a + a.T
    s = eig_sym(a, 2)
    assert np.all(np.diff(s.eigenvalues) <= 0)
    idx = np.argmax(np.abs(s.eigenvectors), axis=0)
    assert np.all(s.eigenvectors[idx, np.arange(6)] > 0)
    s2 = eig_sym(a.copy(), 2)
    np.testing.assert_array_equal(s.eigenvectors, s2.eigenvectors)
    np.testing.assert_allclose(s.matrix(), a, atol=1e-12)


def test_spiked_dataset_has_exact_spectrum():
    d = spiked_dataset(20, [3.0, 2.0], 0.5, theta=1.0, rng=1)
    s = summarize(d, 2)
    np.testing.assert_allclose(s.eigenvalues[:2], [3.0, 2.0], rtol=1e-10)
    np.testing.assert_allclose(s.eigenvalues[2:], 0.5, rtol=1e-10)
    assert s.n == round(20**1.5)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(0.05, 1.0), min_size=3, max_size=12),
    st.floats(0.01, 5.0),
)
def test_hilbert_is_positive_decreasing_convex(bulk, margin):
    lam = np.sort(np.array(bulk))[::-1]
    top = lam[0] + margin
    s = SpectralSummary.from_spectrum(np.concatenate([[top], lam]), 1, n=10)
    assert hilbert(s, top, 0) > 0
    assert hilbert(s, top, 1) < 0
    assert hilbert(s, top, 2) > 0
    assert hilbert(s, top + 1.0) < hilbert(s, top)
