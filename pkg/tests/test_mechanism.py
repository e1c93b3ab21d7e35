import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from gibbspca.audit import circle_angle_cdf
from gibbspca.errors import ChainInitFailure, ConfigError, DegenerateGap, NormViolationWarning
from gibbspca.mechanism import (
    GibbsTarget,
    OrthoFrame,
    SamplerConfig,
    ZeroFrame,
    assemble,
    exp_mechanism,
    haar_coords,
    log_weight_z,
    mh_chain,
    sample,
    sample_approx,
    sample_batch,
    sample_batch_coords,
    sample_exact_mh,
    sample_haar_frame,
)
from gibbspca.spectral import Dataset, SpectralSummary, spiked_dataset, spiked_summary


def test_haar_frame_is_orthonormal_and_isotropic():
    rng = np.random.default_rng(0)
    p, k, m = 6, 2, 4000
    acc = np.zeros((p, p))
    for _ in range(m):
        v = sample_haar_frame(p, k, rng).matrix
        acc += v @ v.T
    # E[V V^T] = (k/p) I for the Haar measure
    np.testing.assert_allclose(acc / m, (k / p) * np.eye(p), atol=0.03)


def test_haar_qr_sign_fix():
    rng = np.random.default_rng(1)
    q = haar_coords(5, 5, rng)
    np.testing.assert_allclose(q.T @ q, np.eye(5), atol=1e-12)
    # the first column of a Haar orthogonal matrix is uniform on the sphere, so
    # its first entry must be symmetric about zero (no sign bias from QR)
    first = np.array([haar_coords(3, 1, rng)[0, 0] for _ in range(4000)])
    assert abs(first.mean()) < 0.03


def test_frame_invariants():
    with pytest.raises(Exception):
        OrthoFrame(np.ones((3, 1)))
    z = ZeroFrame(4, 2)
    assert z.is_zero and not np.any(z.matrix)


def test_beta_zero_is_haar():
    s = spiked_summary(5, 1, [2.0])
    v = sample(GibbsTarget(s, 0.0), SamplerConfig())
    assert v.matrix.shape == (5, 1)


def test_target_validation():
    with pytest.raises(ConfigError):
        GibbsTarget(spiked_summary(5, 1, [2.0]), -1.0)
    flat = SpectralSummary.from_spectrum(np.ones(4), 1, n=8)
    with pytest.raises(DegenerateGap):
        GibbsTarget(flat, 1.0)
    GibbsTarget(flat, 0.0)
    with pytest.raises(ConfigError):
        SamplerConfig(mode="gibbs")


def test_gaussian_z_mean_square_equals_h_over_beta():
    s = spiked_summary(5, 1, [2.0], 1.0, 1.0)
    t = GibbsTarget(s, 2.0)
    rng = np.random.default_rng(2)
    z = rng.standard_normal((20000,) + t.proposal_scale().shape) * t.proposal_scale()
    assert np.mean(np.sum(z**2, axis=(1, 2))) == pytest.approx(0.4, abs=0.02)


def test_assemble_orthonormal_even_when_clipped():
    rng = np.random.default_rng(3)
    for k in (1, 2, 3):
        for scale in (0.1, 0.6, 2.0):
            z = rng.standard_normal((7, k)) * scale
            q = haar_coords(k, k, rng)
            m = assemble(z, q)
            np.testing.assert_allclose(m.T @ m, np.eye(k), atol=1e-10)


def test_assemble_unclipped_matches_formula():
    rng = np.random.default_rng(4)
    z = rng.standard_normal((5, 2)) * 0.2
    q = haar_coords(2, 2, rng)
    w, v = np.linalg.eigh(np.eye(2) - z.T @ z)
    top = (v * np.sqrt(w)) @ v.T
    np.testing.assert_allclose(assemble(z, q), np.vstack([top, z]) @ q, atol=1e-14)


def test_log_weight():
    z = np.array([[0.6], [0.0]])
    assert log_weight_z(z) == pytest.approx(-0.5 * np.log(1 - 0.36))
    assert log_weight_z(np.array([[1.0], [0.1]])) == -np.inf


def test_draws_are_orthonormal_and_in_span():
    s = spiked_summary(30, 2, [3.0, 2.5], 1.0)
    for mode in ("approximate", "exact_mh"):
        cfg = SamplerConfig(mode=mode, seed=7)
        for v in sample_batch(GibbsTarget(s, 2.0), 20, cfg):
            np.testing.assert_allclose(v.matrix.T @ v.matrix, np.eye(2), atol=1e-10)


def test_seeded_draws_are_reproducible():
    s = spiked_summary(30, 2, [3.0, 2.5], 1.0)
    t = GibbsTarget(s, 2.0)
    cfg = SamplerConfig(seed=11)
    np.testing.assert_array_equal(sample(t, cfg).matrix, sample(t, cfg).matrix)
    a = sample_batch_coords(t, 37, cfg, workers=1).coords
    b = sample_batch_coords(t, 37, cfg, workers=4).coords
    np.testing.assert_array_equal(a, b)
    c = sample_batch_coords(t, 37, SamplerConfig(seed=12)).coords
    assert not np.array_equal(a, c)


def test_mh_chain_stationary_law_on_the_circle():
    # p = 2, k = 1: the exact Gibbs law of the angle is proportional to
    # exp(beta (s1 cos^2 + s2 sin^2)); compare by Kolmogorov-Smirnov
    sig = np.array([2.0, 1.0])
    s = SpectralSummary.from_spectrum(sig, 1, n=3)
    t = GibbsTarget(s, 3.0)
    coords = sample_batch_coords(t, 3000, SamplerConfig(mode="exact_mh", seed=5)).coords
    ang = np.arctan2(coords[:, 1, 0], coords[:, 0, 0])
    res = stats.kstest(ang, lambda a: circle_angle_cdf(sig, 3.0, a))
    assert res.pvalue > 1e-3


def test_mh_chain_thinning_and_rate():
    s = spiked_summary(50, 1, [2.0])
    t = GibbsTarget(s, 2.0)
    ch = mh_chain(t, 100, SamplerConfig(mode="exact_mh", mh_burnin=10, mh_thin=3, seed=1))
    assert ch.zs.shape == (100, 49, 1)
    assert ch.n_proposals == 10 + 99 * 3 + 1
    assert 0 < ch.acceptance_rate <= 1


def test_mh_chain_init_failure():
    s = SpectralSummary.from_spectrum(np.array([1.0 + 1e-6, 1.0, 1.0]), 1, n=5)
    with pytest.raises(ChainInitFailure):
        mh_chain(GibbsTarget(s, 1e-3), 1, SamplerConfig(mode="exact_mh"))
    with pytest.raises(ConfigError):
        mh_chain(GibbsTarget(s, 0.0), 1, SamplerConfig(mode="exact_mh"))


def test_exp_mechanism_on_dataset_and_warning():
    raw = spiked_dataset(12, [3.0], 0.5, 1.0, rng=0).values
    scale = np.sqrt(12) / np.max(np.linalg.norm(raw, axis=1))
    d = Dataset(raw * scale, norm_certified=True)
    v = exp_mechanism(d, 3.0, 1, SamplerConfig(seed=2))
    assert v.matrix.shape == (12, 1)
    loud = Dataset(d.values * 10)
    with pytest.warns(NormViolationWarning):
        exp_mechanism(loud, 3.0, 1)


def test_entry_points_agree_with_modes():
    s = spiked_summary(20, 1, [2.0])
    t = GibbsTarget(s, 2.0)
    rng = np.random.default_rng(9)
    assert sample_approx(t, rng).k == 1
    assert sample_exact_mh(t, SamplerConfig(), rng).k == 1


@settings(max_examples=25, deadline=None)
@given(
    st.integers(3, 15),
    st.integers(1, 2),
    st.floats(0.05, 10.0),
    st.integers(0, 2**32 - 1),
)
def test_property_output_is_orthonormal(p, k, beta, seed):
    if k >= p:
        return
    spikes = list(np.linspace(3.0, 2.0, k))
    s = spiked_summary(p, k, spikes, 1.0)
    v = sample(GibbsTarget(s, beta), SamplerConfig(seed=seed))
    np.testing.assert_allclose(v.matrix.T @ v.matrix, np.eye(k), atol=1e-9)
