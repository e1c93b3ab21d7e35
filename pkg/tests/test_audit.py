import json

import numpy as np
import pytest
from scipy import integrate, special

from gibbspca.audit import (
    compare_report,
    dumps_report,
    empirical_tradeoff,
    estimate_tradeoff,
    estimate_utility,
    loads_report,
    nearest_rank_quantile,
    overlap_metrics,
    procrustes_align,
    sphere_quadrature_moments,
)
from gibbspca.errors import ConfigError, UnsupportedDimension
from gibbspca.mechanism import SamplerConfig, haar_coords
from gibbspca.spectral import spiked_summary
from gibbspca.theory import gdp_tradeoff


def test_quadrature_p2_against_bessel_closed_form():
    # on the circle E[cos^2] = (1 + I1(c/2)/I0(c/2)) / 2 with c = beta (s1 - s2)
    for s1, s2, beta in [(2.0, 1.0, 3.0), (1.5, 1.0, 10.0), (3.0, 0.5, 0.7)]:
        c = beta * (s1 - s2)
        expect = 0.5 * (1 + special.ive(1, c / 2) / special.ive(0, c / 2))
        assert sphere_quadrature_moments([s1, s2], beta, 2) == pytest.approx(expect, abs=1e-8)


def test_quadrature_p3_axisymmetric_against_1d_integral():
    # with s2 = s3 the polar coordinate t = cos(theta) has density prop. to exp(c t^2) on [-1, 1]
    s1, s2, beta = 2.0, 1.0, 3.0
    c = 1.5 * beta * (s1 - s2)
    num = integrate.quad(lambda t: t**2 * np.exp(c * t**2), -1, 1)[0]
    den = integrate.quad(lambda t: np.exp(c * t**2), -1, 1)[0]
    assert sphere_quadrature_moments([s1, s2, s2], beta, 2) == pytest.approx(num / den, abs=1e-6)
    num4 = integrate.quad(lambda t: t**4 * np.exp(c * t**2), -1, 1)[0]
    assert sphere_quadrature_moments([s1, s2, s2], beta, 4) == pytest.approx(num4 / den, abs=1e-6)


def test_quadrature_uniform_limit_and_errors():
    assert sphere_quadrature_moments([1.0, 1.0, 1.0], 2.0, 2) == pytest.approx(1 / 3, abs=1e-8)
    with pytest.raises(UnsupportedDimension):
        sphere_quadrature_moments([3.0, 2.0, 1.0, 0.5], 1.0)


def test_overlap_metrics_match_projection_norms():
    rng = np.random.default_rng(0)
    p, k = 7, 2
    coords = np.stack([haar_coords(p, k, rng) for _ in range(20)])
    spec, fro, diag = overlap_metrics(coords, k)
    u = np.eye(p)[:, :k]
    for i, v in enumerate(coords):
        d = u @ u.T - v @ v.T
        assert spec[i] == pytest.approx(np.linalg.norm(d, 2) ** 2, abs=1e-10)
        assert fro[i] == pytest.approx(np.linalg.norm(d, "fro") ** 2, abs=1e-10)
        np.testing.assert_allclose(diag[i], np.diag(u.T @ v @ v.T @ u), atol=1e-12)


def test_procrustes_recovers_rotation():
    rng = np.random.default_rng(1)
    u = haar_coords(8, 3, rng)
    r = haar_coords(3, 3, rng)
    np.testing.assert_allclose(procrustes_align(u @ r, u).matrix, u, atol=1e-12)


def test_nearest_rank_quantile():
    s = np.arange(1.0, 11.0)
    assert nearest_rank_quantile(s, 0.9) == 9.0
    assert nearest_rank_quantile(s, 0.95) == 10.0
    assert nearest_rank_quantile(s, 0.0) == 1.0
    assert nearest_rank_quantile(s, 1.0) == 10.0


def test_empirical_tradeoff_identical_samples():
    x = np.random.default_rng(2).standard_normal(1000)
    out = empirical_tradeoff(x, x, [0.1, 0.5, 0.9])
    np.testing.assert_allclose(out, [0.9, 0.5, 0.1], atol=2e-3)


def test_estimate_utility_equal_bulk():
    # spike placed so that H(lambda_1) = 0.8 at p = 300, i.e. a predicted error of 0.4 at beta = 2
    s = spiked_summary(300, 1, [1.0 + 299 / 240], 1.0, 1.0)
    est = estimate_utility(s, 2.0, 1, 2000, SamplerConfig(seed=1))
    assert est.theoretical.spec_err_sq == pytest.approx(0.4)
    assert est.spec_err_sq_hat == pytest.approx(0.4, abs=0.05)
    assert est.fro_err_sq_hat == pytest.approx(0.8, abs=0.1)


def test_estimate_utility_haar_and_single_draw():
    s = spiked_summary(200, 1, [2.0], 1.0, 1.0)
    est = estimate_utility(s, 0.0, 1, 5000, SamplerConfig(seed=3))
    assert est.spec_err_sq_hat == pytest.approx(1.0, abs=0.01)
    one = estimate_utility(s, 2.0, 1, 1, SamplerConfig(seed=3))
    assert 0.0 <= one.spec_err_sq_hat <= 1.0


def test_tradeoff_alpha_one_gives_zero():
    s = spiked_summary(60, 1, [2.0], 1.0, 1.0)
    est = estimate_tradeoff(s, 3.0, 1, 200, [1.0], SamplerConfig(seed=4))
    assert est.beta_hat[0] == 0.0


def test_estimate_tradeoff_small_and_report_roundtrip():
    s = spiked_summary(100, 1, [2.0], 1.0, 1.0)
    grid = [0.05, 0.25, 0.5, 0.75, 0.95]
    est = estimate_tradeoff(s, 3.0, 1, 400, grid, SamplerConfig(seed=2), workers=2)
    np.testing.assert_allclose(est.theoretical_overlay, gdp_tradeoff(est.sigma_hat, np.array(grid)))
    mono = est.beta_hat_monotone
    assert np.all(np.diff(mono) <= 0) and np.all(mono <= est.beta_hat)
    util = estimate_utility(s, 3.0, 1, 200, SamplerConfig(seed=2))
    rep = compare_report([util, est], runtimes={"x": 1.0})
    back = loads_report(dumps_report(rep))
    assert back == json.loads(json.dumps(rep))
    sec = back["estimates"][1]
    recomputed = max(abs(a - b) for a, b in zip(sec["beta_hat"], sec["theoretical_overlay"]))
    assert sec["max_deviation"] == pytest.approx(recomputed)
    with pytest.raises(ConfigError):
        loads_report(json.dumps({"schema": "other"}))


def test_tradeoff_requires_enough_draws():
    s = spiked_summary(50, 1, [2.0])
    with pytest.raises(ConfigError):
        estimate_tradeoff(s, 3.0, 1, 99)
