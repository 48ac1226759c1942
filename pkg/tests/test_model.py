import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose
from scipy import special, stats

import dist
import model
from errors import ConfigurationError, DataError
from model import DEFAULT_RTMG, JointSeries, ParamsRG, ParamsRTMG
from sim import simulate_rtmg


def _random_rtmg(rng):
    beta = rng.uniform(0.3, 0.7)
    gamma = rng.uniform(0.05, 0.3)
    return ParamsRTMG(
        omega=rng.uniform(-0.2, 0.3),
        beta=beta,
        gamma=gamma,
        xi1=rng.uniform(-0.8, 0.2),
        phi1=rng.uniform(0.6, 1.0),
        xi2=rng.uniform(-0.8, 0.2),
        phi2=rng.uniform(0.6, 1.0),
        sigma_eps=rng.uniform(0.3, 1.0),
        nu=rng.uniform(6.0, 20.0),
    )


def _random_rg(rng):
    p = _random_rtmg(rng)
    return ParamsRG(p.omega, p.beta, p.gamma, p.xi1, p.phi1, rng.uniform(-0.2, 0.1), rng.uniform(0.0, 0.2), p.sigma_eps, p.nu)


# -----------------------------
# JointSeries
# -----------------------------
def test_joint_series_rejects_bad_input():
    with pytest.raises(DataError):
        JointSeries.from_arrays([0.1, 0.2], [1.0])
    with pytest.raises(DataError):
        JointSeries.from_arrays([0.1], [1.0])
    with pytest.raises(DataError) as err:
        JointSeries.from_arrays([0.1, 0.2, 0.3], [1.0, 0.0, 2.0])
    assert err.value.rows == [1]
    with pytest.raises(DataError):
        JointSeries.from_arrays([0.1, np.nan], [1.0, 1.0])


def test_joint_series_is_read_only_copy():
    r = np.array([0.5, -0.2, 0.1])
    s = JointSeries.from_arrays(r, [1.0, 2.0, 3.0])
    r[0] = 99.0
    assert s.r[0] == 0.5
    with pytest.raises(ValueError):
        s.r[0] = 1.0


def test_regimes_follow_previous_return_sign():
    s = JointSeries.from_arrays([0.5, -0.2, 0.0, 0.3, 1.0], np.ones(5))
    assert s.regimes.tolist() == [1, 2, 1, 1, 2]
    assert model.regime(0.0) == 1 and model.regime(-1e-9) == 1 and model.regime(1e-9) == 2


def test_window_keeps_dates():
    dates = pd.bdate_range("2020-01-01", periods=6)
    s = JointSeries(dates=dates, r=np.arange(6.0) - 2.5, x=np.ones(6))
    w = s.window(2, 5)
    assert len(w) == 3 and w.dates[0] == dates[2]
    assert_allclose(w.r, [-0.5, 0.5, 1.5])


# -----------------------------
# Filter, persistence, region
# -----------------------------
def test_filter_matches_explicit_recursion(small_series):
    p = DEFAULT_RTMG
    path = model.filter_volatility(p, small_series)
    log_h = [small_series.log_h1]
    for t in range(1, len(small_series)):
        log_h.append(p.omega + p.beta * log_h[-1] + p.gamma * small_series.log_x[t - 1])
    assert_allclose(path.log_h, log_h, rtol=1e-12)
    assert_allclose(path.h, np.exp(log_h), rtol=1e-12)
    expected_next = np.exp(p.omega + p.beta * log_h[-1] + p.gamma * small_series.log_x[-1])
    assert model.forecast_variance(p, small_series) == pytest.approx(expected_next, rel=1e-12)


def test_log_h1_is_log_sample_variance(small_series):
    assert small_series.log_h1 == pytest.approx(np.log(np.var(small_series.r, ddof=1)))


def test_default_persistence():
    assert_allclose(model.persistence(DEFAULT_RTMG), (0.935, 0.926), rtol=1e-12)
    assert model.check_stationarity(DEFAULT_RTMG)


@pytest.mark.parametrize(
    "change",
    [
        {"beta": 0.75},                  # 0.75 + 0.3 * 0.95 > 1
        {"phi2": 1.2},
        {"sigma_eps": 0.0},
        {"sigma_eps": -0.1},
        {"nu": 4.0},
    ],
)
def test_outside_region_is_minus_infinity(small_series, change):
    p = ParamsRTMG(**{**DEFAULT_RTMG.as_dict(), **change})
    assert not model.check_stationarity(p)
    assert model.loglik(p, small_series) == -np.inf
    assert model.loglik_parts("rtmg", p.to_array(), small_series) == (-np.inf, -np.inf)
    with pytest.raises(ConfigurationError):
        model.loglik_grad(p, small_series)


def test_params_round_trip_and_kind():
    theta = DEFAULT_RTMG.to_array()
    assert ParamsRTMG.from_array(theta) == DEFAULT_RTMG
    assert model.params_class("rg") is ParamsRG
    with pytest.raises(ConfigurationError):
        model.params_class("garch")
    with pytest.raises(ConfigurationError):
        ParamsRG.from_array(np.zeros(8))


# -----------------------------
# Likelihood
# -----------------------------
def _std_t_logpdf(r, h, nu):
    scale = np.sqrt(h * (nu - 2.0) / nu)
    return stats.t.logpdf(r / scale, nu) - np.log(scale)


def test_two_observation_likelihood_by_hand():
    p = ParamsRTMG(omega=0.1, beta=0.6, gamma=0.3, xi1=-0.2, phi1=0.9, xi2=-0.4, phi2=0.8, sigma_eps=0.5, nu=8.0)
    r = np.array([-0.7, 1.2])
    x = np.array([0.8, 1.5])
    s = JointSeries.from_arrays(r, x)
    log_h1 = np.log(1.3)
    log_h2 = p.omega + p.beta * log_h1 + p.gamma * np.log(x[0])

    ret = _std_t_logpdf(r[0], np.exp(log_h1), p.nu) + _std_t_logpdf(r[1], np.exp(log_h2), p.nu)
    # first day in regime 1; r_1 < 0 keeps day two in regime 1
    e1 = np.log(x[0]) - p.xi1 - p.phi1 * log_h1
    e2 = np.log(x[1]) - p.xi1 - p.phi1 * log_h2
    meas = stats.norm.logpdf(e1, scale=p.sigma_eps) + stats.norm.logpdf(e2, scale=p.sigma_eps)

    got_ret, got_meas = model.loglik_parts("rtmg", p.to_array(), s, log_h1=log_h1)
    assert got_ret == pytest.approx(ret, rel=1e-12)
    assert got_meas == pytest.approx(meas, rel=1e-12)
    assert model.loglik_rtmg(p, s, log_h1=log_h1) == pytest.approx(ret + meas, rel=1e-12)


def test_return_part_uses_norm_constant():
    nu = 9.0
    a = dist.t_log_norm_const(nu)
    expected = -special.gammaln(5.0) + 0.5 * np.log(np.pi * 7.0) + special.gammaln(4.5)
    assert a == pytest.approx(expected, rel=1e-14)


def test_likelihood_parts_use_the_shared_densities(small_series):
    p = DEFAULT_RTMG
    path = model.filter_volatility(p, small_series)
    eps = model.measurement_residuals(p, small_series)
    ret, meas = model.loglik_parts("rtmg", p.to_array(), small_series)
    assert ret == pytest.approx(dist.std_t_loglik(small_series.r, path.h, p.nu).sum(), rel=1e-12)
    assert meas == pytest.approx(dist.normal_loglik(eps, p.sigma_eps).sum(), rel=1e-12)
    assert_allclose(dist.normal_loglik(eps, 1.0), dist.StdNormal().logpdf(eps), rtol=1e-14)


def test_rg_likelihood_by_hand():
    p = ParamsRG(omega=0.05, beta=0.6, gamma=0.35, xi=-0.3, phi=0.9, tau1=-0.1, tau2=0.05, sigma_eps=0.4, nu=7.0)
    r = np.array([0.4, -1.1, 0.2])
    x = np.array([0.5, 1.9, 0.7])
    s = JointSeries.from_arrays(r, x)
    log_h = [np.log(0.9)]
    for t in (1, 2):
        log_h.append(p.omega + p.beta * log_h[-1] + p.gamma * np.log(x[t - 1]))
    log_h = np.array(log_h)
    z = r / np.exp(0.5 * log_h)
    eps = np.log(x) - p.xi - p.phi * log_h - p.tau1 * z - p.tau2 * (z**2 - 1.0)
    expected = _std_t_logpdf(r, np.exp(log_h), p.nu).sum() + stats.norm.logpdf(eps, scale=p.sigma_eps).sum()
    assert model.loglik_rg(p, s, log_h1=np.log(0.9)) == pytest.approx(expected, rel=1e-12)
    assert_allclose(model.measurement_residuals(p, s, log_h1=np.log(0.9)), eps, rtol=1e-12, atol=1e-14)


def test_reduction_to_realized_garch():
    rng = np.random.default_rng(3)
    series = simulate_rtmg(DEFAULT_RTMG, 200, seed=5).series
    for _ in range(100):
        p = _random_rtmg(rng)
        rtmg = ParamsRTMG(p.omega, p.beta, p.gamma, p.xi1, p.phi1, p.xi1, p.phi1, p.sigma_eps, p.nu)
        rg = ParamsRG(p.omega, p.beta, p.gamma, p.xi1, p.phi1, 0.0, 0.0, p.sigma_eps, p.nu)
        assert model.loglik(rtmg, series) == pytest.approx(model.loglik(rg, series), rel=1e-12, abs=1e-9)


def _fd_gradient(p, series, step=1e-5):
    theta = p.to_array()
    grad = np.empty_like(theta)
    for i in range(len(theta)):
        h = step * max(1.0, abs(theta[i]))
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (model.loglik_array(p.kind, up, series) - model.loglik_array(p.kind, down, series)) / (2.0 * h)
    return grad


def _check_gradients(make, count, n, seed):
    rng = np.random.default_rng(seed)
    series = simulate_rtmg(DEFAULT_RTMG, n, seed=seed).series
    for _ in range(count):
        p = make(rng)
        analytic = model.loglik_grad(p, series)
        numeric = _fd_gradient(p, series)
        rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1.0)
        assert np.all(rel < 1e-4), (p, analytic, numeric)


def test_gradient_matches_finite_differences_rtmg():
    _check_gradients(_random_rtmg, 3, 300, seed=21)


def test_gradient_matches_finite_differences_rg():
    _check_gradients(_random_rg, 3, 300, seed=22)


@pytest.mark.slow
def test_gradient_checks_full_size():
    _check_gradients(_random_rtmg, 20, 500, seed=31)
    _check_gradients(_random_rg, 20, 500, seed=32)


def test_measurement_residuals_vanish_without_noise():
    p = ParamsRTMG(**{**DEFAULT_RTMG.as_dict(), "sigma_eps": 0.0})
    path = simulate_rtmg(p, 400, seed=9)
    resid = model.measurement_residuals(p, path.series, log_h1=np.log(path.h[0]))
    # day one is measured in regime 1 by convention; the generator used the discarded previous return
    assert_allclose(resid[1:], 0.0, atol=1e-9)
