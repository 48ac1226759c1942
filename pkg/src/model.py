"""
Realized-T-M-GARCH-tN and Realized-GARCH-tN: parameters, volatility filter,
stationarity region, exact log-likelihoods and their analytic gradients.

Both models share the log-GARCH equation
    log h_t = omega + beta log h_{t-1} + gamma log x_{t-1}
and differ only in the measurement equation:
    rtmg: log x_t = xi_k + phi_k log h_t + sigma eps_t,  k = regime(r_{t-1})
    rg:   log x_t = xi + phi log h_t + tau1 z_t + tau2 (z_t^2 - 1) + sigma eps_t
Returns follow r_t = sqrt(h_t) z_t with z_t standardized Student-t.

Conventions: log h_1 is the log sample variance of the series' returns (unless an
explicit value is passed) and the first observation is measured in regime 1.
"""

import logging
from dataclasses import astuple, dataclass, fields
from functools import cached_property
from typing import ClassVar

import numpy as np
import pandas as pd
from scipy import signal, special

from dist import normal_loglik, std_t_loglik
from errors import ConfigurationError, DataError

logger = logging.getLogger("model")


# -----------------------------
# Parameter vectors
# -----------------------------
class _ParamsMixin:
    kind: ClassVar[str]

    @classmethod
    def names(cls):
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_array(cls, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (len(fields(cls)),):
            raise ConfigurationError(f"{cls.__name__} needs {len(fields(cls))} values, got shape {values.shape}")
        return cls(*(float(v) for v in values))

    def to_array(self):
        return np.array(astuple(self), dtype=float)

    def as_dict(self):
        return dict(zip(self.names(), astuple(self)))


@dataclass(frozen=True)
class ParamsRTMG(_ParamsMixin):
    omega: float
    beta: float
    gamma: float
    xi1: float
    phi1: float
    xi2: float
    phi2: float
    sigma_eps: float
    nu: float

    kind: ClassVar[str] = "rtmg"


@dataclass(frozen=True)
class ParamsRG(_ParamsMixin):
    omega: float
    beta: float
    gamma: float
    xi: float
    phi: float
    tau1: float
    tau2: float
    sigma_eps: float
    nu: float

    kind: ClassVar[str] = "rg"


PARAMS_BY_KIND = {"rtmg": ParamsRTMG, "rg": ParamsRG}

# Default data-generating process for simulation
DEFAULT_RTMG = ParamsRTMG(omega=0.1, beta=0.65, gamma=0.3, xi1=-0.2, phi1=0.95, xi2=-0.5, phi2=0.92, sigma_eps=0.6, nu=10.0)


def params_class(kind):
    try:
        return PARAMS_BY_KIND[kind]
    except KeyError:
        raise ConfigurationError(f"unknown realized model kind {kind!r}; expected one of {sorted(PARAMS_BY_KIND)}") from None


# -----------------------------
# Data containers
# -----------------------------
@dataclass(frozen=True, eq=False)
class JointSeries:
    """Aligned daily percentage log-returns r_t and realized measures x_t."""

    dates: pd.Index
    r: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        r = np.array(self.r, dtype=float)
        x = np.array(self.x, dtype=float)
        dates = pd.Index(self.dates)
        if r.ndim != 1 or x.ndim != 1 or len(r) != len(x) or len(dates) != len(r):
            raise DataError(f"dates, r and x must be 1-d with equal lengths, got {len(dates)}, {r.shape}, {x.shape}")
        if len(r) < 2:
            raise DataError(f"a joint series needs at least 2 observations, got {len(r)}")
        bad = np.flatnonzero(~np.isfinite(r) | ~np.isfinite(x))
        if bad.size:
            raise DataError(f"missing or non-finite values at positions {bad[:10].tolist()}", rows=bad.tolist())
        bad = np.flatnonzero(x <= 0.0)
        if bad.size:
            raise DataError(f"realized measure must be positive; offending positions {bad[:10].tolist()}", rows=bad.tolist())
        r.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "dates", dates)

    @classmethod
    def from_arrays(cls, r, x, dates=None):
        if dates is None:
            dates = pd.RangeIndex(len(r))
        return cls(dates=dates, r=r, x=x)

    def __len__(self):
        return len(self.r)

    def window(self, start, stop):
        return JointSeries(self.dates[start:stop], self.r[start:stop], self.x[start:stop])

    @cached_property
    def log_x(self):
        return np.log(self.x)

    @cached_property
    def log_h1(self):
        """log of the sample variance of the returns: the filter's starting value."""
        return float(np.log(np.var(self.r, ddof=1)))

    @cached_property
    def regimes(self):
        """Measurement regime per observation; the first observation is regime 1."""
        out = np.ones(len(self.r), dtype=np.int8)
        out[1:] = np.where(self.r[:-1] <= 0.0, 1, 2)
        return out


@dataclass(frozen=True, eq=False)
class VolPath:
    h: np.ndarray
    log_h: np.ndarray

    def __len__(self):
        return len(self.h)


# -----------------------------
# Regimes, constraints
# -----------------------------
def regime(r_prev):
    """Threshold regime for the measurement equation (threshold 0, boundary in regime 1)."""
    return 1 if r_prev <= 0.0 else 2


def persistence(params):
    """Per-regime persistence (beta + gamma phi1, beta + gamma phi2); RG returns its single level twice."""
    if isinstance(params, ParamsRG):
        level = params.beta + params.gamma * params.phi
        return level, level
    return params.beta + params.gamma * params.phi1, params.beta + params.gamma * params.phi2


def _in_region(kind, theta):
    if not np.all(np.isfinite(theta)):
        return False
    beta, gamma = theta[1], theta[2]
    if kind == "rtmg":
        stationary = beta + gamma * theta[4] < 1.0 and beta + gamma * theta[6] < 1.0
    else:
        stationary = beta + gamma * theta[4] < 1.0
    return bool(stationary and theta[7] > 0.0 and theta[8] > 4.0)


def check_stationarity(params):
    return _in_region(params.kind, params.to_array())


# -----------------------------
# Volatility filter
# -----------------------------
def _filter_log_h(omega, beta, gamma, log_x, log_h1):
    # log h_t - beta log h_{t-1} = omega + gamma log x_{t-1}
    drive = omega + gamma * log_x[:-1]
    out = np.empty(len(log_x))
    out[0] = log_h1
    out[1:], _ = signal.lfilter([1.0], [1.0, -beta], drive, zi=[beta * log_h1])
    return out


def _lag_filter(beta, drive):
    """s_1 = 0, s_t = drive_{t-1} + beta s_{t-1}: sensitivities of log h_t."""
    out = np.zeros(len(drive) + 1)
    out[1:] = signal.lfilter([1.0], [1.0, -beta], drive)
    return out


def filter_volatility(params, series, log_h1=None):
    """Conditional variance path h_1..h_n; identical recursion for both model kinds."""
    log_h1 = series.log_h1 if log_h1 is None else float(log_h1)
    log_h = _filter_log_h(params.omega, params.beta, params.gamma, series.log_x, log_h1)
    return VolPath(h=np.exp(log_h), log_h=log_h)


def forecast_variance(params, series, log_h1=None):
    """One-step-ahead h_{n+1} from the last filtered variance and realized measure."""
    path = filter_volatility(params, series, log_h1)
    return float(np.exp(params.omega + params.beta * path.log_h[-1] + params.gamma * series.log_x[-1]))


# -----------------------------
# Likelihood
# -----------------------------
def _residuals(kind, theta, series, log_h):
    if kind == "rtmg":
        first = series.regimes == 1
        xi = np.where(first, theta[3], theta[5])
        phi = np.where(first, theta[4], theta[6])
        return series.log_x - xi - phi * log_h
    z = series.r * np.exp(-0.5 * log_h)
    return series.log_x - theta[3] - theta[4] * log_h - theta[5] * z - theta[6] * (z * z - 1.0)


def _loglik_terms(kind, theta, series, log_h1):
    log_h = _filter_log_h(theta[0], theta[1], theta[2], series.log_x, log_h1)
    sigma, nu = theta[7], theta[8]
    h = np.exp(log_h)
    q = series.r * series.r / (h * (nu - 2.0))
    ret = std_t_loglik(series.r, h, nu)
    eps = _residuals(kind, theta, series, log_h)
    meas = normal_loglik(eps, sigma)
    return ret, meas, log_h, eps, q


def loglik_parts(kind, theta, series, log_h1=None):
    """(l(r; theta), l(x | r; theta)); both -inf outside the constraint region."""
    theta = np.asarray(theta, dtype=float)
    if not _in_region(kind, theta):
        return -np.inf, -np.inf
    log_h1 = series.log_h1 if log_h1 is None else float(log_h1)
    ret, meas, *_ = _loglik_terms(kind, theta, series, log_h1)
    return float(ret.sum()), float(meas.sum())


def loglik_array(kind, theta, series, log_h1=None):
    """Total log-likelihood for a raw parameter vector (sampler hot path)."""
    theta = np.asarray(theta, dtype=float)
    if not _in_region(kind, theta):
        return -np.inf
    log_h1 = series.log_h1 if log_h1 is None else float(log_h1)
    ret, meas, *_ = _loglik_terms(kind, theta, series, log_h1)
    total = float(ret.sum() + meas.sum())
    return total if np.isfinite(total) else -np.inf


def loglik_rtmg(params: ParamsRTMG, series, log_h1=None):
    return loglik_array("rtmg", params.to_array(), series, log_h1)


def loglik_rg(params: ParamsRG, series, log_h1=None):
    return loglik_array("rg", params.to_array(), series, log_h1)


def loglik(params, series, log_h1=None):
    return loglik_array(params.kind, params.to_array(), series, log_h1)


def measurement_residuals(params, series, log_h1=None):
    log_h1 = series.log_h1 if log_h1 is None else float(log_h1)
    theta = params.to_array()
    log_h = _filter_log_h(theta[0], theta[1], theta[2], series.log_x, log_h1)
    return _residuals(params.kind, theta, series, log_h)


def loglik_grad(params, series, log_h1=None):
    """
    Analytic gradient of the total log-likelihood, ordered as params.names().

    log h_1 is held fixed, so d log h_t / d(omega, beta, gamma) follow the
    same first-order recursion as log h_t itself.
    """
    kind = params.kind
    theta = params.to_array()
    if not _in_region(kind, theta):
        raise ConfigurationError("gradient requested outside the constraint region")
    log_h1 = series.log_h1 if log_h1 is None else float(log_h1)
    ret, meas, log_h, eps, q = _loglik_terms(kind, theta, series, log_h1)
    omega, beta, gamma = theta[:3]
    sigma, nu = theta[7], theta[8]
    grad = np.zeros(9)

    # return part
    d_ret_dy = -0.5 + 0.5 * (nu + 1.0) * q / (1.0 + q)
    d_a = -0.5 * special.digamma((nu + 1.0) / 2.0) + 0.5 / (nu - 2.0) + 0.5 * special.digamma(nu / 2.0)
    grad[8] = np.sum(-d_a - 0.5 * np.log1p(q) + 0.5 * (nu + 1.0) * q / ((nu - 2.0) * (1.0 + q)))

    # measurement part
    w = eps / sigma**2
    if kind == "rtmg":
        first = series.regimes == 1
        phi = np.where(first, theta[4], theta[6])
        d_meas_dy = w * phi
        grad[3] = np.sum(w[first])
        grad[4] = np.sum(w[first] * log_h[first])
        grad[5] = np.sum(w[~first])
        grad[6] = np.sum(w[~first] * log_h[~first])
    else:
        z = series.r * np.exp(-0.5 * log_h)
        d_meas_dy = w * (theta[4] - 0.5 * theta[5] * z - theta[6] * z * z)
        grad[3] = np.sum(w)
        grad[4] = np.sum(w * log_h)
        grad[5] = np.sum(w * z)
        grad[6] = np.sum(w * (z * z - 1.0))
    grad[7] = np.sum(-1.0 / sigma + eps**2 / sigma**3)

    d_dy = d_ret_dy + d_meas_dy
    n = len(series)
    grad[0] = d_dy @ _lag_filter(beta, np.ones(n - 1))
    grad[1] = d_dy @ _lag_filter(beta, log_h[:-1])
    grad[2] = d_dy @ _lag_filter(beta, series.log_x[:-1])
    return grad
