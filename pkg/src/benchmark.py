"""
Classical MLE competitors: GJR-GARCH-t and EGARCH-t, with parametric Student-t
tails or historical simulation (HS) on GARCH-standardized returns.
"""

import logging
from dataclasses import astuple, dataclass, fields
from typing import ClassVar

import numpy as np
from scipy import optimize, signal, stats

import dist
from errors import EstimationError, InsufficientDataError

logger = logging.getLogger("benchmark")

PENALTY = 1e8
MIN_OBS = 100
RESTARTS = 5
XATOL = 1e-8
MAX_POLISH = 10


@dataclass(frozen=True)
class ParamsGJR:
    omega: float
    beta: float
    gamma_arch: float
    alpha_lev: float
    nu: float

    kind: ClassVar[str] = "gjr-t"

    def to_array(self):
        return np.array(astuple(self), dtype=float)

    @classmethod
    def names(cls):
        return tuple(f.name for f in fields(cls))

    def valid(self):
        return bool(
            self.omega > 0.0
            and self.beta >= 0.0
            and self.gamma_arch >= 0.0
            and self.gamma_arch + self.alpha_lev >= 0.0
            and self.gamma_arch + 0.5 * self.alpha_lev + self.beta < 1.0
            and self.nu > 4.0
        )


@dataclass(frozen=True)
class ParamsEGARCH:
    omega: float
    beta: float
    tau1: float
    tau2: float
    nu: float

    kind: ClassVar[str] = "egarch-t"

    def to_array(self):
        return np.array(astuple(self), dtype=float)

    @classmethod
    def names(cls):
        return tuple(f.name for f in fields(cls))

    def valid(self):
        return bool(abs(self.beta) < 1.0 and self.nu > 4.0)


@dataclass
class BenchmarkFit:
    params: object
    loglik: float
    h: np.ndarray          # in-sample conditional variances
    h_next: float
    diagnostics: dict


# -----------------------------
# Filters
# -----------------------------
def _initial_variance(returns):
    return float(np.var(returns, ddof=1))


def gjr_filter(params, returns, h1=None):
    """h_t = omega + beta h_{t-1} + (gamma + alpha I[r_{t-1} <= 0]) r_{t-1}^2; returns (h_1..h_n, h_{n+1})."""
    r = np.asarray(returns, dtype=float)
    h1 = _initial_variance(r) if h1 is None else float(h1)
    shock = (params.gamma_arch + params.alpha_lev * (r <= 0.0)) * r * r
    drive = params.omega + shock
    out, _ = signal.lfilter([1.0], [1.0, -params.beta], drive, zi=[params.beta * h1])
    h = np.concatenate(([h1], out[:-1]))
    return h, float(out[-1])


def egarch_filter(params, returns, h1=None):
    """log h_t = omega + beta log h_{t-1} + tau1 z_{t-1} + tau2 (|z_{t-1}| - E|z|); returns (h_1..h_n, h_{n+1})."""
    r = np.asarray(returns, dtype=float)
    h1 = _initial_variance(r) if h1 is None else float(h1)
    e_abs = dist.StdT(params.nu).expected_abs()
    log_h = np.empty(len(r) + 1)
    log_h[0] = np.log(h1)
    omega, beta, tau1, tau2 = params.omega, params.beta, params.tau1, params.tau2
    for t in range(len(r)):
        z = r[t] * np.exp(-0.5 * log_h[t])
        log_h[t + 1] = omega + beta * log_h[t] + tau1 * z + tau2 * (abs(z) - e_abs)
    h = np.exp(log_h)
    return h[:-1], float(h[-1])


def gjr_loglik(params, returns, h1=None):
    h, _ = gjr_filter(params, returns, h1)
    return float(np.sum(dist.std_t_loglik(np.asarray(returns, dtype=float), h, params.nu)))


def egarch_loglik(params, returns, h1=None):
    h, _ = egarch_filter(params, returns, h1)
    return float(np.sum(dist.std_t_loglik(np.asarray(returns, dtype=float), h, params.nu)))


# -----------------------------
# Estimation
# -----------------------------
def _nu_start(returns):
    # kurtosis of a standardized t is 3 + 6/(nu-4)
    k = float(stats.kurtosis(returns, fisher=False))
    return max((4.0 * k - 6.0) / (k - 3.0) if k > 3.75 else 12.0, 5.0)


def _objective(cls, loglik_fn, returns):
    def neg_loglik(x):
        params = cls(*x)
        if not params.valid():
            return PENALTY
        try:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                value = loglik_fn(params, returns)
        except (ValueError, FloatingPointError):
            return PENALTY
        return -value if np.isfinite(value) else PENALTY
    return neg_loglik


def _minimize(objective, x0):
    """Nelder-Mead restarted from its own optimum until it stops improving."""
    x, fun, nfev = np.asarray(x0, dtype=float), objective(x0), 0
    for _ in range(MAX_POLISH):
        res = optimize.minimize(
            objective, x, method="Nelder-Mead",
            options={"xatol": XATOL, "fatol": 1e-10, "maxiter": 40000, "maxfev": 40000, "adaptive": True},
        )
        nfev += res.nfev
        improvement = fun - res.fun
        if res.fun < fun:
            x, fun = res.x, res.fun
        if improvement < 1e-9:
            break
    return x, fun, nfev


def _fit(cls, loglik_fn, filter_fn, returns, init, seed, restarts):
    r = np.asarray(returns, dtype=float)
    if len(r) < MIN_OBS:
        raise InsufficientDataError(f"{cls.kind} needs at least {MIN_OBS} returns, got {len(r)}")
    objective = _objective(cls, loglik_fn, r)
    rng = np.random.default_rng(seed)
    x0 = init.to_array()
    starts = [x0] + [x0 * (1.0 + 0.1 * rng.standard_normal(len(x0))) for _ in range(restarts - 1)]

    best_x, best_fun, tried, total_nfev = None, np.inf, 0, 0
    for start in starts:
        if objective(start) >= PENALTY:
            continue
        tried += 1
        x, fun, nfev = _minimize(objective, start)
        total_nfev += nfev
        if fun < best_fun:
            best_x, best_fun = x, fun

    diagnostics = {"model": cls.kind, "starts_tried": tried, "nfev": total_nfev, "n": len(r)}
    if best_x is None or best_fun >= PENALTY:
        raise EstimationError(f"{cls.kind} optimizer found no admissible optimum after {restarts} starts", diagnostics)
    params = cls(*best_x)
    h, h_next = filter_fn(params, r)
    logger.debug("%s fit: loglik %.4f after %d evaluations", cls.kind, -best_fun, total_nfev)
    return BenchmarkFit(params=params, loglik=-float(best_fun), h=h, h_next=h_next, diagnostics=diagnostics)


def gjr_initial(returns):
    v = _initial_variance(returns)
    return ParamsGJR(omega=v * (1.0 - 0.85 - 0.05 - 0.04), beta=0.85, gamma_arch=0.05, alpha_lev=0.08, nu=_nu_start(returns))


def egarch_initial(returns):
    v = _initial_variance(returns)
    return ParamsEGARCH(omega=0.05 * np.log(v), beta=0.95, tau1=-0.05, tau2=0.1, nu=_nu_start(returns))


def fit_gjr_t(returns, init=None, seed=0, restarts=RESTARTS):
    init = init or gjr_initial(returns)
    return _fit(ParamsGJR, gjr_loglik, gjr_filter, returns, init, seed, restarts)


def fit_egarch_t(returns, init=None, seed=0, restarts=RESTARTS):
    init = init or egarch_initial(returns)
    return _fit(ParamsEGARCH, egarch_loglik, egarch_filter, returns, init, seed, restarts)


# -----------------------------
# Tail estimates
# -----------------------------
def parametric_var_es(params, h_next, alpha):
    return dist.var_quantile(h_next, params.nu, alpha), dist.es_tail(h_next, params.nu, alpha)


def hs_var_es(returns, h_path, h_next, alpha):
    """
    Historical simulation on r_t / sqrt(h_t), rescaled by sqrt(h_next).

    VaR uses the lower empirical quantile (inverse of the empirical CDF); ES is the
    mean of the standardized returns at or below it.
    """
    s = np.asarray(returns, dtype=float) / np.sqrt(np.asarray(h_path, dtype=float))
    if len(s) < 1.0 / alpha:
        raise InsufficientDataError(f"historical simulation at alpha={alpha} needs {int(np.ceil(1.0 / alpha))} observations, got {len(s)}")
    q = float(np.quantile(s, alpha, method="inverted_cdf"))
    es = float(s[s <= q].mean())
    scale = np.sqrt(h_next)
    return scale * q, scale * es
