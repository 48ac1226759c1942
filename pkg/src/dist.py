"""
Standardized return/measurement distributions and closed-form tail functionals.

Student-t quantities come in two flavours:
  t_pdf / t_cdf / t_inv    -- the textbook Student-t with nu degrees of freedom
  StdT, var_quantile, ...  -- the variate rescaled by sqrt((nu-2)/nu) to unit variance

All functions accept scalars or numpy arrays and broadcast; scalar in, float out.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from errors import DomainError

logger = logging.getLogger("dist")

# Newton polish / bisection fallback settings for t_inv
TOL = 1e-12
MAX_ITER = 200
LOG_2PI = float(np.log(2.0 * np.pi))


def _as_float(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return arr


def _check_nu(nu, minimum=2.0):
    arr = _as_float(nu, "nu")
    if np.any(arr <= minimum):
        raise DomainError(f"nu must be > {minimum:g}, got {nu!r}")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def t_pdf(z, nu):
    """Student-t density with nu degrees of freedom (unit scale)."""
    z = _as_float(z, "z")
    nu = _check_nu(nu)
    logc = special.gammaln((nu + 1.0) / 2.0) - special.gammaln(nu / 2.0) - 0.5 * np.log(np.pi * nu)
    return _out(np.exp(logc - (nu + 1.0) / 2.0 * np.log1p(z * z / nu)))


def t_cdf(z, nu):
    z = _as_float(z, "z")
    nu = _check_nu(nu)
    return _out(special.stdtr(nu, z))


def t_inv(alpha, nu):
    """
    Inverse Student-t CDF.

    Starts from the incomplete-beta inversion and polishes with Newton steps on the
    lower tail (symmetry gives the upper tail); entries that fail to converge are
    solved by bracketing.
    """
    alpha = _as_float(alpha, "alpha")
    if np.any((alpha <= 0.0) | (alpha >= 1.0)):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    nu = _check_nu(nu)
    alpha, nu = np.broadcast_arrays(alpha, nu)

    lower = np.minimum(alpha, 1.0 - alpha)
    x = special.stdtrit(nu, lower)
    converged = np.zeros(x.shape, dtype=bool)
    for _ in range(MAX_ITER):
        dens = np.asarray(t_pdf(x, nu))
        step = (special.stdtr(nu, x) - lower) / dens
        step = np.where(converged, 0.0, step)
        x = x - step
        converged |= np.abs(step) <= TOL * np.maximum(1.0, np.abs(x))
        if converged.all():
            break

    bad = ~converged | ~np.isfinite(x)
    if bad.any():
        logger.debug("t_inv: %d entries fall back to bracketing", int(bad.sum()))
        for idx in zip(*np.nonzero(np.atleast_1d(bad))):
            a, v = float(np.atleast_1d(lower)[idx]), float(np.atleast_1d(nu)[idx])
            root = optimize.brentq(lambda q: special.stdtr(v, q) - a, -1e6, 0.0, xtol=TOL, maxiter=MAX_ITER)
            if x.ndim == 0:
                x = np.asarray(root)
            else:
                x[idx] = root

    return _out(np.where(alpha > 0.5, -x, x))


def t_scale(nu):
    """sqrt((nu-2)/nu): maps a raw t variate to unit variance."""
    nu = _check_nu(nu)
    return _out(np.sqrt((nu - 2.0) / nu))


def t_log_norm_const(nu):
    """A(nu) = -log G((nu+1)/2) + log(pi(nu-2))/2 + log G(nu/2)."""
    nu = np.asarray(nu, dtype=float)
    return -special.gammaln((nu + 1.0) / 2.0) + 0.5 * np.log(np.pi * (nu - 2.0)) + special.gammaln(nu / 2.0)


def std_t_loglik(r, h, nu):
    """
    Per-observation log density of r ~ sqrt(h) * StdT(nu).

    No argument checking: this sits in the likelihood hot path.
    """
    return -t_log_norm_const(nu) - 0.5 * np.log(h) - 0.5 * (nu + 1.0) * np.log1p(r * r / (h * (nu - 2.0)))


def normal_loglik(e, sigma):
    """Per-observation log density of e ~ N(0, sigma^2)."""
    return -0.5 * (LOG_2PI + 2.0 * np.log(sigma) + (e / sigma) ** 2)


@dataclass(frozen=True)
class StdT:
    """Student-t rescaled to mean 0 and variance 1."""

    nu: float

    def __post_init__(self):
        if not np.isfinite(self.nu) or self.nu <= 4.0:
            raise DomainError(f"StdT needs nu > 4 (finite fourth moment), got {self.nu!r}")

    @property
    def scale(self):
        return float(np.sqrt((self.nu - 2.0) / self.nu))

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        return np.asarray(t_pdf(z / self.scale, self.nu)) / self.scale

    def logpdf(self, z):
        return std_t_loglik(np.asarray(z, dtype=float), 1.0, self.nu)

    def ppf(self, alpha):
        return np.asarray(t_inv(alpha, self.nu)) * self.scale

    def expected_abs(self):
        """E|z| of the standardized variate."""
        nu = self.nu
        log_val = (
            np.log(2.0) + 0.5 * np.log(nu - 2.0) + special.gammaln((nu + 1.0) / 2.0)
            - 0.5 * np.log(np.pi) - np.log(nu - 1.0) - special.gammaln(nu / 2.0)
        )
        return float(np.exp(log_val))

    def sample(self, rng, size):
        return rng.standard_t(self.nu, size=size) * self.scale


@dataclass(frozen=True)
class StdNormal:

    def pdf(self, z):
        return np.exp(self.logpdf(z))

    def logpdf(self, z):
        return normal_loglik(np.asarray(z, dtype=float), 1.0)

    def expected_abs(self):
        return float(np.sqrt(2.0 / np.pi))

    def sample(self, rng, size):
        return rng.standard_normal(size)


# -----------------------------
# Tail functionals of sqrt(h) * StdT(nu)
# -----------------------------
def _check_tail_args(h_next, nu, alpha):
    h_next = _as_float(h_next, "h_next")
    if np.any(h_next <= 0.0):
        raise DomainError(f"h_next must be > 0, got {h_next!r}")
    nu = _check_nu(nu, minimum=4.0)
    alpha = _as_float(alpha, "alpha")
    if np.any((alpha <= 0.0) | (alpha > 0.5)):
        raise DomainError(f"alpha must lie in (0, 0.5], got {alpha!r}")
    return h_next, nu, alpha


def var_quantile(h_next, nu, alpha):
    """One-step-ahead alpha-level VaR (a return level in %, negative for alpha < 0.5)."""
    h_next, nu, alpha = _check_tail_args(h_next, nu, alpha)
    q = np.asarray(t_inv(alpha, nu))
    return _out(np.sqrt(h_next) * q * np.sqrt((nu - 2.0) / nu))


def es_tail(h_next, nu, alpha):
    """One-step-ahead alpha-level Expected Shortfall (conditional tail mean of the return)."""
    h_next, nu, alpha = _check_tail_args(h_next, nu, alpha)
    q = np.asarray(t_inv(alpha, nu))
    g = np.asarray(t_pdf(q, nu))
    es = -np.sqrt(h_next) * (g / alpha) * ((nu + q * q) / (nu - 1.0)) * np.sqrt((nu - 2.0) / nu)
    return _out(es)
