"""
Adaptive block MCMC for the realized models under a flat prior on the
constraint region.

Two stages:
  burn-in  -- random-walk Metropolis per block, proposals from a 3-component
              Gaussian mixture (covariance multipliers 1, 100, 0.01), scales tuned
              toward a dimension-dependent acceptance rate; repeated in epochs whose
              draws re-estimate the block covariances, until the per-parameter
              standard deviations settle (or the epoch cap is hit).
  IMH      -- independent Metropolis-Hastings per block, mixture centred on the
              last epoch's mean with the last epoch's covariance.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import linalg
from scipy.special import logsumexp

import dist
from errors import ConfigurationError, DataError, EstimationError
from model import _filter_log_h, _in_region, forecast_variance, loglik_array, params_class

logger = logging.getLogger("mcmc")

BLOCKS = {
    "rtmg": ((0, 1, 2, 4, 6), (3, 5, 7), (8,)),
    "rg": ((0, 1, 2, 4), (3, 5, 6, 7), (8,)),
}
MIXTURE_MULTIPLIERS = (1.0, 100.0, 0.01)
MIXTURE_WEIGHTS = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
DEFAULT_INIT = 0.25
DEFAULT_INIT_NU = 8.0
INIT_MARGIN = 0.01
COV_JITTER = 1e-10


def as_seed_sequence(seed):
    """Accepts an int, None or an existing SeedSequence (e.g. a spawned child)."""
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def target_rate(d):
    if d < 1:
        raise ConfigurationError(f"block dimension must be >= 1, got {d}")
    if d == 1:
        return 0.44
    if d <= 4:
        return 0.35
    return 0.234


@dataclass(frozen=True)
class McmcSettings:
    epoch_length: int = 20000
    imh_length: int = 10000
    discard: int = 2000
    max_epochs: int = 6
    adapt_every: int = 100
    sd_tolerance: float = 0.10
    scale_bounds: tuple = (1e-4, 1e4)

    def __post_init__(self):
        for name in ("epoch_length", "imh_length", "max_epochs", "adapt_every"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"mcmc.{name} must be positive")
        if not 0 <= self.discard < min(self.epoch_length, self.imh_length) - 1:
            raise ConfigurationError(
                f"mcmc.discard={self.discard} must leave at least 2 draws in each epoch and in the IMH stage"
            )
        if self.sd_tolerance <= 0:
            raise ConfigurationError("mcmc.sd_tolerance must be positive")

    @classmethod
    def from_config(cls, cfg):
        cfg = cfg or {}
        known = {k: cfg[k] for k in ("epoch_length", "imh_length", "discard", "max_epochs", "adapt_every") if k in cfg}
        kwargs = {k: int(v) for k, v in known.items()}
        if "sd_tolerance" in cfg:
            kwargs["sd_tolerance"] = float(cfg["sd_tolerance"])
        return cls(**kwargs)


@dataclass(frozen=True)
class BlockScheme:
    kind: str
    blocks: tuple

    @classmethod
    def for_kind(cls, kind):
        params_class(kind)
        return cls(kind=kind, blocks=BLOCKS[kind])

    @property
    def dimensions(self):
        return tuple(len(b) for b in self.blocks)

    @property
    def targets(self):
        return tuple(target_rate(d) for d in self.dimensions)


def _safe_cholesky(cov):
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    cov = 0.5 * (cov + cov.T)
    try:
        return cov, linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        cov = cov + COV_JITTER * np.eye(len(cov))
        try:
            return cov, linalg.cholesky(cov, lower=True)
        except linalg.LinAlgError:
            # degenerate (e.g. a block that never moved): fall back to its diagonal
            diag = np.clip(np.diag(cov), COV_JITTER, None)
            cov = np.diag(diag)
            return cov, np.diag(np.sqrt(diag))


class BlockProposal:
    """Gaussian mixture sum_k w_k N(centre, scale * C_k * cov) for one parameter block."""

    def __init__(self, cov, mean=None, scale=1.0, multipliers=MIXTURE_MULTIPLIERS, weights=MIXTURE_WEIGHTS):
        self.cov, self._chol = _safe_cholesky(cov)
        self.mean = None if mean is None else np.asarray(mean, dtype=float)
        self.scale = float(scale)
        self.multipliers = tuple(float(c) for c in multipliers)
        self.weights = np.asarray(weights, dtype=float)
        self._cum_weights = np.cumsum(self.weights)
        self._log_weights = np.log(self.weights)
        d = len(self.cov)
        self._log_det = 2.0 * np.sum(np.log(np.diag(self._chol)))
        self._log_norm = -0.5 * d * np.log(2.0 * np.pi)

    @property
    def dimension(self):
        return len(self.cov)

    def draw(self, rng, centre=None):
        centre = self.mean if centre is None else centre
        k = min(int(np.searchsorted(self._cum_weights, rng.random(), side="right")), len(self.weights) - 1)
        step = self._chol @ rng.standard_normal(self.dimension)
        return centre + np.sqrt(self.scale * self.multipliers[k]) * step

    def logpdf(self, x):
        """Mixture log density of a fixed-centre proposal at x."""
        dev = linalg.solve_triangular(self._chol, np.asarray(x, dtype=float) - self.mean, lower=True)
        maha = float(dev @ dev)
        d = self.dimension
        comps = [
            lw + self._log_norm - 0.5 * (self._log_det + d * np.log(self.scale * c)) - 0.5 * maha / (self.scale * c)
            for lw, c in zip(self._log_weights, self.multipliers)
        ]
        return float(logsumexp(comps))


@dataclass
class MixtureProposal:
    """One BlockProposal per parameter block; `mode` is "random-walk" or "fixed"."""

    scheme: BlockScheme
    blocks: list
    mode: str = "random-walk"

    @classmethod
    def initial(cls, scheme):
        blocks = [BlockProposal((2.38 / np.sqrt(d)) * np.eye(d)) for d in scheme.dimensions]
        return cls(scheme=scheme, blocks=blocks, mode="random-walk")

    @classmethod
    def from_draws(cls, scheme, draws, mode):
        blocks = []
        for idx in scheme.blocks:
            sub = draws[:, idx]
            mean = sub.mean(axis=0) if mode == "fixed" else None
            blocks.append(BlockProposal(np.cov(sub, rowvar=False), mean=mean))
        return cls(scheme=scheme, blocks=blocks, mode=mode)


def mh_accept(log_post_current, log_post_proposal, proposal_density_terms, uniform_draw):
    """
    Metropolis-Hastings decision.

    proposal_density_terms = (log q(current | proposal), log q(proposal | current));
    pass (0, 0) for a symmetric random walk.
    """
    if not np.isfinite(log_post_proposal):
        return False
    log_q_current, log_q_proposal = proposal_density_terms
    log_ratio = (log_post_proposal - log_post_current) + (log_q_current - log_q_proposal)
    if log_ratio >= 0.0:
        return True
    return bool(np.log(uniform_draw) < log_ratio)


def project_into_region(kind, theta, margin=INIT_MARGIN):
    """Nearest interior point of the constraint region, moving only offending coordinates."""
    theta = np.array(theta, dtype=float)
    if theta.shape != (9,) or not np.all(np.isfinite(theta)):
        raise ConfigurationError(f"initial values must be 9 finite numbers, got {theta!r}")
    if theta[8] <= 4.0:
        theta[8] = DEFAULT_INIT_NU
    if theta[7] <= 0.0:
        theta[7] = margin
    phis = (theta[4], theta[6]) if kind == "rtmg" else (theta[4],)
    worst = theta[1] + max(theta[2] * phi for phi in phis)
    if worst >= 1.0:
        theta[1] -= worst - 1.0 + margin
    if not _in_region(kind, theta):
        raise ConfigurationError(f"initial values {theta.tolist()} cannot be projected into the constraint region")
    return theta


def initial_state(kind, init=None):
    if init is None:
        theta = np.full(9, DEFAULT_INIT)
        theta[8] = DEFAULT_INIT_NU
    else:
        theta = np.asarray(init.to_array() if hasattr(init, "to_array") else init, dtype=float)
    return project_into_region(kind, theta)


@dataclass
class BurnInResult:
    proposal: MixtureProposal        # fixed-centre proposal for the IMH stage
    epochs: list                     # per-epoch draw matrices
    last_state: np.ndarray
    acceptance: pd.DataFrame
    epoch_sd: pd.DataFrame
    converged: bool

    def __iter__(self):
        return iter((self.proposal, self.epochs))


@dataclass
class PosteriorSample:
    kind: str
    draws: np.ndarray
    discard: int = 0
    acceptance: pd.DataFrame = field(default_factory=pd.DataFrame)
    epoch_sd: pd.DataFrame = field(default_factory=pd.DataFrame)
    converged: bool = True

    @property
    def names(self):
        return params_class(self.kind).names()

    def retained(self, discard=None):
        discard = self.discard if discard is None else int(discard)
        if discard < 0 or discard >= len(self.draws):
            raise DataError(f"discard={discard} leaves no retained draws out of {len(self.draws)}")
        return self.draws[discard:]

    def acceptance_rates(self, stage="imh"):
        rows = self.acceptance[self.acceptance["stage"] == stage]
        if stage == "burn_in":
            rows = rows[rows["epoch"] == rows["epoch"].max()]
        return rows["rate"].to_numpy()

    def to_frame(self):
        frame = pd.DataFrame(self.draws, columns=self.names)
        frame.index.name = "iteration"
        frame.insert(0, "retained", frame.index >= self.discard)
        return frame

    def write_csv(self, out_dir, prefix=""):
        self.to_frame().to_csv(out_dir / f"{prefix}draws.csv")
        self.acceptance.to_csv(out_dir / f"{prefix}acceptance.csv", index=False)
        self.epoch_sd.to_csv(out_dir / f"{prefix}epoch_history.csv")


def _acceptance_rows(stage, epoch, scheme, accepted, proposed):
    return [
        {
            "stage": stage,
            "epoch": epoch,
            "block": b + 1,
            "dimension": d,
            "target": t,
            "accepted": int(a),
            "proposed": int(proposed),
            "rate": float(a) / proposed,
        }
        for b, (d, t, a) in enumerate(zip(scheme.dimensions, scheme.targets, accepted))
    ]


def _run_epoch(kind, series, scheme, proposal, theta, lp, length, settings, rng):
    n_blocks = len(scheme.blocks)
    targets = scheme.targets
    lo, hi = settings.scale_bounds
    draws = np.empty((length, 9))
    accepted = np.zeros(n_blocks, dtype=int)
    batch = np.zeros(n_blocks, dtype=int)
    index = [np.array(b) for b in scheme.blocks]
    for it in range(length):
        for b, idx in enumerate(index):
            block = proposal.blocks[b]
            candidate = theta.copy()
            candidate[idx] = block.draw(rng, theta[idx])
            lp_new = loglik_array(kind, candidate, series)
            if mh_accept(lp, lp_new, (0.0, 0.0), rng.random()):
                theta, lp = candidate, lp_new
                accepted[b] += 1
                batch[b] += 1
        draws[it] = theta
        if (it + 1) % settings.adapt_every == 0:
            for b, block in enumerate(proposal.blocks):
                rate = batch[b] / settings.adapt_every
                block.scale = float(np.clip(block.scale * np.exp(rate - targets[b]), lo, hi))
            batch[:] = 0
    return draws, theta, lp, accepted


def _sd_change(sd, prev_sd):
    ratio = np.divide(np.abs(sd - prev_sd), prev_sd, out=np.full_like(sd, np.inf), where=prev_sd > 0)
    return float(np.mean(ratio))


def run_burn_in(model_kind, series, init=None, seed=None, settings=None):
    """
    Epoch-based adaptive random-walk burn-in.

    Returns a BurnInResult; unpacking it yields (tuned proposal, epoch draws).
    """
    settings = settings or McmcSettings()
    scheme = BlockScheme.for_kind(model_kind)
    rng = np.random.default_rng(seed)
    theta = initial_state(model_kind, init)
    lp = loglik_array(model_kind, theta, series)
    if not np.isfinite(lp):
        raise EstimationError("log-likelihood is not finite at the initial values", {"init": theta.tolist()})

    names = params_class(model_kind).names()
    proposal = MixtureProposal.initial(scheme)
    epochs, rows, sd_history = [], [], []
    converged = False
    for epoch in range(1, settings.max_epochs + 1):
        draws, theta, lp, accepted = _run_epoch(
            model_kind, series, scheme, proposal, theta, lp, settings.epoch_length, settings, rng
        )
        epochs.append(draws)
        rows.extend(_acceptance_rows("burn_in", epoch, scheme, accepted, settings.epoch_length))
        kept = draws[settings.discard:]
        sd = kept.std(axis=0, ddof=1)
        sd_history.append(sd)
        change = _sd_change(sd, sd_history[-2]) if epoch > 1 else np.nan
        logger.info(
            "%s burn-in epoch %d: acceptance %s, sd change %.3f",
            model_kind, epoch, np.round(accepted / settings.epoch_length, 3).tolist(), change,
        )
        if epoch > 1 and change < settings.sd_tolerance:
            converged = True
            break
        # next epoch proposes with this epoch's covariance
        proposal = MixtureProposal.from_draws(scheme, kept, mode="random-walk")

    if not converged:
        logger.warning(
            "%s burn-in hit the epoch cap (%d) before the sd change fell below %.0f%%",
            model_kind, settings.max_epochs, 100 * settings.sd_tolerance,
        )

    epoch_sd = pd.DataFrame(sd_history, columns=names, index=pd.RangeIndex(1, len(sd_history) + 1, name="epoch"))
    tuned = MixtureProposal.from_draws(scheme, epochs[-1][settings.discard:], mode="fixed")
    return BurnInResult(
        proposal=tuned,
        epochs=epochs,
        last_state=theta,
        acceptance=pd.DataFrame(rows),
        epoch_sd=epoch_sd,
        converged=converged,
    )


def run_imh(model_kind, series, tuned, seed=None, settings=None, start=None):
    """Independent Metropolis-Hastings stage; every iteration is kept, the first `discard` flagged."""
    settings = settings or McmcSettings()
    if tuned.mode != "fixed":
        raise ConfigurationError("IMH needs a fixed-centre proposal (run_burn_in provides one)")
    scheme = tuned.scheme
    rng = np.random.default_rng(seed)
    index = [np.array(b) for b in scheme.blocks]
    if start is None:
        theta = np.empty(9)
        for idx, block in zip(index, tuned.blocks):
            theta[idx] = block.mean
    else:
        theta = np.array(start, dtype=float)
    lp = loglik_array(model_kind, theta, series)
    if not np.isfinite(lp):
        raise EstimationError("IMH start lies outside the constraint region", {"start": theta.tolist()})

    log_q = [block.logpdf(theta[idx]) for idx, block in zip(index, tuned.blocks)]
    draws = np.empty((settings.imh_length, 9))
    accepted = np.zeros(len(index), dtype=int)
    for it in range(settings.imh_length):
        for b, (idx, block) in enumerate(zip(index, tuned.blocks)):
            candidate = theta.copy()
            candidate[idx] = block.draw(rng)
            lq_new = block.logpdf(candidate[idx])
            lp_new = loglik_array(model_kind, candidate, series)
            if mh_accept(lp, lp_new, (log_q[b], lq_new), rng.random()):
                theta, lp, log_q[b] = candidate, lp_new, lq_new
                accepted[b] += 1
        draws[it] = theta

    rows = _acceptance_rows("imh", 0, scheme, accepted, settings.imh_length)
    logger.info("%s IMH acceptance %s", model_kind, np.round(accepted / settings.imh_length, 3).tolist())
    return PosteriorSample(kind=model_kind, draws=draws, discard=settings.discard, acceptance=pd.DataFrame(rows))


def run_mcmc(model_kind, series, init=None, seed=None, settings=None):
    """Burn-in followed by IMH; the two stages get independent child streams of `seed`."""
    settings = settings or McmcSettings()
    burn_seed, imh_seed = as_seed_sequence(seed).spawn(2)
    burn = run_burn_in(model_kind, series, init=init, seed=burn_seed, settings=settings)
    sample = run_imh(model_kind, series, burn.proposal, seed=imh_seed, settings=settings, start=burn.last_state)
    sample.acceptance = pd.concat([burn.acceptance, sample.acceptance], ignore_index=True)
    sample.epoch_sd = burn.epoch_sd
    sample.converged = burn.converged
    return sample


def posterior_mean(sample, discard=None):
    draws = sample.retained(discard)
    return params_class(sample.kind).from_array(draws.mean(axis=0))


def _thin(draws, max_draws):
    if max_draws is None or len(draws) <= max_draws:
        return draws
    pick = np.linspace(0, len(draws) - 1, int(max_draws)).round().astype(int)
    return draws[pick]


def posterior_h_next(sample, series, discard=None, max_draws=None):
    """h_{n+1} under every retained draw, with the matching nu values."""
    draws = _thin(sample.retained(discard), max_draws)
    log_x = series.log_x
    y1 = series.log_h1
    h_next = np.empty(len(draws))
    for j, theta in enumerate(draws):
        log_h = _filter_log_h(theta[0], theta[1], theta[2], log_x, y1)
        h_next[j] = np.exp(theta[0] + theta[1] * log_h[-1] + theta[2] * log_x[-1])
    return h_next, draws[:, 8]


def posterior_risk_forecast(sample, series, alphas=(0.01, 0.025), discard=None, max_draws=None):
    """Posterior mean of the one-step-ahead (VaR, ES) over retained draws, per alpha."""
    h_next, nu = posterior_h_next(sample, series, discard, max_draws)
    return {
        float(a): (float(np.mean(dist.var_quantile(h_next, nu, a))), float(np.mean(dist.es_tail(h_next, nu, a))))
        for a in alphas
    }


def plugin_risk_forecast(params, series, alphas=(0.01, 0.025)):
    """(VaR, ES) evaluated at a single parameter vector, e.g. the posterior mean."""
    h_next = forecast_variance(params, series)
    return {float(a): (dist.var_quantile(h_next, params.nu, a), dist.es_tail(h_next, params.nu, a)) for a in alphas}
