"""
Synthetic data from the threshold realized model and the replication study that
checks how well the sampler recovers its parameters and tail forecasts.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

import dist
from errors import ConfigurationError, StudyError
from mcmc import McmcSettings, posterior_mean, posterior_risk_forecast, run_mcmc
from model import DEFAULT_RTMG, JointSeries, ParamsRTMG, persistence, regime
from study_service import StudyService

logger = logging.getLogger("sim")

ALPHAS = (0.01, 0.025)
MAX_FAILURE_SHARE = 0.05
START_DATE = "2000-01-03"


@dataclass(frozen=True)
class SimConfig:
    params: ParamsRTMG = DEFAULT_RTMG
    n: int = 1900
    replications: int = 100
    seed: int = 20240101
    burn_in: int = 1000
    settings: McmcSettings = field(default_factory=McmcSettings)
    alphas: tuple = ALPHAS
    max_draws: int | None = None
    workers: int = 1

    def __post_init__(self):
        if self.n < 100:
            raise ConfigurationError(f"simulation.n must be >= 100, got {self.n}")
        if self.replications < 1:
            raise ConfigurationError(f"simulation.replications must be >= 1, got {self.replications}")
        if self.burn_in < 0:
            raise ConfigurationError("simulation.burn_in must be >= 0")
        if max(persistence(self.params)) >= 1.0 or self.params.sigma_eps <= 0.0 or self.params.nu <= 4.0:
            raise ConfigurationError(f"simulation parameters are not admissible: {self.params}")


@dataclass(frozen=True, eq=False)
class SimulatedPath:
    series: JointSeries
    h: np.ndarray
    h_next: float
    regimes: np.ndarray


def _sim_dates(n):
    """Business days from START_DATE; integer labels once the calendar would run past pandas' last Timestamp."""
    try:
        return pd.bdate_range(START_DATE, periods=n)
    except (OverflowError, pd.errors.OutOfBoundsDatetime):
        logger.debug("%d simulated days exceed the calendar; labelling them 0..n-1", n)
        return pd.RangeIndex(n)


def simulate_rtmg(params: ParamsRTMG, n, seed=None, burn_in=1000):
    """
    Draw n days from the threshold realized model after `burn_in` warm-up steps.

    log h starts at omega / (1 - beta - gamma * mean(phi)); h_next is the DGP's own
    one-step-ahead variance from the final (h_n, x_n).
    """
    if n < 2:
        raise ConfigurationError(f"n must be >= 2, got {n}")
    if max(persistence(params)) >= 1.0:
        raise ConfigurationError(f"persistence {persistence(params)} is not below 1")
    if params.sigma_eps < 0.0:
        raise ConfigurationError("sigma_eps must be >= 0")

    rng = np.random.default_rng(seed)
    total = int(burn_in) + int(n)
    z = dist.StdT(params.nu).sample(rng, total)
    eps = dist.StdNormal().sample(rng, total)

    omega, beta, gamma = params.omega, params.beta, params.gamma
    log_h = np.empty(total)
    log_x = np.empty(total)
    r = np.empty(total)
    regimes = np.empty(total, dtype=np.int8)

    log_h[0] = omega / (1.0 - beta - gamma * 0.5 * (params.phi1 + params.phi2))
    for t in range(total):
        if t > 0:
            log_h[t] = omega + beta * log_h[t - 1] + gamma * log_x[t - 1]
        r[t] = np.exp(0.5 * log_h[t]) * z[t]
        k = 1 if t == 0 else regime(r[t - 1])
        xi, phi = (params.xi1, params.phi1) if k == 1 else (params.xi2, params.phi2)
        log_x[t] = xi + phi * log_h[t] + params.sigma_eps * eps[t]
        regimes[t] = k

    keep = slice(total - n, total)
    series = JointSeries(dates=_sim_dates(n), r=r[keep], x=np.exp(log_x[keep]))
    h_next = float(np.exp(omega + beta * log_h[-1] + gamma * log_x[-1]))
    return SimulatedPath(series=series, h=np.exp(log_h[keep]), h_next=h_next, regimes=regimes[keep])


def true_var_es(h_next, nu, alpha):
    return dist.var_quantile(h_next, nu, alpha), dist.es_tail(h_next, nu, alpha)


# -----------------------------
# Replication study
# -----------------------------
def _risk_labels(alphas):
    labels = []
    for measure in ("VaR", "ES"):
        labels.extend((f"{100 * a:g}% {measure}", measure.lower(), float(a)) for a in alphas)
    return labels


def record_columns(alphas=ALPHAS):
    cols = ["replication", *ParamsRTMG.names(), "h_next"]
    for _, measure, a in _risk_labels(alphas):
        cols.extend([f"{measure}_{a:g}", f"true_{measure}_{a:g}"])
    return cols


def _replication_job(payload):
    index, config, seed_seq = payload
    data_seed, chain_seed = seed_seq.spawn(2)
    path = simulate_rtmg(config.params, config.n, seed=data_seed, burn_in=config.burn_in)
    sample = run_mcmc("rtmg", path.series, seed=chain_seed, settings=config.settings)
    estimate = posterior_mean(sample)
    forecast = posterior_risk_forecast(sample, path.series, config.alphas, max_draws=config.max_draws)

    record = {"replication": index, **estimate.as_dict(), "h_next": path.h_next}
    for a in config.alphas:
        var, es = forecast[float(a)]
        true_var, true_es = true_var_es(path.h_next, config.params.nu, a)
        record.update({f"var_{a:g}": var, f"true_var_{a:g}": true_var, f"es_{a:g}": es, f"true_es_{a:g}": true_es})
    return record


@dataclass
class ReplicationSummary:
    """Rows: the nine parameters then the VaR/ES forecasts; columns True, Mean, RMSE."""

    table: pd.DataFrame
    records: pd.DataFrame
    failures: dict = field(default_factory=dict)

    def to_csv(self, path):
        self.table.to_csv(path, index_label="measure", float_format="%.6f")

    def to_text(self):
        width = max(len(str(i)) for i in self.table.index) + 2
        lines = [" " * width + "".join(f"{c:>10}" for c in self.table.columns)]
        for label, row in self.table.iterrows():
            lines.append(f"{label:<{width}}" + "".join(f"{v:>10.4f}" for v in row))
        return "\n".join(lines) + "\n"


def summarize(records: pd.DataFrame, true_params: ParamsRTMG, alphas=ALPHAS):
    """Mean and RMSE against truth; risk measures compare each forecast with its own replication's truth."""
    rows = {}
    for name, true in true_params.as_dict().items():
        est = records[name].to_numpy(dtype=float)
        rows[name] = (true, est.mean(), np.sqrt(np.mean((est - true) ** 2)))
    for label, measure, a in _risk_labels(alphas):
        est = records[f"{measure}_{a:g}"].to_numpy(dtype=float)
        true = records[f"true_{measure}_{a:g}"].to_numpy(dtype=float)
        rows[label] = (true.mean(), est.mean(), np.sqrt(np.mean((est - true) ** 2)))
    return pd.DataFrame.from_dict(rows, orient="index", columns=["True", "Mean", "RMSE"])


def replication_study(config: SimConfig, out_dir=None):
    """
    Simulate, estimate and forecast `config.replications` times.

    Each replication owns a child of SeedSequence(config.seed). Failed replications are
    excluded with a warning while they stay under 5% of the study; beyond that the
    study fails.
    """
    seeds = np.random.SeedSequence(config.seed).spawn(config.replications)
    payloads = [(i, config, s) for i, s in enumerate(seeds)]
    columns = record_columns(config.alphas)

    with StudyService(
        _replication_job,
        workers=config.workers,
        out_dir=out_dir,
        name="replications",
        header=columns,
        row_fn=lambda rec: [rec[c] for c in columns],
        logger=logger,
    ) as service:
        results, failures = service.run(payloads)

    if failures:
        share = len(failures) / config.replications
        if share >= MAX_FAILURE_SHARE:
            raise StudyError(f"{len(failures)} of {config.replications} replications failed: {failures}")
        logger.warning("excluding %d failed replication(s): %s", len(failures), sorted(failures))

    records = pd.DataFrame([results[i] for i in sorted(results)], columns=columns)
    table = summarize(records, config.params, config.alphas)
    return ReplicationSummary(table=table, records=records, failures=failures)
