"""
Rolling one-step-ahead VaR/ES forecasts for every model, the quantile and
asymmetric-Laplace joint losses that score them, and the avg-loss / avg-rank
tournament across series.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import linalg

import benchmark
from errors import DataError, DomainError, RealizedGarchError, ReportError
from mcmc import McmcSettings, as_seed_sequence, posterior_mean, posterior_risk_forecast, run_mcmc
from model import persistence

logger = logging.getLogger("risk")

ALPHAS = (0.01, 0.025)
REALIZED_MODELS = ("rtmg", "rg")
BENCHMARK_MODELS = ("egarch-t", "gjr-t", "egarch-t-hs", "gjr-t-hs")
MODEL_IDS = REALIZED_MODELS + BENCHMARK_MODELS
FORECAST_COLUMNS = ["origin_index", "date", "alpha", "var", "es", "model"]

_FITTERS = {"gjr-t": benchmark.fit_gjr_t, "egarch-t": benchmark.fit_egarch_t}
_FILTERS = {"gjr-t": benchmark.gjr_filter, "egarch-t": benchmark.egarch_filter}


@dataclass(frozen=True)
class RiskForecast:
    origin_index: int       # position of the forecast day in the full series
    date: object
    alpha: float
    var: float
    es: float
    model: str


@dataclass
class ForecastRun:
    model: str
    forecasts: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    params_path: pd.DataFrame = field(default_factory=pd.DataFrame)

    def __iter__(self):
        return iter(self.forecasts)

    def __len__(self):
        return len(self.forecasts)

    def to_frame(self):
        return pd.DataFrame(
            [(f.origin_index, f.date, f.alpha, f.var, f.es, f.model) for f in self.forecasts],
            columns=FORECAST_COLUMNS,
        )


def check_model_id(model_id):
    if model_id not in MODEL_IDS:
        raise DataError(f"unknown model id {model_id!r}; expected one of {list(MODEL_IDS)}")
    return model_id


# -----------------------------
# Estimation / forecasting per model family
# -----------------------------
def _estimate(model_id, window, seed, settings):
    """Returns (fitted object, parameter row for the path file)."""
    if model_id in REALIZED_MODELS:
        sample = run_mcmc(model_id, window, seed=seed, settings=settings)
        mean = posterior_mean(sample)
        row = mean.as_dict()
        if model_id == "rtmg":
            row["persistence_1"], row["persistence_2"] = persistence(mean)
        return sample, row

    family = model_id.removesuffix("-hs")
    fit = _FITTERS[family](window.r, seed=int(seed.generate_state(1)[0]))
    return fit.params, dict(zip(fit.params.names(), fit.params.to_array().tolist()))


def _forecast(model_id, fitted, window, alphas, max_draws):
    if model_id in REALIZED_MODELS:
        return posterior_risk_forecast(fitted, window, alphas, max_draws=max_draws)

    family = model_id.removesuffix("-hs")
    h, h_next = _FILTERS[family](fitted, window.r)
    if model_id.endswith("-hs"):
        return {float(a): benchmark.hs_var_es(window.r, h, h_next, a) for a in alphas}
    return {float(a): benchmark.parametric_var_es(fitted, h_next, a) for a in alphas}


def rolling_forecast(
    model_id,
    series,
    n,
    m,
    stride=1,
    seed=None,
    alphas=ALPHAS,
    settings: McmcSettings | None = None,
    max_draws=None,
):
    """
    Forecast days n..n+m-1 (0-based) from the trailing n observations.

    Parameters are re-estimated every `stride` days and reused in between, while
    the variance is re-filtered every day on the latest window. A failed
    estimation leaves its days as gaps.
    """
    check_model_id(model_id)
    n, m, stride = int(n), int(m), int(stride)
    if stride < 1 or m < 1 or n < 2:
        raise DataError(f"need n >= 2, m >= 1 and stride >= 1, got n={n}, m={m}, stride={stride}")
    if n + m > len(series):
        raise DataError(f"n + m = {n + m} exceeds the series length {len(series)}")

    settings = settings or McmcSettings()
    estimations = -(-m // stride)
    seeds = iter(as_seed_sequence(seed).spawn(estimations))
    run = ForecastRun(model=model_id)
    path_rows = []
    fitted = None

    for k in range(m):
        target = n + k
        window = series.window(k, target)
        if k % stride == 0:
            try:
                fitted, row = _estimate(model_id, window, next(seeds), settings)
                path_rows.append({"origin_index": target, "date": series.dates[target], **row})
            except (RealizedGarchError, linalg.LinAlgError) as exc:
                fitted = None
                logger.warning("%s estimation at origin %d failed: %s", model_id, target, exc)
        if fitted is None:
            run.gaps.append(target)
            continue
        try:
            forecast = _forecast(model_id, fitted, window, alphas, max_draws)
        except RealizedGarchError as exc:
            logger.warning("%s forecast at origin %d failed: %s", model_id, target, exc)
            run.gaps.append(target)
            continue
        for a in alphas:
            var, es = forecast[float(a)]
            run.forecasts.append(RiskForecast(target, series.dates[target], float(a), float(var), float(es), model_id))
        logger.debug("%s origin %d done", model_id, target)

    if run.gaps:
        logger.warning("%s: %d of %d forecast days are gaps", model_id, len(run.gaps), m)
    run.params_path = pd.DataFrame(path_rows)
    return run


# -----------------------------
# Losses
# -----------------------------
def _aligned(*arrays):
    out = [np.asarray(a, dtype=float) for a in arrays]
    if len({a.shape for a in out}) != 1:
        raise DataError(f"loss inputs must have equal lengths, got {[a.shape for a in out]}")
    return out


def quantile_loss_series(r, q, alpha):
    """(alpha - I[r < q]) (r - q) per day; never negative."""
    r, q = _aligned(r, q)
    return (alpha - (r < q)) * (r - q)


def quantile_loss(r, q, alpha):
    return float(np.sum(quantile_loss_series(r, q, alpha)))


def al_joint_loss_series(r, q, es, alpha):
    """Asymmetric-Laplace log score of a (VaR, ES) pair per day."""
    r, q, es = _aligned(r, q, es)
    if np.any(es >= 0.0):
        bad = np.flatnonzero(es >= 0.0)
        raise DomainError(f"ES must be negative; offending positions {bad[:10].tolist()}")
    hit = r < q
    return -np.log((alpha - 1.0) / es) - (r - q) * (alpha - hit) / (alpha * es)


def al_joint_loss(r, q, es, alpha):
    return float(np.sum(al_joint_loss_series(r, q, es, alpha)))


# -----------------------------
# Tournament
# -----------------------------
def _flags(values):
    order = values.rank(method="min")
    return order == 1, order == 2


@dataclass
class BacktestReport:
    """Per-series losses (models x series) with their ranks, Avg Loss and Avg Rank."""

    losses: pd.DataFrame
    ranks: pd.DataFrame
    title: str = ""

    @property
    def avg_loss(self):
        return self.losses.mean(axis=1)

    @property
    def avg_rank(self):
        return self.ranks.mean(axis=1)

    def to_frame(self):
        frame = self.losses.copy()
        frame["Avg Loss"] = self.avg_loss
        frame["Avg Rank"] = self.avg_rank
        frame["best_loss"], frame["second_loss"] = _flags(self.avg_loss)
        frame["best_rank"], frame["second_rank"] = _flags(self.avg_rank)
        frame.index.name = "model"
        return frame

    def to_csv(self, path):
        self.to_frame().to_csv(path)

    def to_text(self):
        frame = self.to_frame()
        cols = [*(str(c) for c in self.losses.columns), "Avg Loss", "Avg Rank"]
        cells = {}
        for model, row in frame.iterrows():
            cells[model] = [f"{row[c]:.4f}" for c in self.losses.columns]
            for col, best, second, fmt in (("Avg Loss", "best_loss", "second_loss", "{:.4f}"),
                                           ("Avg Rank", "best_rank", "second_rank", "{:.2f}")):
                value = fmt.format(row[col])
                cells[model].append(f"[{value}]" if row[best] else f"({value})" if row[second] else value)

        width = max(len(c) for c in [*cols, *(v for vs in cells.values() for v in vs)]) + 2
        label_width = max(len(str(m)) for m in frame.index) + 2
        lines = [self.title] if self.title else []
        lines.append(" " * label_width + "".join(f"{c:>{width}}" for c in cols))
        for model, values in cells.items():
            lines.append(f"{model:<{label_width}}" + "".join(f"{v:>{width}}" for v in values))
        return "\n".join(lines) + "\n"


def tournament(losses: pd.DataFrame, title=""):
    """
    Rank models within each series (1 = smallest loss, ties share the mean rank).

    `losses` is indexed by model with one column per series.
    """
    if losses.shape[0] < 2 or losses.shape[1] < 1:
        raise ReportError(f"a tournament needs >= 2 models and >= 1 series, got shape {losses.shape}")
    losses = losses.astype(float)
    missing = losses.isna()
    if missing.to_numpy().any():
        named = [(losses.index[i], losses.columns[j]) for i, j in zip(*np.nonzero(missing.to_numpy()))]
        raise ReportError(f"missing loss cells (model, series): {named}")
    ranks = losses.rank(axis=0, method="average")
    return BacktestReport(losses=losses, ranks=ranks, title=title)
