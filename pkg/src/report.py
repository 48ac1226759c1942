import logging
from pathlib import Path

import numpy as np
import pandas as pd

from errors import ReportError
from risk import FORECAST_COLUMNS, al_joint_loss_series, quantile_loss_series, tournament
from utils import ensure_dir

logger = logging.getLogger("report")

FORECAST_PREFIX = "forecasts_"


def forecast_path(out_dir: Path, series: str, model: str):
    return Path(out_dir) / series / f"{FORECAST_PREFIX}{model}.csv"


def write_forecasts(run, path: Path):
    ensure_dir(path.parent)
    frame = run.to_frame()
    if pd.api.types.is_datetime64_any_dtype(frame["date"]):
        frame["date"] = frame["date"].dt.strftime("%Y-%m-%d")
    frame.to_csv(path, index=False, lineterminator="\n")
    if not run.params_path.empty:
        params = run.params_path.copy()
        if pd.api.types.is_datetime64_any_dtype(params["date"]):
            params["date"] = params["date"].dt.strftime("%Y-%m-%d")
        params.to_csv(path.parent / f"params_{run.model}.csv", index=False, lineterminator="\n")
    return path


def list_candidates(out_dir: Path):
    """
    List persisted forecast files `<out>/<series>/forecasts_<model>.csv`.
    """
    files = sorted(Path(out_dir).glob(f"*/{FORECAST_PREFIX}*.csv"))
    logger.info("Found %d forecast files in %s", len(files), out_dir)
    return files


def load_forecasts(path: Path):
    frame = pd.read_csv(path, float_precision="round_trip")
    if list(frame.columns) != FORECAST_COLUMNS:
        raise ReportError(f"{path}: expected columns {FORECAST_COLUMNS}, got {list(frame.columns)}")
    return frame


def _alpha_rows(frame, alpha):
    rows = frame[np.isclose(frame["alpha"].to_numpy(dtype=float), alpha, rtol=0.0, atol=1e-12)]
    return rows.set_index("origin_index").sort_index()


def loss_tables(out_dir: Path, series_by_name: dict, alphas):
    """
    Recompute quantile and joint losses from persisted forecasts.

    Within a series every model is scored on the forecast days all models share,
    so forecast gaps do not bias the comparison. Returns
    ({alpha: {"quantile": models x series, "joint": models x series}}, {alpha: {series: per-day joint loss}}).
    """
    forecasts = {}
    for path in list_candidates(out_dir):
        series, model = path.parent.name, path.stem[len(FORECAST_PREFIX):]
        if series not in series_by_name:
            logger.warning("Skip %s (no --data file named %s)", path, series)
            continue
        forecasts.setdefault(series, {})[model] = load_forecasts(path)
    if not forecasts:
        raise ReportError(f"no forecast files for the given data under {out_dir}")

    tables, paths = {}, {}
    for alpha in alphas:
        quantile, joint, daily = {}, {}, {}
        for series, by_model in sorted(forecasts.items()):
            r = series_by_name[series].r
            rows = {m: _alpha_rows(f, alpha) for m, f in sorted(by_model.items())}
            common = sorted(set.intersection(*(set(v.index) for v in rows.values())))
            if not common:
                raise ReportError(f"{series}: no forecast days at alpha={alpha:g} shared by all models")
            dropped = max(len(v) for v in rows.values()) - len(common)
            if dropped:
                logger.warning("%s alpha=%g: scoring %d shared days (%d dropped to gaps)", series, alpha, len(common), dropped)
            per_day = {}
            for model, v in rows.items():
                v = v.loc[common]
                realized = r[np.asarray(common)]
                q_loss = quantile_loss_series(realized, v["var"], alpha)
                j_loss = al_joint_loss_series(realized, v["var"], v["es"], alpha)
                quantile.setdefault(model, {})[series] = float(q_loss.sum())
                joint.setdefault(model, {})[series] = float(j_loss.sum())
                per_day[model] = j_loss
            daily[series] = pd.DataFrame(per_day, index=pd.Index(common, name="origin_index"))
            daily[series].insert(0, "date", rows[next(iter(rows))].loc[common, "date"].to_numpy())
        tables[alpha] = {
            "quantile": pd.DataFrame(quantile).T.sort_index(),
            "joint": pd.DataFrame(joint).T.sort_index(),
        }
        paths[alpha] = daily
    return tables, paths


def write_reports(out_dir: Path, series_by_name: dict, alphas):
    """Tournament tables (CSV + aligned text) per loss and alpha, plus per-day joint-loss paths."""
    out_dir = ensure_dir(Path(out_dir))
    tables, paths = loss_tables(out_dir, series_by_name, alphas)
    written = []
    for alpha, by_loss in tables.items():
        for loss, frame in by_loss.items():
            label = "Quantile loss" if loss == "quantile" else "AL joint loss"
            result = tournament(frame, title=f"{label}, alpha={alpha:g}")
            stem = f"{loss}_loss_{alpha:g}"
            csv_path, txt_path = out_dir / f"{stem}.csv", out_dir / f"{stem}.txt"
            result.to_csv(csv_path)
            txt_path.write_text(result.to_text(), encoding="utf-8")
            written += [csv_path, txt_path]
            logger.info("%s: best avg loss %s", stem, result.avg_loss.idxmin())
        for series, frame in paths[alpha].items():
            target = out_dir / series / f"joint_loss_path_{alpha:g}.csv"
            frame.to_csv(target, lineterminator="\n")
            written.append(target)
    return written
