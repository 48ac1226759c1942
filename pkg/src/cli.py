import os
import sys
import logging
import argparse
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

import benchmark
import data_io
import report
import risk
from errors import ConfigurationError, RealizedGarchError
from mcmc import McmcSettings, posterior_mean, run_mcmc
from model import DEFAULT_RTMG, ParamsRTMG, measurement_residuals
from provenance import RunManifest
from sim import SimConfig, replication_study, simulate_rtmg
from study_service import StudyService
from utils import apply_overrides, dump_config, ensure_dir, load_config, setup_logger
from version import __version__

# -----------------------------
# Configuration path
# -----------------------------
CONFIG_PATH = os.environ.get("RTMG_CONFIG", str(Path(__file__).resolve().parent.parent / "config.yaml"))
COMMANDS = ("simulate", "estimate", "forecast", "backtest", "report")
DATA_COMMANDS = ("estimate", "forecast", "backtest", "report")

logger = logging.getLogger("cli")


# -----------------------------
# Resolved run configuration
# -----------------------------
@dataclass(frozen=True)
class RunConfig:
    command: str
    models: tuple = ("rtmg",)
    data: tuple = ()
    n: int = 1000
    m: int = 400
    stride: int = 1
    alphas: tuple = (0.01, 0.025)
    mcmc: McmcSettings = field(default_factory=McmcSettings)
    forecast_draws: int | None = None
    seed: int = 20240101
    output_dir: Path = Path("results")
    replications: int = 100
    sim_n: int = 1900
    burn_in: int = 1000
    sim_params: ParamsRTMG = DEFAULT_RTMG
    workers: int = 1
    log_level: str = "INFO"
    logfile: str | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigurationError(f"unknown command {self.command!r}")
        for model in self.models:
            if model not in risk.MODEL_IDS:
                raise ConfigurationError(f"unknown model {model!r}; expected one of {list(risk.MODEL_IDS)}")
        if not self.models:
            raise ConfigurationError("at least one model is required")
        for name in ("n", "m", "stride", "replications", "sim_n", "workers"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.forecast_draws is not None and self.forecast_draws < 1:
            raise ConfigurationError("mcmc.forecast_draws must be positive")
        if not self.alphas or any(not 0.0 < a < 0.5 for a in self.alphas):
            raise ConfigurationError(f"alphas must lie in (0, 0.5), got {list(self.alphas)}")
        if self.command in DATA_COMMANDS:
            if not self.data:
                raise ConfigurationError(f"{self.command} needs at least one --data file")
            missing = [str(p) for p in self.data if not Path(p).is_file()]
            if missing:
                raise ConfigurationError(f"data file(s) not found: {missing}")
            names = [data_io.series_name(p) for p in self.data]
            if len(set(names)) != len(names):
                raise ConfigurationError(f"data file names must be distinct, got {names}")

    @classmethod
    def from_config(cls, command, cfg):
        rolling = cfg.get("rolling") or {}
        mcmc_cfg = cfg.get("mcmc") or {}
        sim_cfg = cfg.get("simulation") or {}
        log_cfg = cfg.get("logging") or {}
        models = cfg.get("models") or ["rtmg"]
        if isinstance(models, str):
            models = [models]
        try:
            params = DEFAULT_RTMG
            if sim_cfg.get("params"):
                params = ParamsRTMG(**{**DEFAULT_RTMG.as_dict(), **{k: float(v) for k, v in sim_cfg["params"].items()}})
            draws = mcmc_cfg.get("forecast_draws")
            return cls(
                command=command,
                models=tuple(models),
                data=tuple(Path(p) for p in (cfg.get("data") or [])),
                n=int(rolling.get("n", 1000)),
                m=int(rolling.get("m", 400)),
                stride=int(rolling.get("stride", 1)),
                alphas=tuple(float(a) for a in (cfg.get("alphas") or (0.01, 0.025))),
                mcmc=McmcSettings.from_config(mcmc_cfg),
                forecast_draws=int(draws) if draws not in (None, "") else None,
                seed=int(cfg.get("seed", 20240101)),
                output_dir=Path(cfg.get("output_dir") or "results"),
                replications=int(sim_cfg.get("replications", 100)),
                sim_n=int(sim_cfg.get("n", 1900)),
                burn_in=int(sim_cfg.get("burn_in", 1000)),
                sim_params=params,
                workers=int(cfg.get("workers", 1)),
                log_level=str(log_cfg.get("level") or "INFO").upper(),
                logfile=log_cfg.get("logfile") or None,
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, RealizedGarchError):
                raise
            raise ConfigurationError(f"invalid configuration value: {exc}") from exc

    def as_dict(self):
        out = asdict(self)
        out["models"] = list(self.models)
        out["data"] = [str(p) for p in self.data]
        out["alphas"] = list(self.alphas)
        out["mcmc"] = {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.mcmc).items()}
        out["output_dir"] = str(self.output_dir)
        out["sim_params"] = self.sim_params.as_dict()
        return out


# -----------------------------
# Argument parsing
# -----------------------------
def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file (default: $RTMG_CONFIG or config.yaml)")
    common.add_argument("--model", action="append", choices=risk.MODEL_IDS, help="model id; repeat for several")
    common.add_argument("--data", action="append", help="joint CSV (date, close|return, rv); repeat for several")
    common.add_argument("--n", type=int, help="in-sample size (simulate: series length)")
    common.add_argument("--m", type=int, help="out-of-sample size")
    common.add_argument("--stride", type=int, help="re-estimate every STRIDE forecast days")
    common.add_argument("--alpha", action="append", type=float, help="tail level; repeat for several")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--replications", type=int)
    common.add_argument("--workers", type=int, help="parallel worker processes")

    ap = argparse.ArgumentParser(prog="rtmg", description="Realized threshold GARCH estimation and tail-risk backtests")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate series and run the replication study")
    sub.add_parser("estimate", parents=[common], help="estimate models on each data file")
    sub.add_parser("forecast", parents=[common], help="rolling one-step-ahead VaR/ES forecasts")
    sub.add_parser("backtest", parents=[common], help="forecast, then score and rank the models")
    sub.add_parser("report", parents=[common], help="score persisted forecasts and write loss tables")
    return ap


def _overrides(args):
    return {
        "models": args.model,
        "data": args.data,
        "rolling.n": args.n if args.command != "simulate" else None,
        "simulation.n": args.n if args.command == "simulate" else None,
        "rolling.m": args.m,
        "rolling.stride": args.stride,
        "alphas": args.alpha,
        "seed": args.seed,
        "output_dir": args.out,
        "simulation.replications": args.replications,
        "workers": args.workers,
    }


def resolve_config(args):
    path = args.config or CONFIG_PATH
    if Path(path).is_file():
        cfg = load_config(path)
    elif args.config:
        raise ConfigurationError(f"config file not found: {path}")
    else:
        cfg = {}
    if not isinstance(cfg, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return RunConfig.from_config(args.command, apply_overrides(cfg, _overrides(args)))


# -----------------------------
# Commands
# -----------------------------
def cmd_simulate(rc: RunConfig):
    out = ensure_dir(rc.output_dir)
    path = simulate_rtmg(rc.sim_params, rc.sim_n, seed=rc.seed, burn_in=rc.burn_in)
    written = [data_io.save_joint_csv(path.series, out / "simulated.csv")]

    config = SimConfig(
        params=rc.sim_params,
        n=rc.sim_n,
        replications=rc.replications,
        seed=rc.seed,
        burn_in=rc.burn_in,
        settings=rc.mcmc,
        alphas=rc.alphas,
        max_draws=rc.forecast_draws,
        workers=rc.workers,
    )
    summary = replication_study(config, out_dir=out)
    summary.to_csv(out / "summary.csv")
    (out / "summary.txt").write_text(summary.to_text(), encoding="utf-8")
    written += [out / "replications.csv", out / "summary.csv", out / "summary.txt"]
    logger.info("Replication summary:\n%s", summary.to_text())
    return written, 0


def _estimate_one(model, series, seed, rc, out):
    if model in risk.REALIZED_MODELS:
        sample = run_mcmc(model, series, seed=seed, settings=rc.mcmc)
        sample.write_csv(out, prefix=f"{model}_")
        retained = sample.retained()
        mean = posterior_mean(sample)
        resid = measurement_residuals(mean, series)
        frame = pd.DataFrame({"mean": retained.mean(axis=0), "sd": retained.std(axis=0, ddof=1)}, index=sample.names)
        frame.loc["residual_sd"] = (float(np.std(resid, ddof=1)), np.nan)
        frame.index.name = "parameter"
        if not sample.converged:
            logger.warning("%s burn-in did not settle; see %s_epoch_history.csv", model, model)
        names = [f"{model}_draws.csv", f"{model}_acceptance.csv", f"{model}_epoch_history.csv"]
    else:
        fitter = benchmark.fit_gjr_t if model.startswith("gjr") else benchmark.fit_egarch_t
        fit = fitter(series.r, seed=int(seed.generate_state(1)[0]))
        frame = pd.DataFrame({"estimate": fit.params.to_array()}, index=list(fit.params.names()))
        frame.loc["loglik"] = fit.loglik
        frame.index.name = "parameter"
        names = []
    frame.to_csv(out / f"{model}_estimates.csv")
    return [out / name for name in names + [f"{model}_estimates.csv"]]


def cmd_estimate(rc: RunConfig):
    written = []
    # -hs variants share their parent's MLE
    models = list(dict.fromkeys(m.removesuffix("-hs") for m in rc.models))
    for i, path in enumerate(rc.data):
        series = data_io.load_joint_csv(path)
        out = ensure_dir(rc.output_dir / data_io.series_name(path))
        for model in models:
            seed = np.random.SeedSequence(rc.seed, spawn_key=(i, risk.MODEL_IDS.index(model)))
            logger.info("Estimating %s on %s (%d observations)", model, path, len(series))
            written += _estimate_one(model, series, seed, rc, out)
    return written, 0


def _forecast_job(payload):
    index, model, data_path, rc, seed = payload
    series = data_io.load_joint_csv(data_path)
    run = risk.rolling_forecast(
        model, series, rc.n, rc.m, stride=rc.stride, seed=seed,
        alphas=rc.alphas, settings=rc.mcmc, max_draws=rc.forecast_draws,
    )
    target = report.forecast_path(rc.output_dir, data_io.series_name(data_path), model)
    report.write_forecasts(run, target)
    return {"index": index, "model": model, "series": data_io.series_name(data_path), "path": str(target),
            "forecasts": len(run), "gaps": len(run.gaps)}


def cmd_forecast(rc: RunConfig):
    ensure_dir(rc.output_dir)
    payloads = []
    for i, path in enumerate(rc.data):
        for model in rc.models:
            seed = np.random.SeedSequence(rc.seed, spawn_key=(i, risk.MODEL_IDS.index(model)))
            payloads.append((len(payloads), model, Path(path), rc, seed))

    header = ["index", "series", "model", "forecasts", "gaps", "path"]
    with StudyService(
        _forecast_job,
        workers=rc.workers,
        out_dir=rc.output_dir,
        name="forecast_jobs",
        header=header,
        row_fn=lambda res: [res[k] for k in header],
        logger=logger,
    ) as service:
        results, failures = service.run(payloads)

    written = [Path(r["path"]) for r in results.values()]
    for index, error in failures.items():
        _, model, path, *_ = payloads[index]
        logger.error("forecast %s on %s failed: %s", model, path, error)
    return written, 1 if failures else 0


def _series_by_name(rc):
    return {data_io.series_name(p): data_io.load_joint_csv(p) for p in rc.data}


def cmd_report(rc: RunConfig):
    written = report.write_reports(rc.output_dir, _series_by_name(rc), rc.alphas)
    for path in written:
        if path.suffix == ".txt":
            logger.info("%s\n%s", path.name, path.read_text(encoding="utf-8"))
    return written, 0


def cmd_backtest(rc: RunConfig):
    if len(rc.models) < 2:
        raise ConfigurationError("backtest ranks models: pass at least two --model values")
    written, code = cmd_forecast(rc)
    if code:
        return written, code
    more, code = cmd_report(rc)
    return written + more, code


HANDLERS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "forecast": cmd_forecast,
    "backtest": cmd_backtest,
    "report": cmd_report,
}


def _validate_inputs(rc: RunConfig):
    """Write one validation report per data file; invalid files stop the run."""
    for path in rc.data:
        result = data_io.validate_file(path)
        target = ensure_dir(rc.output_dir / data_io.series_name(path)) / "validation.json"
        target.write_text(result.to_json() + "\n", encoding="utf-8")
        if not result.ok:
            logger.error("%s failed validation; see %s", path, target)


# -----------------------------
# Main application entry
# -----------------------------
def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_logger(level=logging.INFO)
    manifest = None
    try:
        rc = resolve_config(args)
        setup_logger(level=getattr(logging, rc.log_level, logging.INFO), logfile=rc.logfile)
        logger.info("Starting rtmg %s v%s", rc.command, __version__)

        out = ensure_dir(rc.output_dir)
        dump_config(rc.as_dict(), out / "resolved_config.yaml")
        manifest = RunManifest(out, run_id=f"{rc.command}-{rc.seed}")
        manifest.start(rc.as_dict(), inputs=rc.data)

        _validate_inputs(rc)
        written, exit_code = HANDLERS[rc.command](rc)
    except ConfigurationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        exit_code, written = 2, []
    except RealizedGarchError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        exit_code, written = 1, []

    # -----------------------------
    # CLEAN SHUTDOWN
    # -----------------------------
    if manifest:
        manifest.stop(exit_code, written)
    logger.info("rtmg finished with exit code %d", exit_code)
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
