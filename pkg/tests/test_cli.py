import logging
import os

import pandas as pd
import pytest

import cli
import data_io
from model import DEFAULT_RTMG
from sim import simulate_rtmg

TINY_CONFIG = """\
seed: 17
workers: 1
alphas: [0.01, 0.025]
rolling: {n: 150, m: 6, stride: 6}
mcmc: {epoch_length: 200, imh_length: 150, discard: 50, max_epochs: 2, adapt_every: 50, forecast_draws: 20}
simulation: {n: 120, replications: 1, burn_in: 100}
logging: {level: WARNING}
"""


@pytest.fixture(autouse=True)
def _restore_root_logging():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    for h in list(root.handlers):
        if h not in handlers:
            root.removeHandler(h)
            h.close()
    for h in handlers:
        if h not in root.handlers:
            root.addHandler(h)
    root.setLevel(level)


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "config.yaml"
    p.write_text(TINY_CONFIG)
    return p


@pytest.fixture
def data_file(tmp_path):
    series = simulate_rtmg(DEFAULT_RTMG, 200, seed=4).series
    return data_io.save_joint_csv(series, tmp_path / "SIM.csv")


def test_unknown_model_is_a_usage_error(config):
    with pytest.raises(SystemExit) as exc:
        cli.main(["forecast", "--config", str(config), "--model", "garch"])
    assert exc.value.code == 2


def test_configuration_errors_exit_with_two(tmp_path, config, data_file, capsys):
    code = cli.main(["forecast", "--config", str(config), "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path)])
    assert code == 2
    assert "error: ConfigurationError" in capsys.readouterr().err

    code = cli.main(["forecast", "--config", str(config), "--data", str(data_file), "--alpha", "0.6"])
    assert code == 2

    code = cli.main(["backtest", "--config", str(config), "--data", str(data_file), "--model", "gjr-t",
                     "--out", str(tmp_path / "bt")])
    assert code == 2


def test_overrides_beat_the_file(config):
    args = cli.build_parser().parse_args(["simulate", "--config", str(config), "--n", "300", "--seed", "5"])
    rc = cli.resolve_config(args)
    assert (rc.sim_n, rc.seed, rc.n) == (300, 5, 150)
    assert rc.mcmc.epoch_length == 200 and rc.forecast_draws == 20
    assert rc.as_dict()["sim_params"] == DEFAULT_RTMG.as_dict()


def test_simulate_is_reproducible(tmp_path, config):
    outputs = ("simulated.csv", "replications.csv", "summary.csv", "summary.txt")
    for name in ("a", "b"):
        assert cli.main(["simulate", "--config", str(config), "--out", str(tmp_path / name)]) == 0
    for f in outputs:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f
    assert (tmp_path / "a" / "resolved_config.yaml").exists()
    assert (tmp_path / "a" / "metadata.json").exists()
    summary = pd.read_csv(tmp_path / "a" / "summary.csv", index_col=0)
    assert list(summary.columns) == ["True", "Mean", "RMSE"]


def test_estimate_writes_posterior_files(tmp_path, config, data_file):
    out = tmp_path / "est"
    code = cli.main(["estimate", "--config", str(config), "--data", str(data_file), "--model", "rg",
                     "--model", "gjr-t-hs", "--out", str(out)])
    assert code == 0
    for name in ("rg_estimates.csv", "rg_draws.csv", "rg_acceptance.csv", "rg_epoch_history.csv",
                 "gjr-t_estimates.csv", "validation.json"):
        assert (out / "SIM" / name).exists(), name
    estimates = pd.read_csv(out / "SIM" / "rg_estimates.csv", index_col="parameter")
    assert "residual_sd" in estimates.index and "tau1" in estimates.index


def test_backtest_then_report(tmp_path, config, data_file):
    out = tmp_path / "bt"
    code = cli.main(["backtest", "--config", str(config), "--data", str(data_file), "--model", "gjr-t",
                     "--model", "gjr-t-hs", "--out", str(out)])
    assert code == 0
    forecasts = pd.read_csv(out / "SIM" / "forecasts_gjr-t-hs.csv")
    assert forecasts["origin_index"].unique().tolist() == list(range(150, 156))
    assert (forecasts["es"] <= forecasts["var"]).all()
    jobs = pd.read_csv(out / "forecast_jobs.csv")
    assert jobs["model"].tolist() == ["gjr-t", "gjr-t-hs"]

    table = out / "joint_loss_0.01.csv"
    before = table.read_bytes()
    assert cli.main(["report", "--config", str(config), "--data", str(data_file), "--out", str(out)]) == 0
    assert table.read_bytes() == before
    assert (out / "SIM" / "joint_loss_path_0.025.csv").exists()


@pytest.mark.slow
def test_six_model_backtest_on_simulated_series(tmp_path):
    config = tmp_path / "config.yaml"
    config.write_text(
        "seed: 2024\n"
        f"workers: {os.cpu_count() or 1}\n"
        "models: [rtmg, rg, egarch-t, gjr-t, egarch-t-hs, gjr-t-hs]\n"
        "alphas: [0.01, 0.025]\n"
        "rolling: {n: 1000, m: 100, stride: 10}\n"
        "mcmc: {epoch_length: 5000, imh_length: 5000, discard: 1000, max_epochs: 4, adapt_every: 100, forecast_draws: 500}\n"
        "logging: {level: WARNING}\n"
    )
    argv = ["backtest", "--config", str(config), "--out", str(tmp_path / "out")]
    for i in range(6):
        series = simulate_rtmg(DEFAULT_RTMG, 1100, seed=100 + i).series
        argv += ["--data", str(data_io.save_joint_csv(series, tmp_path / f"S{i}.csv"))]
    assert cli.main(argv) == 0

    out = tmp_path / "out"
    for loss in ("quantile", "joint"):
        for alpha in ("0.01", "0.025"):
            table = pd.read_csv(out / f"{loss}_loss_{alpha}.csv", index_col="model")
            assert sorted(table.index) == sorted(["rtmg", "rg", "egarch-t", "gjr-t", "egarch-t-hs", "gjr-t-hs"])
            assert {f"S{i}" for i in range(6)} | {"Avg Loss", "Avg Rank"} <= set(table.columns)
            title = (out / f"{loss}_loss_{alpha}.txt").read_text().splitlines()[0]
            assert title.endswith(f"alpha={alpha}")

    quantile = pd.read_csv(out / "quantile_loss_0.01.csv", index_col="model")["Avg Loss"]
    worst_benchmark = quantile[["egarch-t", "gjr-t", "egarch-t-hs", "gjr-t-hs"]].max()
    assert quantile["rtmg"] <= worst_benchmark
    assert quantile["rg"] <= worst_benchmark
