import json

import numpy as np
import pandas as pd
import pytest

import report
import risk
from errors import ReportError
from model import JointSeries
from provenance import RunManifest, file_digest
from risk import ForecastRun, RiskForecast


def _series(seed, n=40):
    rng = np.random.default_rng(seed)
    return JointSeries(dates=pd.bdate_range("2022-01-03", periods=n), r=rng.standard_t(6, n), x=rng.uniform(0.5, 2.0, n))


def _run(model, series, start, scale, skip=()):
    run = ForecastRun(model=model)
    for t in range(start, len(series)):
        if t in skip:
            run.gaps.append(t)
            continue
        for a in risk.ALPHAS:
            var = -scale * (2.0 if a == 0.01 else 1.7)
            run.forecasts.append(RiskForecast(t, series.dates[t], a, var, 1.25 * var, model))
    run.params_path = pd.DataFrame([{"origin_index": start, "date": series.dates[start], "omega": 0.1}])
    return run


@pytest.fixture
def persisted(tmp_path):
    data = {"AAA": _series(1), "BBB": _series(2)}
    for name, s in data.items():
        report.write_forecasts(_run("gjr-t", s, 30, 1.0), report.forecast_path(tmp_path, name, "gjr-t"))
        report.write_forecasts(_run("rg", s, 30, 1.4, skip={31}), report.forecast_path(tmp_path, name, "rg"))
    return tmp_path, data


def test_forecast_files_are_found(persisted):
    out, _ = persisted
    files = report.list_candidates(out)
    assert [f"{p.parent.name}/{p.name}" for p in files] == [
        "AAA/forecasts_gjr-t.csv", "AAA/forecasts_rg.csv", "BBB/forecasts_gjr-t.csv", "BBB/forecasts_rg.csv",
    ]
    assert (out / "AAA" / "params_rg.csv").exists()
    frame = report.load_forecasts(files[0])
    assert frame["date"].iloc[0] == "2022-02-14"


def test_losses_use_shared_days(persisted):
    out, data = persisted
    tables, paths = report.loss_tables(out, data, [0.01])
    common = [30, *range(32, 40)]
    r = data["AAA"].r[common]
    expected = risk.quantile_loss(r, np.full(len(common), -2.0), 0.01)
    assert tables[0.01]["quantile"].loc["gjr-t", "AAA"] == pytest.approx(expected, rel=1e-12)
    joint = tables[0.01]["joint"]
    assert list(joint.index) == ["gjr-t", "rg"] and list(joint.columns) == ["AAA", "BBB"]
    assert paths[0.01]["AAA"].index.tolist() == common
    assert paths[0.01]["AAA"]["rg"].sum() == pytest.approx(joint.loc["rg", "AAA"], rel=1e-12)


def test_write_reports(persisted):
    out, data = persisted
    written = report.write_reports(out, data, [0.01, 0.025])
    names = {p.name for p in written}
    assert {"quantile_loss_0.01.csv", "joint_loss_0.025.txt", "joint_loss_path_0.01.csv"} <= names
    table = pd.read_csv(out / "joint_loss_0.01.csv", index_col="model")
    assert {"AAA", "BBB", "Avg Loss", "Avg Rank", "best_loss"} <= set(table.columns)
    text = (out / "quantile_loss_0.025.txt").read_text()
    assert text.startswith("Quantile loss, alpha=0.025")
    # recomputing from the same files is byte-stable
    before = (out / "joint_loss_0.01.csv").read_bytes()
    report.write_reports(out, data, [0.01])
    assert (out / "joint_loss_0.01.csv").read_bytes() == before


def test_report_errors(tmp_path, persisted):
    _, data = persisted
    with pytest.raises(ReportError):
        report.loss_tables(tmp_path / "empty", data, [0.01])
    bad = tmp_path / "CCC" / "forecasts_rg.csv"
    bad.parent.mkdir()
    bad.write_text("day,var\n1,2\n")
    with pytest.raises(ReportError):
        report.load_forecasts(bad)


def test_run_manifest(tmp_path):
    data = tmp_path / "in.csv"
    data.write_text("date,return,rv\n")
    manifest = RunManifest(tmp_path / "out", "run-1")
    manifest.start({"seed": 1}, inputs=[data])
    path = manifest.stop(0, outputs=[tmp_path / "b", tmp_path / "a"])
    events = json.loads(path.read_text())
    assert [e["type"] for e in events] == ["start", "finish"]
    assert all(set(e) == {"type", "runId", "ts", "payload"} and e["runId"] == "run-1" for e in events)
    assert events[0]["payload"]["inputs"] == {str(data): file_digest(data)}
    assert events[1]["payload"]["exitCode"] == 0
    assert events[1]["payload"]["outputs"] == sorted([str(tmp_path / "b"), str(tmp_path / "a")])
