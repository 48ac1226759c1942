import logging

import pytest

import utils


def test_load_config_expands_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("RTMG_TEST_OUT", "/data/out")
    monkeypatch.delenv("RTMG_TEST_UNSET", raising=False)
    p = tmp_path / "config.yaml"
    p.write_text(
        "output_dir: ${RTMG_TEST_OUT}/runs\n"
        "logfile: ${RTMG_TEST_UNSET}\n"
        "models: [rtmg, gjr-t]\n"
        "rolling: {n: 1000}\n"
    )
    cfg = utils.load_config(p)
    assert cfg["output_dir"] == "/data/out/runs"
    assert cfg["logfile"] == ""
    assert cfg["models"] == ["rtmg", "gjr-t"]
    assert cfg["rolling"]["n"] == 1000


def test_empty_config_is_a_dict(tmp_path):
    p = tmp_path / "empty.yaml"
    p.write_text("")
    assert utils.load_config(p) == {}


def test_apply_overrides_leaves_original_alone():
    cfg = {"rolling": {"n": 1000, "m": 250}, "seed": 1}
    out = utils.apply_overrides(cfg, {"rolling.n": 500, "rolling.stride": None, "mcmc.discard": 10})
    assert out == {"rolling": {"n": 500, "m": 250}, "seed": 1, "mcmc": {"discard": 10}}
    assert cfg["rolling"]["n"] == 1000
    assert utils.apply_overrides(cfg, None) is cfg


def test_apply_overrides_copies_nested_values():
    cfg = {"models": ["rtmg"], "simulation": {"params": {"nu": 10.0}}}
    out = utils.apply_overrides(cfg, {"seed": 2})
    out["models"].append("rg")
    out["simulation"]["params"]["nu"] = 6.0
    assert cfg == {"models": ["rtmg"], "simulation": {"params": {"nu": 10.0}}}


def test_dump_config_round_trips(tmp_path):
    cfg = {"seed": 3, "alphas": [0.01, 0.025], "mcmc": {"epoch_length": 10000}}
    utils.dump_config(cfg, tmp_path / "resolved.yaml")
    assert utils.load_config(tmp_path / "resolved.yaml") == cfg


def test_csv_writer_truncates(tmp_path):
    for rows in ([[1, 2], [3, 4]], [[5, 6]]):
        f, w, path = utils.csv_writer(tmp_path, "out", ["a", "b"])
        w.writerows(rows)
        f.close()
    assert path == tmp_path / "out.csv"
    assert path.read_text().splitlines() == ["a,b", "5,6"]


def test_setup_logger_does_not_stack_handlers(tmp_path):
    name = "rtmg-test-logger"
    utils.setup_logger(name, logging.DEBUG)
    logger = utils.setup_logger(name, logging.DEBUG, logfile=tmp_path / "run.log")
    assert len(logger.handlers) == 2
    logger.info("hello %s", "world")
    for h in logger.handlers:
        h.flush()
    line = (tmp_path / "run.log").read_text().strip()
    assert line.endswith("rtmg-test-logger: hello world")
    assert "Z [INFO]" in line
    for h in list(logger.handlers):
        logger.removeHandler(h)
        h.close()


def test_ensure_dir(tmp_path):
    p = utils.ensure_dir(tmp_path / "a" / "b")
    assert p.is_dir()
    assert utils.ensure_dir(p) == p
