import json
import math

import pytest

from fracboltz import cli
from fracboltz.config import ExperimentConfig, parse_text, parse_value
from fracboltz.errors import ConfigError

GAUSS_EVOLVE = """
kernel.kind = constant
solver.p = 2.0
solver.delta_p = 0.0
solver.alpha = 1.0
solver.dt = 0.05
datum.family = gaussian
datum.sigma = 1.0
grid.n = 128
run.T = 0.5
"""


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_parse_values():
    assert parse_value("1.5") == 1.5
    assert parse_value("true") is True
    assert parse_value("none") is None
    assert parse_value("[[0, 2], [1.5, 1]]") == [[0, 2], [1.5, 1]]
    assert parse_value("0.5, 1.0") == [0.5, 1.0]
    assert parse_value("constant") == "constant"


def test_parse_text_errors():
    assert parse_text("a.b = 1  # note\n\n# only comment\nc = x") == {"a.b": 1, "c": "x"}
    for bad in ("novalue", "a = 1\na = 2", "bad key = 1"):
        with pytest.raises(ConfigError):
            parse_text(bad)


def test_builders():
    ec = ExperimentConfig.from_dict({"kernel.kind": "powerlaw", "kernel.s": 0.25,
                                     "kernel.alpha0": 0.75, "solver.alpha": 1.0,
                                     "solver.n_schedule": [100, 1000], "datum.family": "stable",
                                     "datum.p": 1.8})
    cs, cfg = ec.kernel(), ec.solver()
    assert cs.kind == "powerlaw" and cfg.n_schedule == (100.0, 1000.0)
    ec.validate_physics(cs, cfg)
    assert ec.datum().p == 1.8
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"solver.bogus": 1}).solver()
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"kernel.kind": "nope"}).kernel()
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({}).datum()


@pytest.mark.parametrize("flat", [
    {"kernel.kind": "constant", "kernel.alpha0": 1.5, "solver.alpha": 1.0},
    {"kernel.kind": "powerlaw", "kernel.s": 0.25, "kernel.alpha0": 0.75, "solver.alpha": 0.7},
])
def test_physics_validation(flat):
    ec = ExperimentConfig.from_dict(flat)
    with pytest.raises(ConfigError):
        ec.validate_physics(ec.kernel(), ec.solver())


def test_alpha_at_least_p_refused(tmp_path):
    cfg = write(tmp_path, GAUSS_EVOLVE.replace("solver.alpha = 1.0", "solver.alpha = 2.0"))
    status, out = cli.run("evolve", cfg, tmp_path / "out")
    assert status == 2 and out is None


def test_constants_report(tmp_path):
    status, out = cli.run("constants", write(tmp_path, "kernel.kind = constant\n"), tmp_path)
    assert status == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["passed"]
    assert abs(rep["results"]["gamma_2"] - 2 * math.pi) <= 1e-10
    assert abs(rep["results"]["lambda_2"]) <= 1e-12
    assert rep["config"] == {"kernel.kind": "constant"}
    assert rep["tolerances"]["gamma_2"] == 1e-10
    assert (out / "c_const.csv").read_text().startswith("p,alpha,formula,quadrature")


def test_nonexistence_log_case(tmp_path):
    cfg = write(tmp_path, "nonexistence.cases = [[1.0, 1.0]]\n")
    status, out = cli.run("nonexistence", cfg, tmp_path)
    rep = json.loads((out / "report.json").read_text())
    assert status == 0 and rep["results"]["p=1,alpha=1"]["kind"] == "log"


def test_evolve_gaussian_steady(tmp_path):
    status, out = cli.run("evolve", write(tmp_path, GAUSS_EVOLVE), tmp_path)
    assert status == 0
    rep = json.loads((out / "report.json").read_text())
    assert all(a["passed"] for a in rep["assertions"])
    assert {a["name"] for a in rep["assertions"]} >= {"growth", "apriori", "holder"}
    man = json.loads((out / "trace" / "manifest.json").read_text())
    assert len(man["files"]) == len(man["times"]) == 11


def test_deterministic_reports(tmp_path):
    cfg = write(tmp_path, "seed = 3\n")
    a = cli.run("stable-density", cfg, tmp_path / "a")[1]
    b = cli.run("stable-density", cfg, tmp_path / "b")[1]
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    c = cli.run("stable-density", cfg, tmp_path / "c", seed=4)[1]
    assert (a / "report.json").read_bytes() != (c / "report.json").read_bytes()


def test_violated_estimate_exit_1(tmp_path, capsys):
    status, out = cli.run("stable-density", None, tmp_path, tolerance_scale=1e-12)
    assert status == 1
    assert "violated" in capsys.readouterr().err
    rep = json.loads((out / "report.json").read_text())
    assert not rep["passed"] and rep["tolerance_scale"] == 1e-12


def test_numerical_failure_exit_3(tmp_path, capsys):
    text = GAUSS_EVOLVE.replace("datum.family = gaussian\ndatum.sigma = 1.0",
                                "datum.family = stable\ndatum.p = 1.5")
    text += "solver.picard_max_iter = 1\n"
    status, out = cli.run("evolve", write(tmp_path, text), tmp_path)
    assert status == 3
    err = json.loads((out / "report.json").read_text())["error"]
    assert err["type"] == "ToleranceNotMet" and err["module"] == "fracboltz.errors"


def test_config_errors_exit_2(tmp_path):
    assert cli.run("evolve", tmp_path / "missing.cfg", tmp_path)[0] == 2
    assert cli.run("evolve", write(tmp_path, "x = = 1\nx = 2\n"), tmp_path)[0] == 2
    assert cli.run("constants", None, tmp_path, tolerance_scale=0.0)[0] == 2


def test_main_argv(tmp_path, capsys):
    assert cli.main(["nonexistence", "--out", str(tmp_path)]) == 0
    assert "report:" in capsys.readouterr().out
    with pytest.raises(SystemExit):
        cli.main(["bogus"])
