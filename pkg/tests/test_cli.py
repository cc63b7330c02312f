import json
import os
import subprocess
import sys

import numpy as np
import pytest

from visco_decay.cli import apply_overrides, dump_json, main, read_csv, write_csv
from visco_decay.solver import CSV_COLUMNS

SMALL = {
    "alpha": 0.1, "mu1": 1.0, "mu2": 0.3,
    "kernel": {"family": "exponential", "a": 0.5, "b": 2.0},
    "delay": {"family": "constant", "tau0": 0.5},
    "grid": {"n": 20}, "dt": 0.002, "T": 4.0, "cadence": 10,
    "initial": {"u0": {"shape": "sine", "amplitude": 1.0, "wavenumber": 0.5}},
}


@pytest.fixture
def config(tmp_path):
    def make(data=SMALL, name="cfg.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return str(path)
    return make


def test_check_kernel_ok(config, capsys):
    assert main(["check-kernel", "--config", config()]) == 0
    out = capsys.readouterr().out
    assert "l = 0.75" in out and "xi = 2 constant" in out


def test_check_kernel_not_dissipative(config, capsys):
    rc = main(["check-kernel", "--config", config(), "kernel.a=2", "kernel.b=1"])
    assert rc == 3
    assert "NotDissipative" in capsys.readouterr().err


def test_simulate_outputs(config, tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--config", config(), "--out", str(out)]) == 0
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + 2000 // 10 + 1
    report_text = (out / "report.json").read_text()
    report = json.loads(report_text)
    assert report["zeta_selection"]["zeta"] == 1.0
    assert report["decay_fit"]["k"] > 0 and report["decay_fit"]["K"] > 0
    v = report["validation"]
    assert 0 < v["alpha1_hat"] <= v["alpha2_hat"]
    assert report["certificates"]["kernel"]["l"] == 0.75
    assert report["config"]["T"] == 4.0
    assert set(report["timings"]) >= {"setup_s", "total_s"}
    # round trip through the parser is byte-identical
    assert dump_json(json.loads(report_text)) == report_text


def test_simulate_is_deterministic(config, tmp_path):
    for name in ("a", "b"):
        assert main(["simulate", "--config", config(), "--out", str(tmp_path / name)]) == 0
    a = (tmp_path / "a" / "trajectory.csv").read_bytes()
    b = (tmp_path / "b" / "trajectory.csv").read_bytes()
    assert a == b


def test_csv_precision(tmp_path):
    cols = {c: np.zeros(3) for c in CSV_COLUMNS}
    cols["E_total"] = np.array([1 / 3, 2 / 3, np.pi])
    path = tmp_path / "t.csv"
    write_csv(path, cols)
    back = read_csv(path)
    assert np.array_equal(back["E_total"], cols["E_total"])
    zero = {c: np.zeros(3) for c in CSV_COLUMNS}
    write_csv(path, zero)
    rows = path.read_text().splitlines()[1:]
    assert rows == [",".join(["0"] * len(CSV_COLUMNS))] * 3


def test_fit_appends_to_trajectory(config, tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--config", config(), "--out", str(out)]) == 0
    assert main(["fit", "--config", config(), "--out", str(out)]) == 0
    text = (out / "trajectory.csv").read_text().splitlines()
    assert text[-1].startswith("# decay_fit ")
    fit = json.loads(text[-1][len("# decay_fit "):])
    report = json.loads((out / "report.json").read_text())
    assert fit["k"] == pytest.approx(report["decay_fit"]["k"], rel=1e-12)
    assert json.loads((out / "fit.json").read_text())["k"] == fit["k"]
    # the appended comment does not break a second fit
    assert main(["fit", "--config", config(), "--out", str(out)]) == 0


def test_validate_writes_report(config, tmp_path):
    out = tmp_path / "val"
    rc = main(["validate", "--config", config(), "--out", str(out), "T=3",
               "validate.T=1.0"])
    assert rc == 0
    rep = json.loads((out / "validation.json").read_text())["validation"]
    assert rep["delay_ratio"] > 1.5
    assert rep["memory_field_error"] <= 1e-10
    assert rep["order_time"] > 1.5
    assert rep["dissipation_violations"] == 0


def test_sweep_table(config, tmp_path, capsys):
    out = tmp_path / "sw"
    rc = main(["sweep", "--config", config(), "--out", str(out), "--jobs", "2",
               "sweep.ratios=[0.3, 1.2]", "sweep.d=[0.2]", "T=5"])
    assert rc == 0
    rows = (out / "sweep.csv").read_text().splitlines()
    assert rows[0] == "ratio,d,feasible,k,r2,no_decay,status"
    assert rows[1].split(",")[2] == "true" and rows[2].split(",")[2] == "false"
    assert all(r.endswith(",ok") for r in rows[1:])
    assert "feasible" in capsys.readouterr().out


@pytest.mark.parametrize("argv_tail, code", [
    (["simulate", "grid.n=abc"], 2),
    (["simulate", "banana=1"], 2),
    (["simulate", "noequals"], 2),
    (["simulate", "mu2=2"], 3),
    (["simulate", "delay.amp=0.2", "delay.omega=6", "delay.family=sinusoid"], 3),
    (["simulate", "delay_mode=zfield", "delay.tau0=0.01"], 4),
    (["simulate", "initial.u0.shape=constant", "initial.u0.value=1"], 2),
    (["frobnicate"], 2),
])
def test_exit_codes(config, tmp_path, argv_tail, code, capsys):
    argv = [argv_tail[0], "--config", config(), "--out", str(tmp_path / "x")] + argv_tail[1:]
    assert main(argv) == code
    assert "error" in capsys.readouterr().err


def test_numerical_failure_reports_time(config, tmp_path, capsys):
    rc = main(["simulate", "--config", config(), "--out", str(tmp_path),
               "delay_mode=zfield", "delay.tau0=0.01"])
    assert rc == 4
    assert "t = 0.002" in capsys.readouterr().err


def test_bad_json_reports_position(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "alpha": 0.1,\n  "mu1": \n}')
    assert main(["simulate", "--config", str(path)]) == 2
    assert "bad.json:4:1" in capsys.readouterr().err


def test_missing_config_and_unwritable_output(config, capsys):
    assert main(["simulate", "--config", "/nonexistent/cfg.json"]) == 2
    assert main(["simulate", "--config", config(), "--out", "/proc/forbidden", "T=0.01"]) == 4


def test_missing_trajectory_for_fit(config, tmp_path):
    assert main(["fit", "--config", config(), "--out", str(tmp_path / "none")]) == 4


def test_overrides():
    data = apply_overrides({"a": {"b": 1}}, ["a.b=2.5", "c.d=\"x\"", "e=word", "f=[1,2]"])
    assert data == {"a": {"b": 2.5}, "c": {"d": "x"}, "e": "word", "f": [1, 2]}


def test_console_script(config):
    proc = subprocess.run([sys.executable, "-m", "visco_decay.cli", "check-kernel",
                           "--config", config()], capture_output=True, text=True)
    assert proc.returncode == 0 and "l = 0.75" in proc.stdout
