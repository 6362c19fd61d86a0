import json
import subprocess
import sys
from importlib import resources

import jsonschema
import numpy as np
import pytest

from shapetest.calibration import NullCalibration
from shapetest.cli import main, read_data
from shapetest.exceptions import ShapeTestError
from shapetest.simlab import test_function


def write_data(path, x, y, header=True, shuffle=False):
    order = np.random.default_rng(0).permutation(x.size) if shuffle else np.arange(x.size)
    lines = ["# synthetic data"] + (["x,y"] if header else [])
    lines += [f"{float(x[i])!r},{float(y[i])!r}" for i in order]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture(scope="module")
def cals(tmp_path_factory):
    d = tmp_path_factory.mktemp("cal")
    out = {}
    for test in ("mono-lm", "mono-lg"):
        path = d / f"{test}.json"
        assert main(["calibrate", "--test", test, "--n", "100", "--ln", "25",
                     "--sims", "4000", "--seed", "1", "--out", str(path)]) == 0
        out[test] = path
    return out


def test_calibrate_output(cals, capsys):
    cal = NullCalibration.load(cals["mono-lm"])
    assert 0.002 <= cal.u_alpha <= 0.05
    assert cal.n == 100 and cal.ell_n == 25


def test_calibrate_prints_summary(tmp_path, capsys):
    out = tmp_path / "pos.json"
    assert main(["calibrate", "--test", "positivity", "--n", "30", "--ln", "1",
                 "--sims", "2000", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "u_alpha=0.05" in text and "q(1, u_alpha)" in text


def test_calibrate_diffineq_defaults(tmp_path):
    out = tmp_path / "d.json"
    assert main(["calibrate", "--test", "diffineq", "--order", "2", "--n", "60",
                 "--sims", "1000", "--out", str(out)]) == 0
    cal = NullCalibration.load(out)
    assert cal.ell_n == 10 and cal.r == 2


@pytest.mark.parametrize("args", [
    ["calibrate", "--test", "diffineq", "--n", "100", "--ln", "10", "--out", "x.json"],
    ["calibrate", "--test", "mono-lm", "--n", "100", "--ln", "10", "--order", "2", "--out", "x"],
    ["calibrate", "--test", "mono-lm", "--ln", "10", "--out", "x.json"],
    ["calibrate", "--test", "mono-lm", "--n", "100", "--out", "x.json"],
    ["calibrate", "--test", "kolmogorov", "--n", "100", "--ln", "10", "--out", "x.json"],
    ["calibrate", "--test", "mono-lg", "--n", "10", "--ln", "5", "--out", "x.json"],
    ["calibrate", "--test", "mono-lm", "--n", "100", "--ln", "10", "--alpha", "0.6",
     "--out", "x.json"],
    ["frobnicate"],
    [],
])
def test_usage_errors(args, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(args) == 2


def test_accept_and_reject_exit_codes(cals, tmp_path, capsys):
    x = np.arange(1, 101) / 101
    rng = np.random.default_rng(2)
    calm = write_data(tmp_path / "calm.csv", x, x + 0.01 * rng.normal(size=100))
    assert main(["test", "--data", str(calm), "--cal", str(cals["mono-lm"])]) == 0
    assert "ACCEPT" in capsys.readouterr().out
    dip = test_function("F1")(x) + 0.1 * rng.normal(size=100)
    dip_path = write_data(tmp_path / "dip.csv", x, dip, header=False, shuffle=True)
    assert main(["test", "--data", str(dip_path), "--cal", str(cals["mono-lg"])]) == 1
    out = capsys.readouterr().out
    assert "REJECT" in out and "witness: scale" in out and "sigma_hat=" in out


def test_json_report_validates(cals, tmp_path):
    schema = json.loads(resources.files("shapetest").joinpath("data/report.schema.json")
                        .read_text())
    x = np.arange(1, 101) / 101
    y = test_function("F1")(x) + 0.1 * np.random.default_rng(3).normal(size=100)
    data = write_data(tmp_path / "d.csv", x, y)
    single = tmp_path / "single.json"
    main(["test", "--data", str(data), "--cal", str(cals["mono-lg"]), "--json", str(single)])
    doc = json.loads(single.read_text())
    jsonschema.validate(doc, schema)
    assert doc["decision"] == "REJECT" and doc["reject"] is True
    both = tmp_path / "both.json"
    code = main(["test", "--data", str(data), "--cal", str(cals["mono-lm"]),
                 "--cal", str(cals["mono-lg"]), "--json", str(both)])
    doc = json.loads(both.read_text())
    jsonschema.validate(doc, schema)
    assert code == 1 and doc["variant"] == "combined-mono"
    assert set(doc["components"]) == {"mono-lm", "mono-lg"}
    assert doc["alpha"] == pytest.approx(0.1)


def test_smoothness_via_cli(tmp_path):
    cal = tmp_path / "d1.json"
    assert main(["calibrate", "--test", "diffineq", "--order", "1", "--n", "100",
                 "--sims", "2000", "--out", str(cal)]) == 0
    x = np.arange(1, 101) / 101
    y = 10 * x + 0.05 * np.random.default_rng(4).normal(size=100)
    data = write_data(tmp_path / "s.csv", x, y)
    assert main(["test", "--data", str(data), "--cal", str(cal), "--smooth", "1"]) == 1
    assert main(["test", "--data", str(data), "--cal", str(cal), "--smooth", "50"]) == 0


def test_data_errors(cals, tmp_path):
    x = np.arange(1, 51) / 51
    short = write_data(tmp_path / "short.csv", x, x)
    assert main(["test", "--data", str(short), "--cal", str(cals["mono-lm"])]) == 2
    assert main(["test", "--data", str(tmp_path / "missing.csv"),
                 "--cal", str(cals["mono-lm"])]) == 2
    dup = tmp_path / "dup.csv"
    dup.write_text("0.1,1\n0.1,2\n0.2,3\n")
    assert main(["test", "--data", str(dup), "--cal", str(cals["mono-lm"])]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n0.1,1\n0.2,oops\n")
    with pytest.raises(ShapeTestError):
        read_data(bad)
    out_of_range = tmp_path / "range.csv"
    out_of_range.write_text("0.1,1\n1.5,2\n")
    with pytest.raises(ShapeTestError):
        read_data(out_of_range)
    nan = tmp_path / "nan.csv"
    nan.write_text("0.1,1\n0.2,nan\n")
    with pytest.raises(ShapeTestError):
        read_data(nan)
    two_headers = tmp_path / "headers.csv"
    two_headers.write_text("x,y\nu,v\n0.1,1\n")
    with pytest.raises(ShapeTestError):
        read_data(two_headers)
    three = tmp_path / "three.csv"
    three.write_text("0.1,1,2\n")
    with pytest.raises(ShapeTestError):
        read_data(three)
    garbage = tmp_path / "garbage.json"
    garbage.write_text("{}")
    data = write_data(tmp_path / "ok.csv", np.arange(1, 101) / 101, np.arange(100.0))
    assert main(["test", "--data", str(data), "--cal", str(garbage)]) == 2


def test_read_data_sorts_and_reports_order(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x,y\n0.3,3\n# comment\n\n0.1,1\n0.2,2\n")
    x, y, order = read_data(p)
    assert x.tolist() == [0.1, 0.2, 0.3] and y.tolist() == [1, 2, 3]
    assert order.tolist() == [1, 2, 0]


def test_simulate_command(tmp_path, capsys):
    spec = tmp_path / "study.json"
    spec.write_text(json.dumps({"cal_sims": 2000, "scenarios": [
        {"name": "lvl", "function": "F0", "n": 60, "ell_n": 10, "test": "LM"},
        {"name": "pow", "function": "F3", "n": 60, "ell_n": 10, "test": "LG"},
    ]}))
    out = tmp_path / "res.csv"
    assert main(["simulate", "--spec", str(spec), "--out", str(out), "--reps", "10"]) == 0
    rows = out.read_text().splitlines()
    assert rows[0].startswith("scenario,function") and len(rows) == 3
    assert all(r.endswith(",1") for r in rows[1:])
    assert (tmp_path / "res.runtime.csv").read_text().startswith("scenario,runtime_seconds")
    assert "[low precision]" in capsys.readouterr().out
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps([{"function": "F0"}, {"function": "F0", "law": "laplace"}]))
    assert main(["simulate", "--spec", str(bad), "--reps", "5"]) == 2
    assert "row 2" in capsys.readouterr().err


def test_simulate_distance_spec(tmp_path, capsys):
    spec = resources.files("shapetest").joinpath("data/distance_study.json")
    out = tmp_path / "t1.csv"
    assert main(["simulate", "--spec", str(spec), "--out", str(out)]) == 0
    text = out.read_text()
    assert text.splitlines()[0] == "function,sigma2,d_design,d_continuous"
    assert "F2,0.01,0.073515" in text
    first = out.read_bytes()
    main(["simulate", "--spec", str(spec), "--out", str(out)])
    assert out.read_bytes() == first


def test_tables_command(capsys):
    assert main(["tables", "--which", "1"]) == 0
    assert "Distance to monotonicity" in capsys.readouterr().out
    assert main(["tables", "--which", "3", "--reps", "5", "--cal-sims", "1000"]) == 0
    assert "*" in capsys.readouterr().out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "shapetest", "--help"], capture_output=True,
                          text=True, check=False)
    assert proc.returncode == 0 and "calibrate" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "shapetest", "calibrate"], capture_output=True,
                          text=True, check=False)
    assert proc.returncode == 2
