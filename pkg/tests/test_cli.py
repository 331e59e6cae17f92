import csv
import json
import subprocess
import sys

import pytest

from gsdmix.cli import main, parse_grid, InputError

POCOCK = {"boundaries": {"n": [100, 100], "c": [2.18, 2.18]}}
SPEC = {"k": 3, "alpha": 0.05, "power": 0.8, "alternatives": [0.3, 0.2, 0.1], "alpha0_override": 0.0172}


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    d = tmp_path_factory.mktemp("design")
    out = d / "solved.json"
    assert main(["design", _write(d / "spec.json", SPEC), "-o", str(out), "--oc-csv", str(d / "oc.csv")]) == 0
    return out


def test_design_output(solved):
    data = json.loads(solved.read_text())
    assert data["boundaries"]["n"] == [98, 95, 587]
    assert data["validation"]["passed"]
    assert len(_rows(solved.parent / "oc.csv")) == 4 * 3


def test_roundtrip_into_every_analysis_command(solved, tmp_path):
    d = str(solved)
    assert main(["oc", d, "--theta", "0,0.1", "-o", str(tmp_path / "oc.csv")]) == 0
    assert main(["info", d, "--theta-grid", "0,0.1", "-o", str(tmp_path / "info.csv")]) == 0
    assert main(["asymcdf", d, "--v-grid=-1,0,2", "-o", str(tmp_path / "a.csv")]) == 0
    assert main(["monitor", d, "--z", "1.0,2.5", "-o", str(tmp_path / "m.json")]) == 0
    data = tmp_path / "data.csv"
    data.write_text("stage,n,mean\n1,98,0.4\n")
    assert main(["estimate", d, "--data", str(data), "-o", str(tmp_path / "e.json")]) == 0
    oc = _rows(tmp_path / "oc.csv")
    assert list(oc[0]) == ["theta", "stage", "reject_prob_stagewise", "reject_prob_cumulative", "stop_prob", "expected_N", "method"]
    assert {"v", "cdf_component_1", "cdf_component_3", "cdf_total"} <= set(_rows(tmp_path / "a.csv")[0])
    assert json.loads((tmp_path / "m.json").read_text())["decision"] == "stop: reject H0"


def test_full_precision_and_determinism(tmp_path):
    d = _write(tmp_path / "p.json", POCOCK)
    for name in ("a.csv", "b.csv"):
        assert main(["oc", d, "--theta", "0.1", "--method", "mc", "--reps", "2000", "--seed", "4", "-o", str(tmp_path / name)]) == 0
    assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()
    assert main(["oc", d, "--theta", "0", "-o", str(tmp_path / "q.csv")]) == 0
    cell = _rows(tmp_path / "q.csv")[0]["reject_prob_stagewise"]
    assert float(cell) == float(format(float(cell), ".17g")) and len(cell.replace("0.", "")) >= 15


def test_asymcdf_pocock(tmp_path):
    d = _write(tmp_path / "p.json", POCOCK)
    out = tmp_path / "a.csv"
    assert main(["asymcdf", d, "--h", "0", "--v-grid", "2.18", "-o", str(out)]) == 0
    assert float(_rows(out)[0]["cdf_total"]) == pytest.approx(0.975, abs=1e-3)
    assert main(["asymcdf", d, "--h", "8", "--v-grid", "50", "-o", str(out)]) == 0
    assert float(_rows(out)[0]["cdf_component_1"]) > 0.999


def test_estimate_stage_one_rejection(tmp_path):
    d = _write(tmp_path / "p.json", POCOCK)
    data = tmp_path / "d.csv"
    data.write_text("1,100,0.295\n")
    out = tmp_path / "e.json"
    assert main(["estimate", d, "--data", str(data), "-o", str(out)]) == 0
    res = json.loads(out.read_text())
    assert res["decision"] == "reject at stage 1"
    assert res["theta_hat"] == pytest.approx(0.295)
    assert res["theta_hat_c"] == pytest.approx(0.2101437, abs=1e-6) and not res["diverged"]
    assert res["info_observed"]["I_obs"] == 100


def test_info_single_point_and_infinite_boundary(tmp_path):
    d = _write(tmp_path / "inf.json", {"boundaries": {"n": [100, 100], "c": ["inf", 2.18]}})
    out = tmp_path / "i.csv"
    assert main(["info", d, "--theta-grid", "0.2", "-o", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 1
    assert float(rows[0]["I"]) == float(rows[0]["I_c"]) == float(rows[0]["I_fix"]) == pytest.approx(200)


@pytest.mark.parametrize(
    "argv",
    [
        ["oc", "{d}", "--theta", ""],
        ["asymcdf", "{d}", "--v-grid", ""],
        ["info", "{d}", "--theta-grid", ""],
        ["oc", "{bad}", "--theta", "0"],
        ["oc", "{missing}", "--theta", "0"],
        ["oc", "{nob}", "--theta", "0"],
    ],
)
def test_input_errors_exit_1(tmp_path, argv, capsys):
    paths = {
        "d": _write(tmp_path / "p.json", POCOCK),
        "bad": str(tmp_path / "bad.json"),
        "missing": str(tmp_path / "none.json"),
        "nob": _write(tmp_path / "nob.json", {"k": 2}),
    }
    (tmp_path / "bad.json").write_text('{"k": 2,\n "alpha": }')
    assert main([a.format(**paths) for a in argv]) == 1


def test_malformed_json_reports_position(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"k": 2,\n "alpha": }')
    assert main(["design", str(bad)]) == 1
    assert "line 2, column 11" in capsys.readouterr().err


def test_invalid_spec_exit_1(tmp_path):
    assert main(["design", _write(tmp_path / "s.json", dict(SPEC, alternatives=[0.1, 0.2, 0.3]))]) == 1
    assert main(["design", _write(tmp_path / "s.json", dict(SPEC, k=2))]) == 1


def test_infeasible_exit_2(tmp_path):
    spec = {"alpha": 0.05, "power": 0.9, "alternatives": [0.3, 0.01]}
    assert main(["design", _write(tmp_path / "s.json", spec), "--cap", "500"]) == 2


def test_inconsistent_path_exit_3(tmp_path):
    d = _write(tmp_path / "p.json", POCOCK)
    data = tmp_path / "d.csv"
    data.write_text("1,100,0.3\n2,100,0.1\n")
    assert main(["estimate", d, "--data", str(data)]) == 3
    assert main(["monitor", d, "--z", "2.5,1.0"]) == 3
    data.write_text("1,100,0.1\n")
    assert main(["estimate", d, "--data", str(data)]) == 3


def test_stage_size_mismatch_exit_1(tmp_path):
    d = _write(tmp_path / "p.json", POCOCK)
    data = tmp_path / "d.csv"
    data.write_text("1,90,0.3\n")
    assert main(["estimate", d, "--data", str(data)]) == 1


def test_usage_error_exit_1():
    with pytest.raises(SystemExit) as info:
        main(["oc"])
    assert info.value.code == 1


def test_parse_grid():
    assert parse_grid("0:1:3") == [0.0, 0.5, 1.0]
    assert parse_grid("1, 2,3") == [1.0, 2.0, 3.0]
    assert parse_grid("") == []
    with pytest.raises(InputError):
        parse_grid("0:1")


def test_module_entry_point(tmp_path):
    d = _write(tmp_path / "p.json", POCOCK)
    proc = subprocess.run([sys.executable, "-m", "gsdmix", "monitor", d, "--z", "1.0"], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["decision"] == "continue"


def test_estimators_command(tmp_path):
    d = _write(tmp_path / "p.json", POCOCK)
    out, hist = tmp_path / "t.csv", tmp_path / "h.csv"
    assert main(["estimators", d, "--theta", "0", "--reps", "3000", "--seed", "2", "-o", str(out), "--hist", str(hist), "--bins", "10"]) == 0
    rows = _rows(out)
    assert len(rows) == 2 * 2 * 3
    assert len(_rows(hist)) == 2 * 2 * 10
