import csv
import io
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from test_oracles import FEIGENBAUM_INV_LAMBDA
from renorm.cli import SCAN_COLUMNS, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_solve_feigenbaum(capsys):
    code, out, _ = run(capsys, "solve", "--p", "1", "--nu", "1", "--r", "2")
    assert code == 0
    d = json.loads(out)
    assert abs(1 / d["lambda"] - FEIGENBAUM_INV_LAMBDA) < 1e-9
    assert d["trace"]["lam"][-1] == d["lambda"]


def test_solve_output_is_deterministic(capsys):
    a = run(capsys, "solve", "--p", "2", "--nu", "1", "--r", "2")[1]
    b = run(capsys, "solve", "--p", "2", "--nu", "1", "--r", "2")[1]
    assert a == b


def test_solve_csv_row(capsys):
    code, out, _ = run(capsys, "solve", "--p", "1", "--nu", "1", "--r", "2", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and "\r" not in out
    assert list(rows[0]) == SCAN_COLUMNS and rows[0]["status"] == "ok"


def test_solve_infeasible_exit_2(capsys):
    code, out, err = run(capsys, "solve", "--p", "3", "--nu", "0.5", "--r", "4")
    assert code == 2 and out == ""
    e = json.loads(err)
    assert e["error"] == "FeasibilityError" and e["payload"]["margin"] == 0


def test_solve_affine_test_mode(capsys):
    code, out, _ = run(capsys, "solve", "--p", "1", "--nu", "2", "--r", "1", "--test-affine")
    assert code == 0
    assert json.loads(out)["lambda"] == pytest.approx((5 ** 0.5 - 1) / 2, abs=1e-10)


@pytest.mark.parametrize("argv", [[], ["solve"], ["solve", "--p", "1"], ["scan", "--r-min", "3", "--r-max", "2"],
                                  ["scan", "--r", ""], ["verify"], ["solve", "--p", "1", "--r", "2", "--nu", "1",
                                                                    "--damping", "0"]])
def test_usage_errors_exit_1(capsys, argv):
    assert run(capsys, *argv)[0] == 1


def test_verify_bundle_roundtrip(capsys, tmp_path):
    path = tmp_path / "b.json"
    assert run(capsys, "solve", "--p", "1", "--nu", "1", "--r", "2", "-o", str(path))[0] == 0
    code, out, _ = run(capsys, "verify", "--bundle", str(path))
    assert code == 0 and json.loads(out)["passed"]

    d = json.loads(path.read_text())
    d["lambda"] *= 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(d))
    code, out, err = run(capsys, "verify", "--bundle", str(bad))
    assert code == 4
    assert not json.loads(out)["passed"] and json.loads(err)["payload"]["failures"]

    corrupt = tmp_path / "corrupt.json"
    corrupt.write_text("{\"p\": 1")
    assert run(capsys, "verify", "--bundle", str(corrupt))[0] == 1


def test_verify_log_inequality_sweep(capsys):
    code, out, _ = run(capsys, "verify", "--appendix")
    d = json.loads(out)
    assert code == 0 and d["appendix"]["points"] == 10_000 and d["appendix"]["min_margin"] > 0


def test_verify_includes_commutativity(capsys):
    code, out, _ = run(capsys, "verify", "--p", "2", "--r", "2", "--nu", "2")
    d = json.loads(out)
    assert code == 0 and d["lanford"]["passed"]


def test_scan_lambda_increases_with_r(capsys):
    code, out, _ = run(capsys, "scan", "--p", "1", "--nu", "1", "--r", "2,3,4,5", "--format", "json")
    rows = json.loads(out)
    assert code == 0 and all(row["status"] == "ok" for row in rows)
    lam = [row["lambda"] for row in rows]
    assert np.all(np.diff(lam) > 0)


def test_scan_marks_infeasible_rows(capsys, monkeypatch):
    monkeypatch.setenv("RENORM_JOBS", "2")
    code, out, _ = run(capsys, "scan", "--p", "3", "--nu", "0.5", "--r", "4,4.5")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0
    assert [row["status"] for row in rows] == ["infeasible", "ok"]
    assert rows[0]["lambda"] == ""


def test_scan_all_failed_exit_3(capsys):
    code, out, _ = run(capsys, "scan", "--p", "1", "--nu", "1", "--r", "2", "--max-iter", "1")
    assert code == 3
    assert "nonconvergence" in out


def test_asym_regime_exit_2(capsys):
    assert run(capsys, "asym", "--nu", "2")[0] == 2
    assert run(capsys, "asym", "--p", "1")[0] == 2


def test_asym_single_point(capsys):
    code, out, _ = run(capsys, "asym", "--r", "10")
    d = json.loads(out)
    assert code == 0 and d["passed"] and d["points"][0]["summary"]["r"] == 10


def test_figures(capsys, tmp_path):
    pytest.importorskip("matplotlib")
    png = tmp_path / "scan.png"
    assert run(capsys, "scan", "--r", "2,3", "--figures", str(png))[0] == 0
    assert png.read_bytes()[:4] == b"\x89PNG"


@pytest.mark.skipif(shutil.which("renorm") is None, reason="console script not on PATH")
def test_console_script():
    res = subprocess.run(["renorm", "solve", "--p", "3", "--nu", "0.5", "--r", "4"], capture_output=True, text=True)
    assert res.returncode == 2


def test_module_entry():
    res = subprocess.run([sys.executable, "-m", "renorm.cli", "verify", "--appendix", "--appendix-points", "100"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["passed"]
