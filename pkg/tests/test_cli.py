import io
import json
import subprocess
import sys

import pytest

from principal_actions import cli, combinatorics
from principal_actions.errors import LemmaViolation


def run(argv, tmp_path=None):
    out, err = io.StringIO(), io.StringIO()
    code = cli.run(argv, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def report(argv):
    code, out, err = run(argv)
    assert code == 0, err
    return json.loads(out)


def test_ring_report_has_config_and_anchor():
    rep = report(["ring", "--poly", "1 - u1 - u2", "--times", "u1^-1", "--power", "2"])
    assert rep["command"] == "ring" and rep["anchor"]
    assert rep["config"]["poly"] == "1 - u1 - u2"
    assert rep["result"]["submultiplicative"]
    assert rep["result"]["l1"] == 3.0


def test_parse_error_is_usage_error_with_caret():
    code, out, err = run(["ring", "--poly", "1 - u1 +* u2"])
    assert code == 1 and out == ""
    lines = err.splitlines()
    assert lines[1].strip() == "1 - u1 +* u2"
    assert lines[2].index("^") - lines[1].index("1") == 8


@pytest.mark.parametrize(
    "argv",
    [[], ["nonsense"], ["sample", "--poly", "3 - u - u^-1"], ["entropy", "--poly", "u - 2"], ["ring"]],
)
def test_usage_errors(argv):
    code, _, err = run(argv)
    assert code == 1 and "usage error" in err


def test_help_exits_zero(capsys):
    assert cli.run(["--help"]) == 0
    assert "u1 .. ud" in capsys.readouterr().out


def test_verify_sauer_shelah_dispatch():
    rep = report(["verify", "--lemma", "sauer-shelah", "--seeds", "500"])
    assert rep["passed"] and rep["result"]["reports"][0]["details"]["runs"][0]["found"] == 500


def test_verify_violation_exits_two(monkeypatch):
    def boom(*a, **k):
        raise LemmaViolation("forced")

    monkeypatch.setattr(combinatorics, "vq_dimension_trials", boom)
    code, out, _ = run(["verify", "--lemma", "vq-dimension"])
    assert code == 2
    assert json.loads(out)["result"]["reports"][0]["details"]["violation"] == "forced"


def test_failed_check_exits_two():
    code, out, _ = run(["decay", "--c", "0.5", "--k-min", "2", "--k-max", "6", "--points", "4"])
    rep = json.loads(out)
    assert code == (0 if rep["result"]["slope_in_band"] else 2)


def test_encode_decode_files(tmp_path):
    enc = tmp_path / "code.json"
    csv_path = tmp_path / "code.csv"
    code, _, err = run(["encode", "--poly", "3 - u - u^-1", "--window", "60", "--seed", "4", "--out", str(enc), "--csv", str(csv_path)])
    assert code == 0, err
    header = csv_path.read_text(encoding="utf-8").splitlines()[0]
    assert header == "g1,symbol"
    rep = report(["decode", "--poly", "3 - u - u^-1", "--input", str(enc)])
    assert rep["result"]["sup_error_vs_input"] < 1e-8


def test_decode_narrow_window_is_usage_error():
    code, _, err = run(["decode", "--poly", "3 - u - u^-1", "--window", "5"])
    assert code == 1 and "inverse support" in err


def test_encode_alphabets():
    rep = report(["encode", "--poly", "u^4-u^3-u^2-u+1", "--kind", "C", "--window", "30", "--seed", "0"])
    assert rep["result"]["alphabet"]["size"] == 5 and rep["result"]["within_alphabet"]


def test_mahler_and_green_and_multiplier_control():
    m = report(["mahler", "--poly", "u^4-u^3-u^2-u+1"])
    assert abs(m["result"]["quadrature"] - m["result"]["jensen"]) < 1e-4
    g = report(["green", "--group", "z3", "--window", "6"])
    assert g["result"]["green"]["l1_error"] is None
    assert 1.3 < g["result"]["green"]["note"]["value_at_identity"] < g["result"]["oracle"]
    c = report(["multiplier", "--control", "--K", "5"])
    assert c["result"]["max_residual"] < 1e-9


def test_homoclinic_expansive_route():
    rep = report(["homoclinic", "--poly", "3 - u - u^-1"])
    assert rep["result"]["residual_l1"] < 1e-10


def test_entropy_csv(tmp_path):
    path = tmp_path / "h.csv"
    code, _, _ = run(["entropy", "--poly", "u - 2", "--n", "7", "--seed", "0", "--csv", str(path)])
    rows = path.read_text(encoding="utf-8").splitlines()
    assert code == 0 and rows[0] == "n,eps,estimate" and len(rows) == 7


def test_separate_report():
    rep = report(["separate", "--poly", "1 - u1 - u2", "--horizon", "8", "--pairs", "50", "--seed", "2"])
    assert rep["result"]["report"]["details"]["coinciding"] == 0


@pytest.mark.parametrize(
    "argv",
    [
        ["sample", "--poly", "1 - u1 - u2", "--window", "4", "--seed", "11"],
        ["entropy", "--poly", "u - 2", "--n", "6", "--seed", "3"],
        ["separate", "--poly", "u^4-u^3-u^2-u+1", "--kind", "C", "--pairs", "100", "--seed", "1"],
    ],
)
def test_reports_are_byte_identical(argv, tmp_path, monkeypatch):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(argv + ["--out", str(a)])[0] == 0
    monkeypatch.setenv(cli.THREADS_ENV, "1")
    assert run(argv + ["--out", str(b)])[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_console_script_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "principal_actions.cli", "ring", "--poly", "2 - u"], capture_output=True, text=True
    )
    assert proc.returncode == 0 and json.loads(proc.stdout)["result"]["l1"] == 3.0


def test_clean_replaces_non_finite():
    assert cli.dumps({"a": float("inf"), "b": float("nan")}) == '{\n  "a": null,\n  "b": null\n}\n'
