import csv
import io
import json
import subprocess
import sys

import pytest

from kvnlab.cli import main
from kvnlab.fieldio import read_field


def test_missing_scenario_file_is_usage_error(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    assert "scenario" in capsys.readouterr().err.lower()


@pytest.mark.parametrize("argv", [[], ["bogus"], ["run"], ["uncertainty", "--pair", "q"],
                                  ["run", "no-such-builtin"]])
def test_usage_errors(argv):
    assert main(argv) == 2


def test_schema_error_is_usage_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"name": "x", "grid": {"n_q": 7}}))
    assert main(["run", str(bad)]) == 2


def test_run_builtin_writes_report(tmp_path, capsys):
    out = tmp_path / "hr"
    assert main(["run", "harmonic-return", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["metrics"]["fidelity"] >= 1 - 1e-4
    assert read_field(out / "final_amplitude.kvnf").values.shape == (128, 128)
    assert "PASS" in capsys.readouterr().out


def test_run_scenario_file_with_overrides(tmp_path):
    from kvnlab import scenarios

    s = scenarios.get_builtin("harmonic-return")
    s["analyses"] = [{"type": "fidelity", "min": 0.5}]
    path = tmp_path / "s.json"
    path.write_text(json.dumps(s))
    out = tmp_path / "o"
    assert main(["run", str(path), "--out", str(out), "--steps", "10", "--dt", "0.01"]) == 0
    assert json.loads((out / "report.json").read_text())["metrics"]["t_final"] == pytest.approx(0.1)


def test_run_violation_exit_code(tmp_path):
    from kvnlab import scenarios

    s = scenarios.get_builtin("harmonic-return")
    s["schedule"]["steps"] = 500
    path = tmp_path / "s.json"
    path.write_text(json.dumps(s))
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 1


def test_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert "harmonic-return" in out and "moyal-residual" in out


def test_verify_clean_build(capsys):
    code = main(["verify"])
    out = capsys.readouterr().out
    assert "suite" in out and "harmonic-return" in out
    assert code == 0, out


def test_uncertainty_csv(tmp_path, capsys):
    assert main(["uncertainty", "--n", "64", "--out", str(tmp_path), "--pair", "q,pt", "--pair", "q,p"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["scenario", "label", "sigma_a", "sigma_b", "bound", "slack"]
    assert len(rows) == 3
    sigma_a, sigma_b, bound = map(float, rows[1][2:5])
    assert sigma_a * sigma_b >= bound - 1e-6


def test_wigner_outputs(tmp_path, capsys):
    assert main(["wigner", "--state", "cat", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert abs(summary["integral"] - 1) <= 1e-6
    assert summary["partial_q_pt"]["negativity_volume"] > 0.05
    assert read_field(tmp_path / "wigner.kvnf").values.ndim == 4
    header = (tmp_path / "partial_q_pt.csv").read_text().splitlines()[0]
    assert header == "q,pt,value"
    assert (tmp_path / "slice_pt_qt_at_origin.csv").exists()
    assert json.loads(capsys.readouterr().out)["negativity_volume"] > 0


def test_wigner_memory_guard(tmp_path):
    assert main(["wigner", "--n", "64", "--out", str(tmp_path)]) == 1


def test_evolve(tmp_path):
    assert main(["evolve", "--hamiltonian", "free", "--steps", "5", "--checkpoint-every", "5",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "checkpoints" / "step_000005.kvnf").exists()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "kvnlab", "list"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "cat-negativity" in proc.stdout
