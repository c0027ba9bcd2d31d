import json
import subprocess
import sys

from rbsdelab.cli import main


def test_list(capsys):
    assert main(["list"]) == 0
    assert "counterexample" in capsys.readouterr().out.split()


def test_run_writes_reports(tmp_path, capsys):
    assert main(["run", "counterexample", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "OK counterexample" in out
    assert (tmp_path / "checks.csv").read_text().startswith("check,value,threshold,pass")


def test_sweep(tmp_path):
    assert main(["sweep", "american_put_binomial", "--out", str(tmp_path), "-q"]) == 0
    assert (tmp_path / "convergence.csv").exists()


def test_check_suite(tmp_path, capsys):
    out = tmp_path / "suite.csv"
    assert main(["check", "counterexample", "--out", str(out), "-q"]) == 0
    assert out.read_text().splitlines()[0] == "check,instances,worst,pass"
    assert "OK counterexample" in capsys.readouterr().out


def test_failing_check_exits_one(tmp_path, capsys):
    # L_0 = 2 binds, so the penalized value at n = 2 still misses by 1/3
    cfg = {"name": "tight", "space": {"constructor": "counterexample"},
           "data": {"xi": 1.0, "L": [[2, 2], [0, 0], [0, 0]]},
           "generator": {"name": "zero"},
           "sweep": {"schedule": [[1, 0], [2, 0]], "tolerance": 1e-9}}
    path = tmp_path / "tight.json"
    path.write_text(json.dumps(cfg))
    assert main(["sweep", str(path), "--out", str(tmp_path / "o"), "-q"]) == 1
    assert "FAIL tight: sweep_last_error" in capsys.readouterr().out


def test_bad_inputs_exit_two(tmp_path, capsys):
    assert main(["run", "no_such_thing"]) == 2
    assert main(["check", "no_such_suite"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err


def test_solver_error_exits_one(tmp_path, capsys):
    cfg = {"name": "stiff", "space": {"constructor": "binomial", "N": 2, "T": 2.0},
           "data": {"xi": 1.0}, "generator": {"name": "linear_y", "params": {"a": 1.0}}}
    path = tmp_path / "stiff.json"
    path.write_text(json.dumps(cfg))
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "StepSizeTooLarge" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rbsdelab", "list"], capture_output=True,
                          text=True, check=False)
    assert proc.returncode == 0 and "counterexample" in proc.stdout
