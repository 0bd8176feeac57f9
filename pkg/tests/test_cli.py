import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pytest

from freecontrol import __version__
from freecontrol.cli import (EXIT_CHECK, EXIT_NUMERIC, EXIT_OK, EXIT_SCHEMA, KINDS, config_hash, main,
                             validate)

EXPERIMENTS = Path(__file__).resolve().parents[1] / "experiments"


def write(tmp_path, obj, name="exp.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return p


def sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


LQ1 = {"kind": "lq", "seed": 3, "params": {"G0": [[1.0]], "G1": [[0.0]], "beta_c": 0.0, "beta_f": 1.0, "T": 1.0,
                                           "residual_times": 3, "residual_states": 2}}


def test_lq_example_writes_one_third(tmp_path):
    assert main(["run", str(write(tmp_path, LQ1)), "--out", str(tmp_path / "o"), "--threads", "1"]) == EXIT_OK
    rec = json.loads((tmp_path / "o" / "results.json").read_text())
    assert rec["results"]["a0_t0"][0][0] == pytest.approx(1 / 3, abs=1e-10)
    assert rec["seed"] == 3 and rec["version"] == __version__
    assert all(set(c) >= {"value", "tolerance", "passed"} for c in rec["checks"].values())
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["config_hash"] == config_hash(validate(LQ1))
    for name, h in man["files"].items():
        assert sha(tmp_path / "o" / name) == h
    assert (tmp_path / "o" / "riccati.csv").read_text().startswith("t,a0_11,a1_11,e")


def test_double_run_is_bitwise_identical(tmp_path):
    exp = {"kind": "vonneumann", "seed": 5, "params": {"t": 0.0, "T": 1.0, "perturbations": 5, "starts": 3}}
    p = write(tmp_path, exp)
    assert main(["run", str(p), "--out", str(tmp_path / "a"), "--threads", "1"]) == EXIT_OK
    assert main(["run", str(p), "--out", str(tmp_path / "b"), "--threads", "3"]) == EXIT_OK
    for name in ("results.json", "manifest.json", "vonneumann_trajectory.csv"):
        assert sha(tmp_path / "a" / name) == sha(tmp_path / "b" / name)


def test_gue_moment_table(tmp_path):
    exp = {"kind": "gue-moments", "seed": 1, "params": {"n": 200, "samples": 200, "kmax": 4}}
    assert main(["check", str(write(tmp_path, exp)), "--out", str(tmp_path / "o")]) == EXIT_OK
    rec = json.loads((tmp_path / "o" / "results.json").read_text())
    assert [r["catalan"] for r in rec["results"]["table"]] == [1, 1, 2, 5, 14]
    rows = (tmp_path / "o" / "gue_moments.csv").read_text().splitlines()
    assert rows[0] == "k,mean,stderr,catalan" and len(rows) == 6


@pytest.mark.parametrize("bad", [
    "{not json",
    {"kind": "lq", "seed": 0},
    {"kind": "nope", "seed": 0, "params": {}},
    {"kind": "lq", "seed": 0, "params": {"G0": [[1.0]], "G1": [[0.0]]}, "extra": 1},
    {"kind": "lq", "seed": 0, "params": {"G0": [[1.0]], "G1": [[0.0]], "bogus": 2}},
    {"kind": "gue-moments", "seed": -1, "params": {}},
])
def test_schema_errors_exit_2(tmp_path, bad, capsys):
    assert main(["run", str(write(tmp_path, bad)), "--out", str(tmp_path / "o")]) == EXIT_SCHEMA
    assert "invalid experiment" in capsys.readouterr().err


def test_missing_file_exit_2(tmp_path):
    assert main(["run", str(tmp_path / "absent.json")]) == EXIT_SCHEMA


def test_riccati_blow_up_exit_3(tmp_path, capsys):
    code = main(["run", str(EXPERIMENTS / "lq_blowup.json"), "--out", str(tmp_path / "o")])
    assert code == EXIT_NUMERIC
    assert "near t=0.5" in capsys.readouterr().err


def test_check_failure_is_detected(tmp_path, monkeypatch):
    import freecontrol.cli as cli

    def failing(p, seed, threads):
        return {}, {"always": cli._check(1.0, 0.0)}, {}

    monkeypatch.setitem(cli.RUNNERS, "eikonal", failing)
    p = write(tmp_path, {"kind": "eikonal", "seed": 0, "params": {}})
    assert main(["run", str(p), "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["run", "--check", str(p), "--out", str(tmp_path / "b")]) == EXIT_CHECK
    assert main(["check", str(p), "--out", str(tmp_path / "c")]) == EXIT_CHECK


def test_output_directory_precedence(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    exp = {"kind": "eikonal", "seed": 9, "params": {"pairs": 5, "atoms": 5}, "output": str(tmp_path / "cfg")}
    p = write(tmp_path, exp)
    monkeypatch.delenv("FREECONTROL_OUTPUT_DIR", raising=False)
    assert main(["run", str(p)]) == EXIT_OK
    assert (tmp_path / "cfg" / "results.json").exists()
    monkeypatch.setenv("FREECONTROL_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["run", str(p)]) == EXIT_OK
    assert (tmp_path / "env" / "results.json").exists()
    assert main(["run", str(p), "--out", str(tmp_path / "flag")]) == EXIT_OK
    assert (tmp_path / "flag" / "results.json").exists()
    monkeypatch.delenv("FREECONTROL_OUTPUT_DIR")
    del exp["output"]
    assert main(["run", str(write(tmp_path, exp))]) == EXIT_OK
    assert (tmp_path / "runs" / "eikonal-9" / "results.json").exists()


def test_list_and_describe(capsys):
    assert main(["list-experiments"]) == EXIT_OK
    out = capsys.readouterr().out
    for k in KINDS:
        assert k in out
    assert main(["describe", "lq"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "G0" in out and "(required)" in out
    assert main(["describe", "nope"]) == EXIT_SCHEMA


def test_every_shipped_experiment_validates():
    for p in sorted(EXPERIMENTS.glob("*.json")):
        cfg = validate(json.loads(p.read_text()))
        assert cfg["kind"] in KINDS


def test_defaults_are_filled():
    cfg = validate({"kind": "eikonal", "seed": 0, "params": {}})
    assert cfg["params"]["x_grid"]["points"] > 0
    assert validate(LQ1) == validate(json.loads(json.dumps(LQ1)))


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "freecontrol.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for word in ("run", "check", "list-experiments", "describe"):
        assert word in out.stdout
    out = subprocess.run([sys.executable, "-m", "freecontrol.cli", "run", "--help"], capture_output=True, text=True)
    assert "--threads" in out.stdout and "--out" in out.stdout and "--check" in out.stdout
