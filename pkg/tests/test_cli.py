import subprocess
import sys

import pytest

from robustpost import cli, simulation as sim
from robustpost.verify import CheckResult

CONFIG = """\
p: 20
nReps: 2
truePrior: [t]
methods: [laplace, rnormal, mle]
baseSeed: 11
n_scans: 80
burn_in: 20
chains:
  rnormal: {n_scans: 60}
"""


def write(tmp_path, text, name="c.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_simulate_table_boxplot_pipeline(tmp_path, capsys):
    cfg = write(tmp_path, CONFIG)
    out = str(tmp_path / "run")
    assert cli.main(["simulate", "--config", cfg, "--out", out, "--quiet"]) == 0
    assert len(sim.read_records(out)) == 2
    capsys.readouterr()

    assert cli.main(["table", "--in", out]) == 0
    grid = capsys.readouterr().out.splitlines()
    assert grid[0].split()[:2] == ["i", "prior"]
    assert "R Normal" in grid[0] and "MLE" in grid[0]
    assert [line.split()[:2] for line in grid[2:]] == [["1", "t"], ["2", "t"], ["3", "t"]]
    assert (tmp_path / "run" / "mse_table.csv").read_text().startswith("i,prior,method,mse,nErrors")

    assert cli.main(["table", "--in", out, "--i-max", "1", "--csv", str(tmp_path / "t1.csv")]) == 0
    assert len((tmp_path / "t1.csv").read_text().splitlines()) == 1 + 3

    assert cli.main(["boxplot", "--in", out]) == 0
    rows = (tmp_path / "run" / "boxplot.csv").read_text().splitlines()
    assert rows[0] == "rep,side,prior,method,error" and len(rows) == 1 + 2 * 2 * 3
    assert (tmp_path / "run" / "boxplot_summary.csv").exists()


def test_simulate_progress_and_resume(tmp_path, capsys):
    cfg = write(tmp_path, CONFIG)
    out = str(tmp_path / "run")
    assert cli.main(["simulate", "--config", cfg, "--out", out, "--reps", "1"]) == 0
    text = capsys.readouterr().out
    assert "[t rep 0]" in text and "Laplace" in text
    # a different rep count is a different configuration
    assert cli.main(["simulate", "--config", cfg, "--out", out, "--reps", "2"]) == 1
    assert "different configuration" in capsys.readouterr().err


def test_preset_with_overrides(tmp_path):
    cfg = write(tmp_path, "p: 12\nmethods: [mle]\n")
    out = tmp_path / "run"
    assert cli.main(["simulate", "--preset", "large", "--config", cfg, "--reps", "3", "--seed", "4",
                     "--out", str(out), "--quiet"]) == 0
    recs = sim.read_records(out)
    assert len(recs) == 3 * 3 and {r["p"] for r in recs} == {12}
    assert recs[0]["seed"] == [4, 0]


def test_load_config_preset_only():
    c = cli.load_config(None, "large")
    assert (c.p, c.n_reps) == (2000, 100)


@pytest.mark.parametrize("text, line", [
    ("p: 20\nmethods: [normal]\nnReps: -1\n", 3),
    ("p: 20\n\nmethods: [normal, bogus]\n", 3),
    ("truePrior: t\np: 4\n", 2),
    ("p: 20\nfoo: 1\n", 2),
    ("p: 20\nmethods: [normal\nnReps: 2\n", 3),
    ("- just\n- a list\n", 1),
])
def test_config_errors_name_the_line(tmp_path, capsys, text, line):
    cfg = write(tmp_path, text)
    assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ") and f"line {line}:" in err and "c.yaml" in err


def test_table_on_empty_directory(tmp_path, capsys):
    assert cli.main(["table", "--in", str(tmp_path)]) == 1
    assert "no records found" in capsys.readouterr().err
    assert cli.main(["boxplot", "--in", str(tmp_path)]) == 1


def test_usage_errors(tmp_path, capsys):
    assert cli.main([]) == 1
    assert cli.main(["simulate", "--out", str(tmp_path)]) == 1
    assert "--config" in capsys.readouterr().err
    assert cli.main(["simulate", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == 1
    assert cli.main(["--help"]) == 0


def test_verify_exit_codes(monkeypatch, capsys):
    import robustpost.verify as v

    monkeypatch.setattr(v, "run_checks", lambda quick: [CheckResult("a", True, "ok", 0.0)])
    assert cli.main(["verify", "--quick"]) == 0
    monkeypatch.setattr(v, "run_checks", lambda quick: [CheckResult("a", True, "", 0.0), CheckResult("b", False, "", 0.0)])
    assert cli.main(["verify"]) == 2
    out = capsys.readouterr().out
    assert "FAIL  b" in out and "1/2 checks passed" in out


def test_verify_quick_real():
    proc = subprocess.run([sys.executable, "-m", "robustpost", "verify", "--quick"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert "checks passed" in proc.stdout and "FAIL" not in proc.stdout


def test_readme_config_example_loads(tmp_path):
    from pathlib import Path

    readme = (Path(__file__).resolve().parents[1] / "README.md").read_text()
    block = readme.split("```yaml\n", 1)[1].split("```", 1)[0]
    cfg = cli.load_config(write(tmp_path, block))
    assert cfg.chain_settings("dp") == {"n_scans": 3000, "burn_in": 500, "inner_mh_sweeps": 1}
    assert cfg.methods == sim.METHODS
