import json
import subprocess
import sys

import pytest

from kglattice.cli import list_lines, main, run_experiment
from kglattice.errors import ConfigError
from kglattice.experiments import REGISTRY, SCHEMA_VERSION

SMALL = "Nx = 16\nNt = 32\ndx = 0.2\ndt = 0.1\nsources = 8\n"


def test_list_has_one_line_per_experiment(capsys):
    assert main(["list"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == len(REGISTRY) == 10
    assert all(line.split(":")[0] in REGISTRY for line in lines)
    assert lines == list_lines()


def test_list_json(capsys):
    assert main(["list", "--json"]) == 0
    entries = json.loads(capsys.readouterr().out)
    assert [e["name"] for e in entries] == list(REGISTRY)
    assert all(e["anchor"] for e in entries)


def test_unknown_experiment_exits_2(tmp_path, capsys):
    assert main(["run", "nonsense", "--seed", "1", "--out", str(tmp_path)]) == 2
    assert "unknown experiment" in capsys.readouterr().err


def test_unknown_experiment_raises_in_api(tmp_path):
    with pytest.raises(ConfigError):
        run_experiment("nonsense", {}, 1, tmp_path)


def test_seed_is_required(tmp_path, capsys):
    assert main(["run", "star_algebra", "--out", str(tmp_path)]) == 2
    assert "seed" in capsys.readouterr().err


def test_out_is_required(capsys):
    assert main(["run", "star_algebra", "--seed", "1"]) == 2


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(SMALL + "Nxx = 4\n")
    assert main(["run", "green_properties", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path / "o")]) == 2


def test_config_for_another_experiment(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("experiment = timeslice\n")
    assert main(["run", "green_properties", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path)]) == 2


def test_report_schema_and_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(SMALL)
    out = tmp_path / "o"
    code = main(["run", "star_algebra", "--config", str(cfg), "--seed", "3", "--out", str(out)])
    report = json.loads((out / "report.json").read_text())
    assert set(report) == {
        "schema_version", "experiment", "seed", "config", "passed",
        "assertions", "values", "tables", "runtime_seconds",
    }
    assert report["schema_version"] == SCHEMA_VERSION
    assert report["experiment"] == "star_algebra" and report["seed"] == 3
    assert report["config"]["Nx"] == "16"
    assert code == (0 if report["passed"] else 1)
    for a in report["assertions"]:
        assert set(a) == {"name", "value", "bound", "passed"}
    for name in report["tables"]:
        assert (out / name).is_file()
    printed = capsys.readouterr().out.splitlines()
    assert len(printed) == len(report["assertions"])
    assert all(line.startswith(("PASS ", "FAIL ")) for line in printed)


def test_seed_and_out_from_config(tmp_path):
    out = tmp_path / "o"
    cfg = tmp_path / "c.cfg"
    cfg.write_text(SMALL + f"seed = 4\nout = {out}\n")
    main(["run", "timeslice", "--config", str(cfg)])
    assert json.loads((out / "report.json").read_text())["seed"] == 4


def test_failing_tolerance_gives_exit_1(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(SMALL + "tol.timeslice = 0\n")
    assert main(["run", "timeslice", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path / "o")]) == 1


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "kglattice", "list"], capture_output=True, text=True, check=True)
    assert len(res.stdout.strip().splitlines()) == 10
