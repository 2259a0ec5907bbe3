"""Command-line entry point: exit codes, outputs and reproducibility."""

import csv
import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pytest

from uree.cli import EXIT_IO, EXIT_OK, EXIT_SAMPLER, EXIT_VALIDATION, main
from uree.study import bundled_path

QUICK = ["--chains", "2", "--burn-in", "200", "--iterations", "600", "--thin", "2", "--seed", "5"]


def _digest(folder: Path) -> dict:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(folder.iterdir())}


def test_missing_input_fails_cleanly(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["analyze", "--method", "dsl", "--input", str(tmp_path / "nope.json"), "--output", str(out)])
    assert code == EXIT_IO and not out.exists()
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["exit_code"] == EXIT_IO


def test_invalid_dataset_is_validation_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"studies": [{"id": "A", "treatment": {"n": 10, "e": 20},
                                            "control": {"n": 10, "e": 1}}]}))
    assert main(["analyze", "--method", "dsl", "--input", str(bad), "--output", str(tmp_path / "o")]) \
        == EXIT_VALIDATION


def test_unknown_method_is_validation_error(tmp_path):
    assert main(["analyze", "--dataset", "ulmca", "--method", "magic", "--output", str(tmp_path / "o")]) \
        == EXIT_VALIDATION


def test_strict_disjoint_support_is_sampler_error(tmp_path):
    path = tmp_path / "x.json"
    path.write_text(json.dumps({"studies": [{
        "id": "X", "treatment": {"n": 100, "e": 30, "r": 60, "kappa_star": 0.9, "round_digits": 2},
        "control": {"n": 100, "e": 10}}]}))
    code = main(["analyze", "--input", str(path), "--method", "ur-ee", "--strict", *QUICK,
                 "--output", str(tmp_path / "o")])
    assert code == EXIT_SAMPLER and not (tmp_path / "o").exists()


def test_analyze_dsl(tmp_path):
    out = tmp_path / "dsl"
    src = tmp_path / "ulmca.json"
    src.write_bytes(bundled_path("ulmca.json").read_bytes())
    before = src.read_bytes()
    assert main(["analyze", "--method", "dsl", "--input", str(src), "--output", str(out)]) == EXIT_OK
    results = json.loads((out / "results.json").read_text())
    assert [r["method"] for r in results] == ["DSL"]
    assert (out / "forest.svg").exists() and (out / "run.json").exists()
    assert src.read_bytes() == before


def test_analyze_bayes_and_report(tmp_path):
    out = tmp_path / "run"
    code = main(["analyze", "--dataset", "ulmca", "--method", "naive-bayes,ur-ee", *QUICK, "--output", str(out)])
    assert code == EXIT_OK
    names = {p.name for p in out.iterdir()}
    assert {"results.json", "draws_naive-bayes.csv", "draws_ur-ee.csv", "table3.csv", "ee_table.csv",
            "forest.svg", "forest.txt", "run.json"} <= names
    with open(out / "table3.csv") as fh:
        assert [row["parameter"] for row in csv.DictReader(fh)] == ["d", "sigma^2", "m", "tau^2"]
    run = json.loads((out / "run.json").read_text())
    assert run["seed"] == 5 and run["config_hash"]

    rep = tmp_path / "report"
    assert main(["report", "--input", str(out), "--compare", "naive,ur-ee", "--output", str(rep)]) == EXIT_OK
    ess = json.loads((rep / "ess.json").read_text())
    assert ess["n_eff"] == pytest.approx(ess["n_total"] * (ess["sd_naive"] / ess["sd_uree"]) ** 2)
    assert (rep / "l1.csv").exists()


def test_recorded_config_reproduces_output(tmp_path):
    first = tmp_path / "a"
    assert main(["analyze", "--dataset", "ulmca", "--method", "dsl,naive-bayes", *QUICK,
                 "--output", str(first)]) == EXIT_OK
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(json.loads((first / "run.json").read_text())["config"]))
    second = tmp_path / "b"
    assert main(["analyze", "--config", str(cfg), "--output", str(second)]) == EXIT_OK
    assert _digest(first) == _digest(second)


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dataset": "ulmca", "methods": ["ml"], "seed": 1}))
    out = tmp_path / "o"
    assert main(["analyze", "--config", str(cfg), "--method", "dsl", "--output", str(out)]) == EXIT_OK
    assert [r["method"] for r in json.loads((out / "results.json").read_text())] == ["DSL"]


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["analyze", "--config", str(cfg), "--output", str(tmp_path / "o")]) == EXIT_VALIDATION


def test_simulate_twice_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["simulate", "--preset", "appendix-b-config", "--seed", "7", "--output", str(out)]) == EXIT_OK
    assert _digest(a) == _digest(b)
    data = json.loads((a / "dataset.json").read_text())
    assert len(data["studies"]) == 10


def test_density_outputs(tmp_path):
    out = tmp_path / "dens"
    assert main(["density", "--study", "Brener", "--arm", "treatment", "--output", str(out)]) == EXIT_OK
    with open(out / "ur_density.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 401 and all(float(r["density"]) >= 0 for r in rows)
    assert (out / "ee_density.csv").exists() and (out / "ee_table.csv").exists()


def test_density_unknown_study(tmp_path):
    assert main(["density", "--study", "Nobody", "--output", str(tmp_path / "o")]) == EXIT_VALIDATION


def test_report_missing_directory(tmp_path):
    assert main(["report", "--input", str(tmp_path / "none")]) == EXIT_IO


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "uree", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "0.1.0" in proc.stdout
