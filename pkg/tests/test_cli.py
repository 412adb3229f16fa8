from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from dpgc.cli import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, StageError, exit_code, main
from dpgc.dataset import DataError
from dpgc.privacy import BudgetExhausted, ConvergenceError
from helpers import planted_toy


@pytest.fixture(scope="module")
def toy_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    tab, _ = planted_toy(2000, seed=11)
    tab.to_csv(root / "toy.csv")
    (root / "toy.json").write_text(json.dumps(tab.schema.to_dict()))
    return ["--input", str(root / "toy.csv"), "--schema", str(root / "toy.json")]


def test_exit_code_mapping():
    assert exit_code(StageError("ingest", DataError("x"))) == EXIT_DATA
    assert exit_code(FileNotFoundError("x")) == EXIT_DATA
    assert exit_code(ConvergenceError("x")) == EXIT_NUMERIC
    assert exit_code(BudgetExhausted("x")) == EXIT_NUMERIC
    assert exit_code(ValueError("x")) == EXIT_CONFIG


@pytest.mark.parametrize("eps", ["0", "-1", "nan"])
def test_bad_epsilon_rejected_before_reading(tmp_path, capsys, eps):
    missing = str(tmp_path / "nope.csv")
    code = main(["synth", "--epsilon", eps, "--input", missing, "--schema", missing,
                 "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG
    assert "epsilon" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_missing_input_is_data_error(tmp_path, toy_files):
    args = ["synth", "--seed", "1", "--out", str(tmp_path / "o"),
            "--input", str(tmp_path / "nope.csv"), "--schema", toy_files[3]]
    assert main(args) == EXIT_DATA


def test_schema_without_input_is_config_error(tmp_path, toy_files):
    assert main(["synth", "--schema", toy_files[3], "--out", str(tmp_path)]) == EXIT_CONFIG


def test_bad_arguments_exit_one(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["synth", "--out", str(tmp_path), "--epsilon", "lots"])
    assert info.value.code == EXIT_CONFIG


def test_synth_writes_outputs_and_warns(tmp_path, toy_files, capsys):
    out = tmp_path / "rel"
    args = ["synth", "--seed", "3", "--out", str(out), "--decode", "strict", *toy_files]
    assert main(args) == EXIT_OK
    names = {p.name for p in out.iterdir()}
    assert {"synthetic.csv", "config.json", "seed.txt", "plan.json", "versions.json",
            "decoded.csv", "decode.json"} <= names
    assert (out / "seed.txt").read_text().strip() == "3"
    cfg = json.loads((out / "config.json").read_text())
    assert "workers" not in cfg and cfg["epsilon"] == 1.0
    plan = json.loads((out / "plan.json").read_text())
    assert plan["mechanisms_charged"] == 6
    capsys.readouterr()
    assert main(args) == EXIT_OK
    assert "cumulative" in capsys.readouterr().err


def test_seed_recorded_when_omitted(tmp_path, toy_files):
    assert main(["synth", "--out", str(tmp_path), *toy_files]) == EXIT_OK
    assert int((tmp_path / "seed.txt").read_text()) >= 0


def test_zero_noise_needs_both_flags(tmp_path, toy_files):
    base = ["synth", "--seed", "1", "--out", str(tmp_path), "--unsafe-zero-noise", *toy_files]
    assert main(base) == EXIT_CONFIG
    assert main(base + ["--unsafe-diagnostics"]) == EXIT_OK


def test_eval_default_variants(tmp_path, toy_files, capsys):
    assert main(["eval", "--seed", "2", "--out", str(tmp_path), *toy_files]) == EXIT_OK
    doc = json.loads((tmp_path / "report.json").read_text())
    assert [(r["variant"], r["query_class"]) for r in doc["reports"]] == [
        ("dpc", "Q1"), ("dpc", "Q2"), ("Lap", "Q1"), ("Lap", "Q2")]
    assert doc["lap_epsilon"]["Q1"] == doc["plan"]["per_mechanism_epsilon"]
    assert "dpc" in capsys.readouterr().out


def test_eval_unsafe_variants_need_flag(tmp_path, toy_files):
    args = ["eval", "--seed", "2", "--out", str(tmp_path), "--variants", "cop,no-cor", *toy_files]
    assert main(args) == EXIT_CONFIG
    assert main(["eval", "--seed", "2", "--out", str(tmp_path), "--split", *toy_files]) == EXIT_CONFIG
    assert main(args + ["--unsafe-diagnostics", "--split", "--errors-csv"]) == EXIT_OK
    doc = json.loads((tmp_path / "report.json").read_text())
    classes = [r["query_class"] for r in doc["reports"]]
    assert any("|r|>=" in c for c in classes) and doc["non_private_diagnostics"]
    assert (tmp_path / "errors.csv").read_text().startswith("variant,order,query,abs_error")


def test_eval_scores_given_synthetic(tmp_path, toy_files):
    rel = tmp_path / "rel"
    assert main(["synth", "--seed", "4", "--out", str(rel), *toy_files]) == EXIT_OK
    out = tmp_path / "ev"
    args = ["eval", "--seed", "4", "--out", str(out), "--variants", "DPC", "--orders", "1,2,3",
            "--lap-budget", "composed", "--synthetic", str(rel / "synthetic.csv"), *toy_files]
    assert main(args) == EXIT_OK
    doc = json.loads((out / "report.json").read_text())
    assert [r["query_class"] for r in doc["reports"]] == ["Q1", "Q2", "Q3"]


def test_eval_bad_variant_and_orders(tmp_path, toy_files):
    assert main(["eval", "--out", str(tmp_path), "--variants", "magic", *toy_files]) == EXIT_CONFIG
    assert main(["eval", "--out", str(tmp_path), "--orders", "4", *toy_files]) == EXIT_CONFIG


def test_budget_command(capsys):
    assert main(["budget", "--k", "105", "--m", "27"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "0.01478" in out and "378" in out


def test_demo_commands(capsys):
    assert main(["demo", "order-sensitivity", "--n", "5", "--lam", "0.6"]) == EXIT_OK
    assert "0.400000" in capsys.readouterr().out
    assert main(["demo", "sensitivity", "--n", "1000"]) == EXIT_OK
    assert "0.292893" in capsys.readouterr().out


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "dpgc", "budget", "--k", "45"],
                          capture_output=True, text=True, check=False)
    assert done.returncode == 0 and "0.02257" in done.stdout


def test_decoded_csv_is_consistent(tmp_path, toy_files):
    out = tmp_path / "rep"
    assert main(["synth", "--seed", "5", "--out", str(out), "--decode", "repair", *toy_files]) == EXIT_OK
    assert json.loads((out / "decode.json").read_text())["inconsistent_cells"] >= 0
    rows = (out / "decoded.csv").read_text().splitlines()
    assert rows[0].split(",") == ["colour", "size", "grade"]
    assert len(rows) == 2001 and all("" not in r.split(",") for r in rows[1:])
    assert np.loadtxt(out / "synthetic.csv", delimiter=",", skiprows=1).shape == (2000, 9)
