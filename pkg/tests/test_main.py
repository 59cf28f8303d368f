import json

import pandas as pd
import pytest

from sas_pipeline.main import main


def _synth(tmp_path, kind="xor", seed=1, extra=()):
    out = tmp_path / f"{kind}{seed}"
    assert main(["synth", kind, "--n-train", "40", "--n-val", "20", "--n-test", "100",
                 "--seed", str(seed), "--out", str(out), *extra]) == 0
    return out / "manifest.json"


QUICK = ["--epochs", "20", "--hidden", "8"]


def test_synth_twice_gives_identical_files(tmp_path, capsys):
    a = _synth(tmp_path / "a", "gaussian")
    b = _synth(tmp_path / "b", "gaussian")
    for name in ("edges.tsv", "features.csv", "labels.tsv", "splits.json"):
        assert (a.parent / name).read_bytes() == (b.parent / name).read_bytes()
    assert str(b) in capsys.readouterr().out


def test_synth_defaults_to_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("SAS_OUTPUT_ROOT", str(tmp_path / "root"))
    assert main(["synth", "xor", "--n-test", "50", "--seed", "2"]) == 0
    assert (tmp_path / "root" / "xor-seed2" / "manifest.json").exists()
    assert (tmp_path / "root" / "xor-seed2" / "logs" / "sas.log").exists()


def test_train_writes_result_and_checkpoint(tmp_path):
    manifest = _synth(tmp_path)
    out = tmp_path / "run"
    assert main(["train", str(manifest), "--preset", "sas-a", "--k", "auto",
                 "--out", str(out), *QUICK]) == 0
    doc = json.loads((out / "result.json").read_text())
    assert doc["format_version"] == 1
    assert "chosen_k" in doc and "k_trace" in doc
    assert doc["config"]["propagation"]["k"] == "auto"
    assert 0.0 <= doc["metrics"]["test"]["accuracy"] <= 1.0
    assert (out / "model.json").exists()


def test_train_pure_mlp_has_no_k(tmp_path):
    manifest = _synth(tmp_path)
    out = tmp_path / "mlp"
    assert main(["train", str(manifest), "--steps", "T-T", "--out", str(out), *QUICK]) == 0
    assert "chosen_k" not in json.loads((out / "result.json").read_text())


def test_repeated_train_is_byte_identical_without_timings(tmp_path):
    manifest = _synth(tmp_path)
    args = ["train", str(manifest), "--steps", "T-T-A-A", "--omit-timings", *QUICK]
    assert main([*args, "--out", str(tmp_path / "r1")]) == 0
    assert main([*args, "--out", str(tmp_path / "r2")]) == 0
    first = (tmp_path / "r1" / "result.json").read_bytes()
    assert first == (tmp_path / "r2" / "result.json").read_bytes()
    assert b"timings_ms" not in first


def test_eval_reuses_checkpoint(tmp_path):
    manifest = _synth(tmp_path)
    out = tmp_path / "t"
    assert main(["train", str(manifest), "--steps", "T-T-A", "--out", str(out), *QUICK]) == 0
    assert main(["eval", str(manifest), "--checkpoint", str(out / "model.json"),
                 "--steps", "T-T-A", "--out", str(tmp_path / "e"), *QUICK]) == 0
    trained = json.loads((out / "result.json").read_text())["metrics"]
    evaluated = json.loads((tmp_path / "e" / "eval.json").read_text())["metrics"]
    assert trained == evaluated


@pytest.mark.parametrize("argv", [
    ["--steps", "T-A-T"],
    ["--preset", "nope"],
    ["--steps", "T-T-A", "--k", "3"],
    ["--steps", "T-T", "--dropout", "1.5"],
])
def test_configuration_errors_exit_1(tmp_path, capsys, argv):
    manifest = _synth(tmp_path)
    assert main(["train", str(manifest), *argv, *QUICK]) == 1
    assert "sas_pipeline:" in capsys.readouterr().err


def test_missing_manifest_exits_1(tmp_path, capsys):
    assert main(["train", str(tmp_path / "none.json"), "--steps", "T"]) == 1
    assert "none.json" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exits_2(tmp_path, capsys):
    manifest = _synth(tmp_path)
    assert main(["train", str(manifest), "--steps", "T-T", "--lr", "1e308", *QUICK]) == 2
    assert "diverged" in capsys.readouterr().err


def test_sweep_k_csv_and_pdf(tmp_path):
    manifest = _synth(tmp_path)
    out = tmp_path / "sk"
    assert main(["sweep-k", str(manifest), "--preset", "sas-b", "--k-max", "4",
                 "--seeds", "0", "1", "--pdf", "--out", str(out), *QUICK]) == 0
    curve = pd.read_csv(out / "k_sweep.csv")
    assert len(curve) == 10
    assert curve["k"].tolist()[:5] == [0, 1, 2, 3, 4]
    assert (out / "k_sweep.pdf").stat().st_size > 0
    assert main(["sweep-k", str(manifest), "--preset", "sas-a", "--k-max", "0"]) == 1


def test_inductive_command(tmp_path):
    train_manifest = _synth(tmp_path, seed=1)
    test_dir = tmp_path / "test_graph"
    # a test graph without training nodes
    assert main(["synth", "xor", "--n-train", "1", "--n-test", "80", "--seed", "5",
                 "--out", str(test_dir)]) == 0
    splits = test_dir / "splits.json"
    doc = json.loads(splits.read_text())
    splits.write_text(json.dumps({"train": [], "val": [], "test": doc["train"] + doc["test"]}))
    out = tmp_path / "ind"
    assert main(["inductive", str(train_manifest), str(test_dir / "manifest.json"),
                 "--preset", "sas-a", "--out", str(out), *QUICK]) == 0
    result = json.loads((out / "result.json").read_text())
    assert result["task"] == "inductive"
    assert result["metrics"]["test"]["count"] == 81
    assert main(["inductive", str(train_manifest), str(train_manifest),
                 "--preset", "sas-a", *QUICK]) == 1


def test_table5_small_grid(tmp_path):
    out = tmp_path / "t5"
    assert main(["table5", "--seeds", "0", "--n-train", "20", "--n-test", "40",
                 "--epochs", "5", "--xlsx", "--workers", "2", "--out", str(out)]) == 0
    summary = pd.read_csv(out / "table5.csv")
    assert list(summary.columns) == ["pipeline", "dataset", "mean", "std", "runs"]
    assert summary["pipeline"].tolist() == [
        "Random", "Random", "Optimal", "Optimal",
        "A-A-T", "A-A-T", "A-A-T-T", "A-A-T-T", "A-T-T", "A-T-T",
        "T-T", "T-T", "T-T-A", "T-T-A", "T-T-A-A", "T-T-A-A",
    ]
    assert summary["dataset"].tolist()[:2] == ["xor", "gaussian"]
    assert (out / "table5.xlsx").exists()


def test_run_experiment_manifest(tmp_path):
    manifest = _synth(tmp_path)
    experiment = tmp_path / "exp.json"
    experiment.write_text(json.dumps({
        "dataset": str(manifest.relative_to(tmp_path)),
        "pipelines": [{"preset": "sas-a", "k": 2}, {"steps": "T-T"}],
        "train": {"epochs": 10},
        "seeds": [0, 1],
        "output": "exp_out",
    }))
    assert main(["run", str(experiment), "--omit-timings", "--xlsx"]) == 0
    out = tmp_path / "exp_out"
    cells = pd.read_csv(out / "cells.csv")
    assert cells["spec"].tolist() == ["sas-a:T-T-A-A", "sas-a:T-T-A-A", "T-T", "T-T"]
    assert "train_ms" not in cells.columns
    assert len(json.loads((out / "results.json").read_text())) == 4
    assert pd.read_csv(out / "summary.csv")["runs"].tolist() == [2, 2]
    assert (out / "results.xlsx").exists()


def test_bad_experiment_manifest_exits_1(tmp_path):
    experiment = tmp_path / "bad.json"
    experiment.write_text(json.dumps({"dataset": "x", "pipelines": []}))
    assert main(["run", str(experiment)]) == 1


def test_convert_cora_command(tmp_path):
    content = tmp_path / "c.content"
    content.write_text("".join(f"a{i}\t1\t0\t{'X' if i % 2 else 'Y'}\n" for i in range(20)))
    cites = tmp_path / "c.cites"
    cites.write_text("a0\ta1\na2\ta3\n")
    out = tmp_path / "cora"
    assert main(["convert-cora", str(content), str(cites), "--out", str(out)]) == 0
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["num_nodes"] == 20 and doc["node_ids"] == "node_ids.tsv"
