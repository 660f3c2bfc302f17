"""Command-line workflows: generate, run, sweep, report, exit codes."""

import json

import numpy as np
import pytest

import fedsem as fs
from fedsem.cli import main

BASE_CONFIG = """
[dataset]
source = synthetic
samples = 120
classes = 3
dim = 4
separation = 3.0

[partition]
scheme = iid
num_clients = 6

[labels]
labeled_fraction = 0.5

[federation]
clients_per_round = 3
rounds = 4
local_epochs = 1
learning_rate = 0.05
batch_size = 8
solver = sgd
master_seed = 9
hidden_dims = 8

[fedsem]

[output]
directory = {out}
formats = csv,json
"""


@pytest.fixture
def write_config(tmp_path):
    def _write(out_dir="run-out", extra="", name="exp.ini"):
        path = tmp_path / name
        path.write_text(BASE_CONFIG.format(out=tmp_path / out_dir) + extra)
        return path

    return _write


class TestGenerate:
    def test_writes_csv_and_metadata(self, tmp_path, capsys):
        out = tmp_path / "data.csv"
        code = main([
            "generate", "--classes", "4", "--samples", "400", "--dim", "8",
            "--sep", "3.0", "--seed", "42", "--out", str(out),
        ])
        assert code == 0
        assert out.exists()
        meta = json.loads((tmp_path / "data.csv.meta.json").read_text())
        assert meta["n"] == 400 and meta["num_classes"] == 4 and meta["seed"] == 42
        assert len(out.read_text().splitlines()) == 400

    def test_rerun_byte_identical(self, tmp_path):
        args = ["generate", "--classes", "3", "--samples", "60", "--dim", "4",
                "--sep", "2.0", "--seed", "1", "--quiet", "--out"]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(args + [str(a)]) == 0
        assert main(args + [str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        assert (tmp_path / "a.csv.meta.json").read_text().replace("a.csv", "") == (
            tmp_path / "b.csv.meta.json"
        ).read_text().replace("b.csv", "")

    def test_metadata_matches_distinct_labels(self, tmp_path):
        out = tmp_path / "d.csv"
        main(["generate", "--classes", "5", "--samples", "100", "--dim", "4",
              "--sep", "2.0", "--seed", "3", "--quiet", "--out", str(out)])
        meta = json.loads((tmp_path / "d.csv.meta.json").read_text())
        labels = {int(line.rsplit(",", 1)[1]) for line in out.read_text().splitlines()}
        assert len(labels) == meta["num_classes"]

    def test_bad_parameters_exit_2(self, tmp_path, capsys):
        code = main(["generate", "--classes", "1", "--samples", "10", "--dim", "4",
                     "--sep", "2.0", "--out", str(tmp_path / "x.csv")])
        assert code == 2
        assert "configuration error" in capsys.readouterr().err


class TestRun:
    def test_successful_run_writes_outputs(self, write_config, tmp_path, capsys):
        config = write_config()
        assert main(["run", "--config", str(config)]) == 0
        out = tmp_path / "run-out"
        for name in ("history.csv", "history.json", "summary.txt", "result.json"):
            assert (out / name).exists()
        payload = json.loads((out / "result.json").read_text())
        assert payload["mode"] == "fedsem"
        assert payload["phase1_rounds"] == 2 and payload["phase2_rounds"] == 2
        assert "half-up" in (out / "summary.txt").read_text()
        assert "outputs in" in capsys.readouterr().out

    def test_missing_required_key_exit_2(self, tmp_path, capsys):
        path = tmp_path / "broken.ini"
        path.write_text("[federation]\nlocal_epochs = 2\n")
        assert main(["run", "--config", str(path)]) == 2
        assert "federation.rounds" in capsys.readouterr().err

    def test_unknown_key_exit_2(self, tmp_path, capsys):
        path = tmp_path / "typo.ini"
        path.write_text("[federation]\nrounds = 4\nlearning_rte = 0.1\n")
        assert main(["run", "--config", str(path)]) == 2
        assert "learning_rte" in capsys.readouterr().err

    def test_override_beats_file(self, write_config, tmp_path):
        config = write_config()
        assert main([
            "run", "--config", str(config), "--quiet",
            "--override", "federation.rounds=6",
        ]) == 0
        history = (tmp_path / "run-out" / "history.csv").read_text().splitlines()
        assert len(history) == 1 + 6

    def test_reruns_byte_identical(self, write_config, tmp_path):
        config = write_config()
        main(["run", "--config", str(config), "--quiet"])
        first_result = (tmp_path / "run-out" / "result.json").read_bytes()
        first_history = (tmp_path / "run-out" / "history.csv").read_bytes()
        main(["run", "--config", str(config), "--quiet"])
        assert (tmp_path / "run-out" / "result.json").read_bytes() == first_result
        assert (tmp_path / "run-out" / "history.csv").read_bytes() == first_history

    def test_parallel_clients_change_nothing(self, write_config, tmp_path):
        config = write_config()
        main(["run", "--config", str(config), "--quiet"])
        serial = (tmp_path / "run-out" / "result.json").read_bytes()
        main(["run", "--config", str(config), "--quiet",
              "--override", "federation.parallel_clients=4"])
        assert (tmp_path / "run-out" / "result.json").read_bytes() == serial

    def test_runtime_error_exit_1(self, tmp_path, capsys):
        path = tmp_path / "csvless.ini"
        path.write_text(
            "[dataset]\nsource = csv\npath = does-not-exist.csv\nclasses = 3\n"
            "\n[federation]\nrounds = 4\n"
            f"\n[output]\ndirectory = {tmp_path / 'o'}\n"
        )
        assert main(["run", "--config", str(path)]) == 1
        assert "data setup" in capsys.readouterr().err

    def test_outputs_confined_to_directory(self, write_config, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        config = write_config(out_dir="nested/run")
        main(["run", "--config", str(config), "--quiet"])
        written = {p.relative_to(tmp_path).parts[0] for p in tmp_path.rglob("*") if p.is_file()}
        assert written == {"exp.ini", "nested"}

    def test_fedsem_out_env_roots_relative_dirs(self, write_config, tmp_path, monkeypatch):
        root = tmp_path / "envroot"
        monkeypatch.setenv("FEDSEM_OUT", str(root))
        path = tmp_path / "rel.ini"
        path.write_text(BASE_CONFIG.format(out="relative-dir"))
        assert main(["run", "--config", str(path), "--quiet"]) == 0
        assert (root / "relative-dir" / "result.json").exists()

    def test_out_flag_overrides_directory(self, write_config, tmp_path):
        config = write_config()
        target = tmp_path / "elsewhere"
        main(["run", "--config", str(config), "--quiet", "--out", str(target)])
        assert (target / "result.json").exists()

    def test_default_directory_when_output_section_absent(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        monkeypatch.delenv("FEDSEM_OUT", raising=False)
        path = tmp_path / "noout.ini"
        text = BASE_CONFIG.format(out="ignored")
        text = text[: text.index("[output]")]
        path.write_text(text)
        assert main(["run", "--config", str(path), "--quiet"]) == 0
        assert (tmp_path / "fedsem-out" / "result.json").exists()

    def test_seed_flag_changes_results(self, write_config, tmp_path):
        config = write_config()
        main(["run", "--config", str(config), "--quiet"])
        base = json.loads((tmp_path / "run-out" / "result.json").read_text())
        main(["run", "--config", str(config), "--quiet", "--seed", "123"])
        reseeded = json.loads((tmp_path / "run-out" / "result.json").read_text())
        assert reseeded["model_phase2_sha256"] != base["model_phase2_sha256"]

    def test_plain_fedavg_without_fedsem_section(self, tmp_path):
        path = tmp_path / "avg.ini"
        text = BASE_CONFIG.format(out=tmp_path / "avg-out").replace("[fedsem]\n", "")
        path.write_text(text)
        assert main(["run", "--config", str(path), "--quiet"]) == 0
        payload = json.loads((tmp_path / "avg-out" / "result.json").read_text())
        assert payload["mode"] == "fedavg"
        assert "best_accuracy" in payload


class TestSweep:
    def test_two_by_one_grid(self, write_config, tmp_path):
        config = write_config(out_dir="sweep-out")
        code = main([
            "sweep", "--config", str(config), "--quiet",
            "--axis", "labeled_fraction=0.2,0.3", "--axis", "epochs=1",
        ])
        assert code == 0
        lines = (tmp_path / "sweep-out" / "sweep.csv").read_text().splitlines()
        assert lines[0] == "labeled_percent,rounds,epochs,seed,accuracy_phase1,accuracy_phase2,gain"
        assert len(lines) == 3
        assert lines[1].startswith("20,") and lines[2].startswith("30,")

    def test_cell_matches_individual_run(self, write_config, tmp_path):
        config = write_config(out_dir="sweep-out")
        main(["sweep", "--config", str(config), "--quiet", "--axis", "labeled_fraction=0.3"])
        row = (tmp_path / "sweep-out" / "sweep.csv").read_text().splitlines()[1].split(",")
        main(["run", "--config", str(config), "--quiet",
              "--override", "labels.labeled_fraction=0.3",
              "--out", str(tmp_path / "single")])
        payload = json.loads((tmp_path / "single" / "result.json").read_text())
        assert float(row[4]) == pytest.approx(payload["accuracy_phase1"], abs=5e-7)
        assert float(row[5]) == pytest.approx(payload["accuracy_phase2"], abs=5e-7)
        assert float(row[6]) == pytest.approx(payload["gain"], abs=5e-7)

    def test_cell_outputs_live_in_cell_directories(self, write_config, tmp_path):
        config = write_config(out_dir="sweep-out")
        main(["sweep", "--config", str(config), "--quiet", "--axis", "epochs=1,2"])
        cells = tmp_path / "sweep-out" / "cells"
        assert (cells / "epochs-1" / "result.json").exists()
        assert (cells / "epochs-2" / "result.json").exists()

    def test_rerun_byte_identical(self, write_config, tmp_path):
        config = write_config(out_dir="sweep-out")
        args = ["sweep", "--config", str(config), "--quiet", "--axis", "rounds=4,6"]
        main(args)
        first = (tmp_path / "sweep-out" / "sweep.csv").read_bytes()
        main(args)
        assert (tmp_path / "sweep-out" / "sweep.csv").read_bytes() == first

    def test_no_axes_exit_2(self, write_config, capsys):
        assert main(["sweep", "--config", str(write_config()), "--quiet"]) == 2
        assert "--axis" in capsys.readouterr().err

    def test_empty_axis_exit_2(self, write_config, capsys):
        code = main(["sweep", "--config", str(write_config()), "--quiet", "--axis", "epochs="])
        assert code == 2

    def test_unknown_axis_exit_2(self, write_config, capsys):
        code = main([
            "sweep", "--config", str(write_config()), "--quiet", "--axis", "batch=4,8",
        ])
        assert code == 2

    def test_sweep_without_fedsem_exit_2(self, tmp_path, capsys):
        path = tmp_path / "plain.ini"
        path.write_text(BASE_CONFIG.format(out=tmp_path / "o").replace("[fedsem]\n", ""))
        assert main(["sweep", "--config", str(path), "--quiet", "--axis", "epochs=1"]) == 2


class TestReport:
    def test_rerenders_summary(self, write_config, tmp_path, capsys):
        config = write_config()
        main(["run", "--config", str(config), "--quiet"])
        out = tmp_path / "run-out"
        original = (out / "summary.txt").read_bytes()
        (out / "summary.txt").unlink()
        assert main(["report", "--result", str(out)]) == 0
        assert (out / "summary.txt").read_bytes() == original
        assert "half-up" in capsys.readouterr().out

    def test_missing_result_exit_1(self, tmp_path, capsys):
        assert main(["report", "--result", str(tmp_path / "nope")]) == 1


class TestDatasetFileWorkflow:
    def test_generated_csv_feeds_a_run(self, tmp_path):
        data = tmp_path / "blob.csv"
        main(["generate", "--classes", "3", "--samples", "120", "--dim", "4",
              "--sep", "3.0", "--seed", "9", "--quiet", "--out", str(data)])
        config = tmp_path / "csvrun.ini"
        config.write_text(
            f"[dataset]\nsource = csv\npath = {data}\nclasses = 3\n\n"
            "[partition]\nscheme = iid\nnum_clients = 6\n\n"
            "[federation]\nclients_per_round = 3\nrounds = 2\nlocal_epochs = 1\n"
            "learning_rate = 0.05\nsolver = sgd\nmaster_seed = 9\nhidden_dims = 8\n\n"
            f"[output]\ndirectory = {tmp_path / 'csv-out'}\n"
        )
        assert main(["run", "--config", str(config), "--quiet"]) == 0
        assert (tmp_path / "csv-out" / "result.json").exists()
