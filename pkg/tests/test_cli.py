import csv
import json

import pytest

import src.cli as cli
from src.partition import PartitionedDataset

TRAIN_FLAGS = [
    "--rounds", "2", "--cohort", "2", "--tau", "1", "--batch-size", "2",
    "--vocab", "16", "--seq-len", "9",
]


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def _rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def _synth(capsys, out, split="train", clients=6):
    code, _, err = run(
        capsys, "synth", "--out", out, "--clients", clients, "--vocab", 16, "--split", split,
        "--examples-per-client", 2, "--words-per-example", 30,
    )
    assert code == 0, err
    return out


@pytest.fixture
def synthetic_data(tmp_path, capsys):
    return _synth(capsys, tmp_path / "train")


@pytest.fixture
def checkpoint(tmp_path, capsys, synthetic_data):
    out = tmp_path / "trained"
    code, _, err = run(capsys, "train", "--data", synthetic_data, "--out", out, *TRAIN_FLAGS)
    assert code == 0, err
    return out / "checkpoint.bin"


class TestSynth:
    """grouper synth"""

    def test_writes_dataset_and_config_echo(self, tmp_path, capsys):
        """Test that synth writes the dataset and the resolved config"""
        out = _synth(capsys, tmp_path / "synth", clients=4)
        dataset = PartitionedDataset.open(out)
        assert dataset.num_groups == 4
        assert dataset.num_examples == 8

        echo = json.loads((out / "config.json").read_text())
        assert echo["clients"] == 4
        assert echo["vocab_size"] == 16
        assert echo["seed"] == 0

    def test_json_summary(self, tmp_path, capsys):
        """Test JSON output"""
        code, out, _ = run(
            capsys, "synth", "--out", tmp_path / "s", "--clients", 3, "--vocab", 8,
            "--examples-per-client", 1, "--words-per-example", 5, "--json",
        )
        assert code == 0
        assert json.loads(out)["groups"] == 3

    def test_pretty_summary(self, tmp_path, capsys):
        """Test human-readable output"""
        code, out, _ = run(
            capsys, "synth", "--out", tmp_path / "s", "--clients", 3, "--vocab", 8,
            "--examples-per-client", 1, "--words-per-example", 5,
        )
        assert code == 0
        assert "- groups: 3" in out


class TestConfigResolution:
    """--config files and flag precedence"""

    def test_flags_override_config_file(self, tmp_path, capsys):
        """Test that flags win over the config file"""
        config = tmp_path / "synth.json"
        config.write_text(json.dumps(
            {"clients": 5, "vocab_size": 16, "examples_per_client": 1, "words_per_example": 8}
        ))
        out = tmp_path / "s"
        code, _, err = run(capsys, "synth", "--config", config, "--clients", 3, "--out", out)
        assert code == 0, err
        assert PartitionedDataset.open(out).num_groups == 3
        echo = json.loads((out / "config.json").read_text())
        assert echo["clients"] == 3
        assert echo["words_per_example"] == 8

    def test_unknown_config_key_is_usage_error(self, tmp_path, capsys):
        """Test that an unknown config key is a usage error"""
        config = tmp_path / "bad.json"
        config.write_text(json.dumps({"clients": 3, "colour": "blue"}))
        code, _, err = run(capsys, "synth", "--config", config, "--out", tmp_path / "s")
        assert code == 2
        assert "colour" in err
        assert not (tmp_path / "s").exists()

    def test_invalid_json_is_usage_error(self, tmp_path, capsys):
        """Test that an unparsable config file is a usage error"""
        config = tmp_path / "bad.json"
        config.write_text("{not json")
        code, _, _ = run(capsys, "synth", "--config", config, "--out", tmp_path / "s")
        assert code == 2

    def test_missing_required_key(self, tmp_path, capsys):
        """Test that a missing required setting is a usage error"""
        code, _, err = run(capsys, "partition", "--out", tmp_path / "p")
        assert code == 2
        assert "--input" in err

    def test_missing_subcommand(self, capsys):
        """Test invocation without a subcommand"""
        code, _, _ = run(capsys)
        assert code == 2

    def test_bad_choice(self, tmp_path, capsys):
        """Test that an invalid choice is rejected"""
        code, _, _ = run(capsys, "bench", "--data", tmp_path, "--backend", "mmap", "--out", tmp_path / "b")
        assert code == 2


class TestOutputDirectory:
    """--out handling"""

    def test_refuses_non_empty_out(self, tmp_path, capsys):
        """Test that a non-empty output directory is refused"""
        out = tmp_path / "s"
        out.mkdir()
        (out / "keep.txt").write_text("x")
        code, _, err = run(
            capsys, "synth", "--out", out, "--clients", 2, "--vocab", 8,
            "--examples-per-client", 1, "--words-per-example", 4,
        )
        assert code == 1
        error = json.loads(err.strip().splitlines()[-1])
        assert error["error"] == "OutputExistsError"
        assert (out / "keep.txt").exists()

    def test_force_replaces_contents(self, tmp_path, capsys):
        """Test that --force clears the output directory"""
        out = tmp_path / "s"
        out.mkdir()
        (out / "keep.txt").write_text("x")
        code, _, _ = run(
            capsys, "synth", "--out", out, "--force", "--clients", 2, "--vocab", 8,
            "--examples-per-client", 1, "--words-per-example", 4,
        )
        assert code == 0
        assert not (out / "keep.txt").exists()
        assert (out / "config.json").exists()

    def test_refuses_to_write_into_input(self, dataset, capsys):
        """Test that the output may not overlap the input"""
        code, _, err = run(capsys, "stats", "--data", dataset.root, "--out", dataset.root, "--force")
        assert code == 1
        assert "OutputExistsError" in err
        assert PartitionedDataset.open(dataset.root).num_groups == 6


class TestPartition:
    """grouper partition"""

    def test_by_feature(self, tmp_path, capsys, corpus_path):
        """Test partitioning by a feature"""
        out = tmp_path / "p"
        code, stdout, err = run(
            capsys, "partition", "--input", corpus_path, "--feature", "domain", "--shards", 2,
            "--out", out, "--json",
        )
        assert code == 0, err
        assert json.loads(stdout)["groups"] == 6
        dataset = PartitionedDataset.open(out)
        assert dataset.manifest.num_shards == 2
        assert json.loads((out / "config.json").read_text())["feature"] == "domain"

    def test_random(self, tmp_path, capsys, corpus_path):
        """Test random partitioning"""
        out = tmp_path / "p"
        code, _, err = run(
            capsys, "partition", "--input", corpus_path, "--strategy", "random", "--num-groups", 3,
            "--out", out,
        )
        assert code == 0, err
        assert PartitionedDataset.open(out).num_examples == 24

    def test_missing_feature_is_runtime_error(self, tmp_path, capsys, corpus_path):
        """Test that a failed partition exits 1 and still echoes its config"""
        out = tmp_path / "p"
        code, _, err = run(capsys, "partition", "--input", corpus_path, "--out", out)
        assert code == 1
        assert "error" in json.loads(err.strip().splitlines()[-1])
        assert json.loads((out / "config.json").read_text())["strategy"] == "by_feature"

    def test_missing_input_file(self, tmp_path, capsys):
        """Test that a missing corpus is a usage error"""
        code, _, _ = run(
            capsys, "partition", "--input", tmp_path / "absent.jsonl", "--feature", "domain",
            "--out", tmp_path / "p",
        )
        assert code == 1


class TestStats:
    """grouper stats"""

    def test_artifacts(self, tmp_path, capsys, dataset):
        """Test the files written by stats"""
        out = tmp_path / "stats"
        code, stdout, err = run(
            capsys, "stats", "--data", dataset.root, "--out", out, "--label-field", "label", "--json"
        )
        assert code == 0, err
        summary = json.loads(stdout)
        assert summary["num_groups"] == 6
        assert 0.0 <= summary["mean_pairwise_label_tv"] <= 1.0

        assert len(_rows(out / "group_stats.csv")) == 6
        assert _rows(out / "summary.csv")[0]["num_examples"] == "24"
        assert [r["label"] for r in _rows(out / "letter_values.csv")] == ["M", "F", "E", "D", "C", "B"]
        # every group has the same size, so there is no Q-Q spread to report
        assert not (out / "qq_points.csv").exists()

    def test_missing_dataset(self, tmp_path, capsys):
        """Test stats on a directory without a dataset"""
        code, _, err = run(capsys, "stats", "--data", tmp_path / "nowhere", "--out", tmp_path / "s")
        assert code == 1
        assert "error" in json.loads(err.strip().splitlines()[-1])


class TestBench:
    """grouper bench"""

    @pytest.mark.parametrize("backend", ["streaming", "in_memory", "hierarchical"])
    def test_artifacts(self, tmp_path, capsys, dataset, backend):
        """Test the files written by bench"""
        out = tmp_path / "bench"
        code, _, err = run(
            capsys, "bench", "--data", dataset.root, "--backend", backend, "--trials", 2,
            "--shuffle-buffer", 4, "--out", out,
        )
        assert code == 0, err
        report = json.loads((out / "bench.json").read_text())
        assert report["backend"] == backend
        assert report["examples_seen"] == 24
        assert len(_rows(out / "bench.csv")) == 2


class TestTrainAndPersonalize:
    """grouper train / personalize"""

    def test_train_artifacts(self, checkpoint):
        """Test the files written by train"""
        out = checkpoint.parent
        assert checkpoint.exists()
        metrics = _rows(out / "metrics.csv")
        assert [m["round"] for m in metrics] == ["0", "1"]
        echo = json.loads((out / "config.json").read_text())
        assert echo["tau"] == 1
        assert echo["cohort_size"] == 2

    def test_train_is_reproducible(self, tmp_path, capsys, synthetic_data, checkpoint):
        """Test that two runs with the same seed write the same checkpoint"""
        out = tmp_path / "again"
        code, _, _ = run(capsys, "train", "--data", synthetic_data, "--out", out, *TRAIN_FLAGS)
        assert code == 0
        assert (out / "checkpoint.bin").read_bytes() == checkpoint.read_bytes()
        assert (out / "metrics.csv").read_text() == (checkpoint.parent / "metrics.csv").read_text()

    def test_personalize(self, tmp_path, capsys, checkpoint):
        """Test personalization of a trained checkpoint"""
        held_out = _synth(capsys, tmp_path / "validation", split="validation")
        out = tmp_path / "personalized"
        code, stdout, err = run(
            capsys, "personalize", "--data", held_out, "--checkpoint", checkpoint, "--out", out,
            "--max-clients", 3, "--json", *TRAIN_FLAGS,
        )
        assert code == 0, err
        assert json.loads(stdout)["clients"] == 3
        rows = _rows(out / "personalization.csv")
        assert len(rows) == 3
        assert all(r["client_key"].startswith("validation-") for r in rows)
        report = json.loads((out / "personalization.json").read_text())
        assert report["num_clients"] == 3

    def test_personalize_with_wrong_vocabulary(self, tmp_path, capsys, synthetic_data, checkpoint):
        """Test that a checkpoint of another vocabulary size is rejected"""
        code, _, err = run(
            capsys, "personalize", "--data", synthetic_data, "--checkpoint", checkpoint,
            "--out", tmp_path / "p", *TRAIN_FLAGS, "--vocab", 32,
        )
        assert code == 1
        assert json.loads(err.strip().splitlines()[-1])["error"] == "DimensionMismatchError"

    def test_diverged_train_keeps_config_echo(self, tmp_path, capsys, synthetic_data):
        """Test that a run failing mid-training still leaves its resolved config behind"""
        out = tmp_path / "diverged"
        code, _, err = run(
            capsys, "train", "--data", synthetic_data, "--out", out, *TRAIN_FLAGS,
            "--server-optimizer", "sgd", "--schedule", "constant", "--eta-s", "1e308",
            "--eta-c", "1e308",
        )
        assert code == 1
        assert "error" in json.loads(err.strip().splitlines()[-1])
        echo = json.loads((out / "config.json").read_text())
        assert echo["eta_s"] == 1e308
        assert echo["server_optimizer"] == "sgd"


class TestSweep:
    """grouper sweep"""

    def test_lr_grid(self, tmp_path, capsys, synthetic_data):
        """Test the learning-rate sweep"""
        out = tmp_path / "sweep"
        code, _, err = run(
            capsys, "sweep", "--data", synthetic_data, "--out", out, *TRAIN_FLAGS,
            "--rounds", 1, "--server-lrs", "0.01,0.1", "--client-lrs", "0.1",
        )
        assert code == 0, err
        points = _rows(out / "sweep.csv")
        assert [(p["eta_s"], p["eta_c"]) for p in points] == [("0.01", "0.1"), ("0.1", "0.1")]
        best = json.loads((out / "best.json").read_text())
        assert best["eta_s"] in (0.01, 0.1)

    def test_tau_mode_needs_eval_data(self, tmp_path, capsys, synthetic_data):
        """Test that the tau ablation requires held-out data"""
        code, _, err = run(
            capsys, "sweep", "--data", synthetic_data, "--mode", "tau", "--out", tmp_path / "t"
        )
        assert code == 2
        assert "--eval-data" in err

    def test_tau_ablation(self, tmp_path, capsys, synthetic_data):
        """Test the tau ablation through the command line"""
        held_out = _synth(capsys, tmp_path / "validation", split="validation")
        out = tmp_path / "tau"
        code, stdout, err = run(
            capsys, "sweep", "--data", synthetic_data, "--eval-data", held_out, "--mode", "tau",
            "--taus", "1,2", "--out", out, "--json", *TRAIN_FLAGS, "--rounds", 1,
        )
        assert code == 0, err
        rows = _rows(out / "tau_ablation.csv")
        assert [r["tau"] for r in rows] == ["1", "2"]
        assert set(json.loads(stdout)) == {"tau_1_median_post_loss", "tau_2_median_post_loss"}
