"""
Tests for lib/cli.py - subcommands, artifacts and exit codes
"""

import json

import pandas as pd
import pytest

from lib.checkpoint import load_checkpoint
from lib.cli import main
from lib.config import derive_seed, save_config
from lib.dataset_io import EVENTS_FILE, USERS_FILE
from lib.errors import DataError
from tests.conftest import tiny_config


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    """Config file, generated dataset and a trained two-phase checkpoint shared by the module."""
    root = tmp_path_factory.mktemp("cli")
    config_path = root / "config.json"
    save_config(tiny_config(), config_path)
    output = root / "run"

    assert main(["generate", "-c", str(config_path), "-o", str(output)]) == 0
    assert main(["train", "-c", str(config_path), "-o", str(output)]) == 0
    return config_path, output


class TestExitCodes:
    """Test error mapping to exit codes."""

    def test_no_command(self):
        assert main([]) == 1

    def test_unknown_flag(self):
        assert main(["train", "--no-such-flag"]) == 1

    def test_missing_config_file(self, tmp_path, clean_env):
        assert main(["generate", "-c", str(tmp_path / "missing.json"), "-o", str(tmp_path)]) == 1

    def test_missing_dataset_is_data_error(self, tmp_path, clean_env):
        code = main(["train", "--dataset", str(tmp_path / "nowhere"), "-o", str(tmp_path)])

        assert code == 2

    def test_baseline_and_ablation_exclusive(self, run_dir):
        config_path, output = run_dir

        code = main(["train", "-c", str(config_path), "-o", str(output / "x"),
                     "--dataset", str(output / "dataset"), "--baseline", "wide_deep", "--ablate", "no-et"])

        assert code == 1

    def test_create_config(self, temp_config_dir):
        assert main(["--create-config"]) == 0
        assert (temp_config_dir / "config.sample.json").exists()


class TestGenerate:
    def test_world_seed_derived_from_root(self, mocker, tmp_path, clean_env):
        generate = mocker.patch("lib.cli.generate_dataset", side_effect=DataError("stop"))

        code = main(["generate", "--seed", "5", "-o", str(tmp_path)])

        assert code == 2
        assert generate.call_args.args[1] == derive_seed(5, "world")

    def test_same_seed_same_files(self, run_dir, tmp_path):
        """Re-running generate with the same config reproduces the dataset byte for byte."""
        config_path, output = run_dir

        assert main(["generate", "-c", str(config_path), "-o", str(tmp_path)]) == 0

        for name in (EVENTS_FILE, USERS_FILE):
            assert (tmp_path / "dataset" / name).read_bytes() == (output / "dataset" / name).read_bytes()


class TestTrain:
    """Test training artifacts."""

    def test_checkpoint_and_metrics(self, run_dir):
        _, output = run_dir

        _, metadata = load_checkpoint(output / "model.ckpt")
        rows = [json.loads(line) for line in (output / "metrics.jsonl").read_text().splitlines()]

        assert metadata["mode"] == "two-phase"
        assert rows[-1]["transformer_forward_count"] == metadata["transformer_forward_count"]
        assert json.loads((output / "config.json").read_text())["seed"] == tiny_config().seed

    def test_no_et_records_linear_head(self, run_dir, tmp_path):
        config_path, output = run_dir

        code = main(["train", "-c", str(config_path), "-o", str(tmp_path), "--dataset", str(output / "dataset"),
                     "--ablate", "no-et"])

        _, metadata = load_checkpoint(tmp_path / "model.ckpt")
        assert code == 0
        assert metadata["head_mode"] == "linear"
        assert metadata["variant"] == "no-et"

    def test_resume_wrong_mode_rejected(self, run_dir, tmp_path):
        config_path, output = run_dir

        code = main(["train", "-c", str(config_path), "-o", str(tmp_path), "--dataset", str(output / "dataset"),
                     "--checkpoint", str(output / "model.ckpt"), "--mode", "joint", "--resume"])

        assert code == 1


class TestReports:
    """Test report-writing subcommands against the trained checkpoint."""

    def test_eval(self, run_dir):
        config_path, output = run_dir

        assert main(["eval", "-c", str(config_path), "-o", str(output)]) == 0

        frame = pd.read_csv(output / "eval.csv")
        assert list(frame["match_type"])[0] == "Entire"
        assert "skewness" in (output / "eval.txt").read_text()

    def test_delay_sweep(self, run_dir):
        config_path, output = run_dir

        assert main(["delay-sweep", "-c", str(config_path), "-o", str(output), "--delays", "0", "4000"]) == 0

        frame = pd.read_csv(output / "delay_sweep.csv", dtype={"delay_ms": str})
        assert list(dict.fromkeys(frame["delay_ms"])) == ["0", "4000", "never"]

    def test_bench(self, run_dir):
        config_path, output = run_dir

        assert main(["bench", "-c", str(config_path), "-o", str(output), "--pool-sizes", "4", "--reps", "3"]) == 0

        frame = pd.read_csv(output / "latency.csv")
        assert set(frame["mode"]) == {"sync", "async"}

    def test_simulate_random(self, run_dir):
        config_path, output = run_dir

        code = main(["simulate", "-c", str(config_path), "-o", str(output), "--policy", "random",
                     "--horizon-hours", "1"])

        assert code == 0
        assert (output / "online_random.csv").exists()

    def test_simulate_feature_only_needs_checkpoint(self, run_dir):
        config_path, output = run_dir

        code = main(["simulate", "-c", str(config_path), "-o", str(output), "--policy", "feature-only"])

        assert code == 1
