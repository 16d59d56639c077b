"""
Tests for lib/dataset_io.py - dataset files
"""

import json
import pytest

from lib.dataset_io import (
    EVENTS_FILE,
    MANIFEST_FILE,
    USERS_FILE,
    event_line,
    load_dataset,
    load_manifest,
    parse_event_line,
    save_dataset,
)
from lib.errors import DataError


class TestEventLines:
    """Test the events.jsonl line format."""

    def test_field_order(self, uniform_dataset):
        """Keys appear in the documented order."""
        line = event_line(next(uniform_dataset.physical_matches()))

        assert list(json.loads(line)) == ["end_time_ms", "user_a", "user_b", "duration_ms",
                                          "features_a", "features_b"]

    def test_reordered_fields_rejected(self, uniform_dataset):
        data = json.loads(event_line(next(uniform_dataset.physical_matches())))
        reordered = {k: data[k] for k in reversed(list(data))}

        with pytest.raises(DataError, match="expected fields"):
            parse_event_line(json.dumps(reordered), 4)

    def test_corrupt_line(self):
        with pytest.raises(DataError, match="line 7"):
            parse_event_line("{truncated", 7)


class TestSaveLoad:
    """Test dataset directories written and read back."""

    def test_round_trip_preserves_records(self, uniform_dataset, tmp_path):
        save_dataset(uniform_dataset, tmp_path / "ds", {"seed": 1})

        loaded = load_dataset(tmp_path / "ds")

        assert loaded.events == uniform_dataset.events
        assert loaded.static_features == uniform_dataset.static_features
        assert loaded.train_end_ms == uniform_dataset.train_end_ms
        assert loaded.session_gap_ms == uniform_dataset.session_gap_ms

    def test_manifest_echoes_config(self, uniform_dataset, tmp_path):
        save_dataset(uniform_dataset, tmp_path, {"seed": 42})

        manifest = load_manifest(tmp_path)

        assert manifest["config"] == {"seed": 42}
        assert manifest["num_matches"] == len(uniform_dataset) // 2

    def test_identical_datasets_identical_bytes(self, uniform_dataset, tmp_path):
        """Saving the same dataset twice gives byte-identical files."""
        save_dataset(uniform_dataset, tmp_path / "a")
        save_dataset(uniform_dataset, tmp_path / "b")

        for name in (EVENTS_FILE, USERS_FILE, MANIFEST_FILE):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_missing_directory_names_expected_path(self, tmp_path):
        with pytest.raises(DataError, match="expected"):
            load_dataset(tmp_path / "nowhere")

    def test_missing_user_detected(self, uniform_dataset, tmp_path):
        save_dataset(uniform_dataset, tmp_path)
        users = (tmp_path / USERS_FILE).read_text().splitlines()
        (tmp_path / USERS_FILE).write_text("\n".join(users[:-1]) + "\n")

        with pytest.raises(DataError, match="missing"):
            load_dataset(tmp_path)

    def test_wrong_format_version(self, uniform_dataset, tmp_path):
        save_dataset(uniform_dataset, tmp_path)
        manifest = json.loads((tmp_path / MANIFEST_FILE).read_text())
        manifest["format_version"] = 99
        (tmp_path / MANIFEST_FILE).write_text(json.dumps(manifest))

        with pytest.raises(DataError, match="format version"):
            load_dataset(tmp_path)
