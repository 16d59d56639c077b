"""
Tests for lib/config.py - Configuration management module
"""

import pytest
import json
from pydantic import ValidationError

from lib.config import (
    WorldConfig,
    ModelConfig,
    RunConfig,
    get_default_config,
    derive_seed,
    save_config,
    load_config,
    apply_env_overrides,
    apply_flag_overrides,
    validate_config,
    create_sample_config,
)
from lib.errors import ConfigError


class TestWorldConfig:
    """Test WorldConfig model validation."""

    def test_world_config_defaults(self):
        """Test default values in WorldConfig."""
        config = WorldConfig()

        assert config.num_users == 1000
        assert config.cold_fraction == 0.1
        assert config.sigma >= 0
        assert config.max_session_matches == 32

    def test_negative_sigma_rejected(self):
        """σ must be non-negative."""
        with pytest.raises(ValidationError):
            WorldConfig(sigma=-0.1)

    def test_cold_fraction_out_of_range(self):
        """Cold fraction must lie in [0, 1]."""
        with pytest.raises(ValidationError):
            WorldConfig(cold_fraction=1.5)

    def test_gender_probs_must_match_cardinality(self):
        """Test gender distribution length check."""
        with pytest.raises(ValidationError):
            WorldConfig(num_genders=2, gender_probs=[0.5, 0.3, 0.2])


class TestModelConfig:
    """Test ModelConfig model validation."""

    def test_head_mode_normalized(self):
        """Head mode is case-insensitive."""
        assert ModelConfig(head_mode="LINEAR").head_mode == "linear"

    def test_invalid_head_mode(self):
        with pytest.raises(ValidationError):
            ModelConfig(head_mode="softplus")

    def test_dim_divisible_by_heads(self):
        """Test attention heads must split the dimension evenly."""
        with pytest.raises(ValidationError):
            ModelConfig(dim=10, heads=3)


class TestDeriveSeed:
    """Test per-subsystem seed derivation."""

    def test_stable(self):
        """Same root and subsystem give the same seed."""
        assert derive_seed(7, "world") == derive_seed(7, "world")

    def test_subsystems_differ(self):
        assert derive_seed(7, "world") != derive_seed(7, "init")
        assert derive_seed(7, "world") != derive_seed(8, "world")


class TestConfigPersistence:
    """Test saving and loading configuration files."""

    def test_save_and_load(self, tmp_path, clean_env):
        """Test a saved configuration loads back unchanged."""
        config = get_default_config()
        config.world.num_users = 123
        path = tmp_path / "config.json"

        save_config(config, path)
        loaded = load_config(path)

        assert loaded.world.num_users == 123
        assert loaded.model_dump() == config.model_dump()

    def test_load_without_path_uses_defaults(self, clean_env):
        config = load_config(None)
        assert config == get_default_config()

    def test_missing_file_raises(self, tmp_path, clean_env):
        """An explicitly requested missing file is a config error."""
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "missing.json")

    def test_invalid_json_raises(self, tmp_path, clean_env):
        path = tmp_path / "broken.json"
        path.write_text("{not json")

        with pytest.raises(ConfigError):
            load_config(path)

    def test_comment_keys_ignored(self, tmp_path, clean_env):
        """Test keys starting with _comment are stripped before validation."""
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"_comment": "hello", "seed": 3, "world": {"_comment_x": 1, "num_users": 50}}))

        config = load_config(path)

        assert config.seed == 3
        assert config.world.num_users == 50

    def test_create_sample_config(self, temp_config_dir):
        """Test sample config file is created and loadable."""
        path = create_sample_config(temp_config_dir)

        with open(path) as f:
            data = json.load(f)
        assert "_comment" in data
        assert "world" in data


class TestOverrides:
    """Test environment and flag overrides."""

    def test_env_overrides(self, monkeypatch, clean_env):
        """Test CUPID_* environment variables override file settings."""
        monkeypatch.setenv("CUPID_OUTPUT_ROOT", "/tmp/cupid-out")
        monkeypatch.setenv("CUPID_SEED", "99")
        monkeypatch.setenv("CUPID_THREADS", "4")

        config = apply_env_overrides(get_default_config())

        assert config.output_dir == "/tmp/cupid-out"
        assert config.seed == 99
        assert config.threads == 4

    def test_env_seed_not_integer(self, monkeypatch, clean_env):
        monkeypatch.setenv("CUPID_SEED", "seven")

        with pytest.raises(ConfigError):
            apply_env_overrides(get_default_config())

    def test_flag_overrides_win(self):
        """Dotted flags override nested sections; None leaves values alone."""
        config = apply_flag_overrides(RunConfig(seed=1), seed=5, **{"world.num_users": 64, "model.dim": None})

        assert config.seed == 5
        assert config.world.num_users == 64
        assert config.model.dim == 64

    def test_flag_override_unknown_key(self):
        with pytest.raises(ConfigError, match="Unknown config key"):
            apply_flag_overrides(RunConfig(), **{"world.no_such_field": 1})

    def test_flag_override_invalid_value(self):
        """Overrides are validated like file values."""
        with pytest.raises(ConfigError):
            apply_flag_overrides(RunConfig(), **{"world.num_users": 0})


class TestValidateConfig:
    """Test cross-field validation."""

    def test_default_config_is_valid(self):
        assert validate_config(get_default_config()) == []

    def test_session_gap_must_exceed_think_time(self):
        config = RunConfig(world=WorldConfig(session_gap_ms=1000, think_time_mean_ms=5000))

        issues = validate_config(config)

        assert any("session_gap_ms" in issue for issue in issues)

    def test_small_bench_pool(self):
        config = get_default_config()
        config.eval.bench_pool_sizes = [1, 16]

        assert any("pool sizes" in issue for issue in validate_config(config))
