"""
Pytest configuration and shared fixtures for CUPID tests.

This module provides reusable fixtures for:
- Small run configurations (world, model, training)
- Feature vectors, match records and sessions
- Synthetic datasets (uniform sessions and a small simulated world)
- Temp directories and a clean environment
"""

import pytest
from pathlib import Path
from typing import Callable, List

from lib.config import RunConfig, derive_seed
from lib.domain import (
    Demographics,
    FeatureSchema,
    FeatureVector,
    MatchRecord,
    Session,
    rolling_features,
    uniform_session_dataset,
)
from lib.embedding import InferenceCounter
from lib.training import CupidModel, schema_for


# ============================================================================
# Configuration Fixtures
# ============================================================================

def tiny_config(**overrides) -> RunConfig:
    """A run configuration small enough for unit tests."""
    data = {
        "seed": 11,
        "world": {
            "num_users": 40,
            "num_countries": 4,
            "latent_dim": 4,
            "horizon_hours": 6.0,
            "offline_mean_ms": 30 * 60 * 1000,
            "session_gap_ms": 10 * 60 * 1000,
            "session_matches_mean": 4.0,
            "max_session_matches": 8,
        },
        "model": {
            "dim": 8,
            "hidden": [16, 8],
            "field_embedding_dim": 4,
            "layers": 1,
            "heads": 2,
            "max_session_len": 8,
            "projected_dim": 4,
        },
        "training": {
            "epochs": 2,
            "phase1_epochs": 2,
            "phase2_epochs": 1,
            "batch_size": 16,
            "session_batch_size": 4,
        },
        "eval": {
            "bench_pool_sizes": [4, 8],
            "bench_reps": 5,
            "online_hours": 2.0,
        },
    }
    for key, value in overrides.items():
        section, _, field = key.partition("__")
        if field:
            data.setdefault(section, {})[field] = value
        else:
            data[key] = value
    return RunConfig(**data)


@pytest.fixture
def run_config() -> RunConfig:
    """Provide a tiny RunConfig."""
    return tiny_config()


@pytest.fixture
def schema(run_config) -> FeatureSchema:
    return schema_for(run_config)


@pytest.fixture
def counter() -> InferenceCounter:
    return InferenceCounter()


@pytest.fixture
def model(run_config, schema, counter) -> CupidModel:
    """Provide an untrained CUPID model with tiny dimensions."""
    return CupidModel(run_config.model, schema, seed=derive_seed(run_config.seed, "init"), counter=counter)


# ============================================================================
# Record Fixtures
# ============================================================================

@pytest.fixture
def make_session() -> Callable[..., Session]:
    """
    Factory for a session of `length` matches owned by `owner`.

    Matches last `duration_ms` each and are spaced `gap_ms` apart; rolling
    features are filled in from the session itself.
    """
    def factory(owner: int = 0, length: int = 3, start_ms: int = 0, duration_ms: int = 30000,
                gap_ms: int = 5000, demographics: Demographics = Demographics(0, 1)) -> Session:
        records: List[MatchRecord] = []
        clock = start_ms
        for k in range(length):
            clock += gap_ms + duration_ms
            own = rolling_features(Session(owner, tuple(records)), len(records), demographics)
            other = FeatureVector(gender=1, country=k % 4)
            records.append(MatchRecord(owner, 1000 + k, duration_ms + 1000 * k, clock + 1000 * k, own, other))
        return Session(owner, tuple(records))

    return factory


@pytest.fixture
def sample_features() -> List[FeatureVector]:
    return [
        FeatureVector(gender=0, country=0),
        FeatureVector(gender=1, country=2, match_count=3, mean_log_duration=10.2, last_log_duration=9.8),
        FeatureVector(gender=2, country=3, match_count=1, mean_log_duration=11.0, last_log_duration=11.0),
    ]


# ============================================================================
# Dataset Fixtures
# ============================================================================

@pytest.fixture
def uniform_dataset():
    """8 users, one 4-match session each, everything in the training window."""
    return uniform_session_dataset(8, 4, seed=3, num_countries=4)


@pytest.fixture(scope="session")
def world_dataset():
    """A small simulated world with train/validation/test windows."""
    from lib.worldsim import generate_dataset

    config = tiny_config()
    return generate_dataset(config.world, derive_seed(config.seed, "world"))


# ============================================================================
# Filesystem / Environment Fixtures
# ============================================================================

@pytest.fixture
def clean_env(monkeypatch):
    """Remove CUPID_* overrides from the environment."""
    for name in ("CUPID_OUTPUT_ROOT", "CUPID_SEED", "CUPID_THREADS"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def temp_config_dir(tmp_path, monkeypatch) -> Path:
    """Run inside a temporary directory with a configs/ subdirectory."""
    monkeypatch.chdir(tmp_path)
    config_dir = tmp_path / "configs"
    config_dir.mkdir()
    return config_dir
