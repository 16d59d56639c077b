"""
Configuration Management Module for the CUPID matchmaking engine

Supports loading run configurations from JSON files,
environment variables, and command-line flag overrides.

Features:
- JSON-based configuration files (keys starting with "_comment" are ignored)
- Environment variable overrides (CUPID_OUTPUT_ROOT, CUPID_SEED, CUPID_THREADS)
- Flag overrides (flags win over file and environment)
- Validation with Pydantic models
- Deterministic per-subsystem seeds derived from one root seed
"""

import os
import json
import hashlib
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError

CONFIG_DIR = "configs"
DEFAULT_CONFIG_FILE = "config.json"
SAMPLE_CONFIG_FILE = "config.sample.json"


class WorldConfig(BaseModel):
    """Synthetic social-discovery world."""
    num_users: int = Field(default=1000, ge=2, description="Number of users in the world")
    latent_dim: int = Field(default=8, ge=1, description="Dimension k of the latent compatibility vectors")
    cold_fraction: float = Field(default=0.1, ge=0.0, le=1.0, description="Fraction of users first active after the training window")

    # Demographics
    num_genders: int = Field(default=3, ge=1, description="Cardinality of the gender field")
    num_countries: int = Field(default=32, ge=1, description="Cardinality of the country field")
    gender_probs: List[float] = Field(default=[0.55, 0.4, 0.05], description="Gender distribution")
    country_zipf: float = Field(default=1.1, ge=0.0, description="Zipf exponent of the country distribution")
    latent_noise: float = Field(default=0.8, ge=0.0, description="Spread of user latents around their country centroid")

    # Duration law: y_ms = round(1000 * exp(mu0 + alpha * c + s_i + s_j + sigma * eps))
    mu0: float = Field(default=3.5, description="Base log-duration (log seconds)")
    alpha: float = Field(default=1.5, ge=0.0, description="Compatibility gain")
    sigma: float = Field(default=0.6, ge=0.0, description="Log-noise scale")
    affinity: float = Field(default=0.3, description="Same-country compatibility bonus")
    sociability_scale: float = Field(default=0.3, ge=0.0, description="Std of the persistent per-user log-duration offset")

    # Session intent
    drift_rate: float = Field(default=0.15, ge=0.0, description="Intent drift step eta per match")
    intent_scale: float = Field(default=0.8, ge=0.0, description="Norm of the intent offset drawn at session start")

    # Pool dynamics
    offline_mean_ms: int = Field(default=2 * 3600 * 1000, ge=1, description="Mean offline time between sessions (on top of the session gap)")
    think_time_mean_ms: int = Field(default=5000, ge=0, description="Mean pause between a match end and the next request")
    session_matches_mean: float = Field(default=16.0, ge=1.0, description="Mean number of matches per session (geometric)")
    max_session_matches: int = Field(default=32, ge=1, description="Cap on matches in one session")
    match_interval_ms: int = Field(default=2000, ge=1, description="Pool matching tick")
    session_gap_ms: int = Field(default=30 * 60 * 1000, ge=1, description="Inactivity gap that separates two sessions")

    # Dataset
    horizon_hours: float = Field(default=24.0, gt=0, description="Simulated horizon for dataset generation")
    validation_fraction: float = Field(default=0.1, gt=0.0, lt=0.5, description="Time fraction of the validation window")
    test_fraction: float = Field(default=0.1, gt=0.0, lt=0.5, description="Time fraction of the test window")

    # Online thresholds
    long_quantile: float = Field(default=0.75, gt=0.0, lt=1.0, description="Random-pair quantile above which a match is long")
    short_threshold_ms: int = Field(default=5000, ge=0, description="Matches shorter than this are short")

    @field_validator('gender_probs')
    @classmethod
    def validate_gender_probs(cls, v):
        if any(p < 0 for p in v) or sum(v) <= 0:
            raise ValueError('gender_probs must be non-negative with a positive sum')
        return v

    @model_validator(mode='after')
    def validate_gender_cardinality(self):
        if len(self.gender_probs) != self.num_genders:
            raise ValueError('gender_probs must have num_genders entries')
        return self


class ModelConfig(BaseModel):
    """Embedding, session-encoder and prediction-head dimensions (desk scale)."""
    dim: int = Field(default=64, ge=1, description="Representation dimension d shared by e^u, e^m and e^s")
    hidden: List[int] = Field(default=[128, 64], description="Deep-part MLP hidden sizes [h1, h2]")
    field_embedding_dim: int = Field(default=8, ge=1, description="Per-field categorical embedding size in the deep part")
    layers: int = Field(default=2, ge=1, description="Causal transformer blocks L")
    heads: int = Field(default=2, ge=1, description="Attention heads H")
    max_session_len: int = Field(default=32, ge=1, description="Maximum matching histories per session")
    projected_dim: int = Field(default=16, ge=1, description="Projected dimension p of the prediction head")
    head_mode: str = Field(default="et", description="Prediction head mode: et or linear")
    duration_unit_ms: float = Field(default=60000.0, gt=0, description="Raw-duration unit of the linear head")
    exp_clamp: float = Field(default=30.0, gt=0, description="Bound on |z| before exponentiation")

    @field_validator('head_mode')
    @classmethod
    def validate_head_mode(cls, v):
        if v.lower() not in ('et', 'linear'):
            raise ValueError('head_mode must be et or linear')
        return v.lower()

    @model_validator(mode='after')
    def validate_heads(self):
        if self.dim % self.heads != 0:
            raise ValueError('dim must be divisible by heads')
        return self


class TrainingConfig(BaseModel):
    """Two-phase and joint training settings."""
    epochs: int = Field(default=10, ge=1, description="Joint-baseline epochs N")
    phase1_epochs: int = Field(default=10, ge=1, description="Phase-1 epochs N1")
    phase2_epochs: int = Field(default=5, ge=1, description="Phase-2 epochs N2")
    batch_size: int = Field(default=256, ge=1, description="Matches per step (phase 2, joint)")
    session_batch_size: int = Field(default=16, ge=1, description="Sessions per step (phase 1)")
    lr: float = Field(default=1e-3, gt=0, description="AdamW learning rate")
    weight_decay: float = Field(default=0.01, ge=0, description="Decoupled weight decay")
    plateau_factor: float = Field(default=0.5, gt=0, lt=1, description="Reduce-on-plateau multiplier")
    plateau_patience: int = Field(default=2, ge=0, description="Evaluations without improvement before reducing lr")
    plateau_threshold: float = Field(default=1e-4, ge=0, description="Minimum validation MSE improvement")
    convergence_patience: int = Field(default=3, ge=1, description="Evaluations without improvement before stopping")
    validate_every_epoch: bool = Field(default=True, description="Evaluate on the validation split after each epoch")


class EngineConfig(BaseModel):
    """Serving engine runtime."""
    workers: int = Field(default=1, ge=1, description="Session update worker threads")
    queue_capacity: int = Field(default=1024, ge=1, description="Pending update jobs before back-pressure is reported")
    compute_delay_ms: int = Field(default=200, ge=0, description="Simulated session-encoding delay in deterministic mode")
    history_limit: int = Field(default=64, ge=1, description="Committed representations kept per user for delayed lookups")


class EvalConfig(BaseModel):
    """Evaluation, delay sweep, simulation and benchmark settings."""
    quality_threshold_ms: Optional[int] = Field(default=None, ge=0, description="AUROC label threshold; None uses the dataset's random-policy 75th percentile")
    delays_ms: List[int] = Field(default=[0, 2000, 4000, 8000, 16000], description="Delay sweep t' values")
    include_never_updated: bool = Field(default=True, description="Add the never-updated diagnostic row to delay sweeps")
    switchback_window_ms: int = Field(default=20 * 60 * 1000, ge=1, description="Switchback window length")
    online_hours: float = Field(default=24.0, gt=0, description="Online simulation horizon")
    bench_pool_sizes: List[int] = Field(default=[16, 64, 256], description="Pool sizes for the latency benchmark")
    bench_reps: int = Field(default=50, ge=1, description="Timed repetitions per pool size and mode")

    @field_validator('delays_ms', 'bench_pool_sizes')
    @classmethod
    def validate_non_negative(cls, v):
        if any(x < 0 for x in v):
            raise ValueError('values must be non-negative')
        return v


class RunConfig(BaseModel):
    """Merged settings for one run; echoed into every artifact."""
    run_name: str = Field(default="cupid", description="Name used for logs and artifacts")
    seed: int = Field(default=7, ge=0, description="Root seed; every subsystem seed derives from it")
    output_dir: str = Field(default="runs", description="Output directory")
    threads: int = Field(default=1, ge=1, description="Worker threads; 1 forces full determinism")
    world: WorldConfig = Field(default_factory=WorldConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    engine: EngineConfig = Field(default_factory=EngineConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)


def get_default_config() -> RunConfig:
    """Return default configuration."""
    return RunConfig()


def derive_seed(root_seed: int, subsystem: str) -> int:
    """Split the root seed per subsystem (stable across processes and platforms)."""
    digest = hashlib.sha256(f"{root_seed}:{subsystem}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _strip_comments(data: Any) -> Any:
    if isinstance(data, dict):
        return {k: _strip_comments(v) for k, v in data.items() if not k.startswith("_comment")}
    if isinstance(data, list):
        return [_strip_comments(v) for v in data]
    return data


def save_config(config: RunConfig, path: str | Path) -> str:
    """Save configuration to a JSON file."""
    filepath = Path(path)
    filepath.parent.mkdir(parents=True, exist_ok=True)

    with open(filepath, 'w') as f:
        json.dump(config.model_dump(), f, indent=2)

    logging.info(f"Configuration saved to {filepath}")
    return str(filepath)


def load_config(path: Optional[str | Path] = None) -> RunConfig:
    """
    Load configuration from a JSON file.

    Without a path, defaults are used. An explicitly requested file that is
    missing or invalid raises ConfigError. Environment variables override
    file settings.
    """
    if path is None:
        logging.info("No config file given, using defaults")
        config = get_default_config()
    else:
        filepath = Path(path)
        if not filepath.exists():
            raise ConfigError(f"Config file not found: {filepath}")
        try:
            with open(filepath, 'r') as f:
                data = json.load(f)
            config = RunConfig(**_strip_comments(data))
            logging.info(f"Configuration loaded from {filepath}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {filepath} is not valid JSON: {e}") from e
        except ValidationError as e:
            raise ConfigError(f"Config file {filepath} is invalid: {e}") from e

    return apply_env_overrides(config)


def apply_env_overrides(config: RunConfig) -> RunConfig:
    """Apply environment variable overrides to configuration."""
    data = config.model_dump()

    if os.environ.get("CUPID_OUTPUT_ROOT"):
        data["output_dir"] = os.environ["CUPID_OUTPUT_ROOT"]

    if os.environ.get("CUPID_SEED"):
        try:
            data["seed"] = int(os.environ["CUPID_SEED"])
        except ValueError as e:
            raise ConfigError(f"CUPID_SEED must be an integer: {e}") from e

    if os.environ.get("CUPID_THREADS"):
        try:
            data["threads"] = int(os.environ["CUPID_THREADS"])
        except ValueError as e:
            raise ConfigError(f"CUPID_THREADS must be an integer: {e}") from e

    return _rebuild(data)


def apply_flag_overrides(config: RunConfig, **flags: Any) -> RunConfig:
    """
    Apply command-line overrides. Keys are dotted paths ("world.num_users");
    None values are skipped so unset flags never clobber the file.
    """
    data = config.model_dump()
    for key, value in flags.items():
        if value is None:
            continue
        target = data
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in target:
                raise ConfigError(f"Unknown config section: {part}")
            target = target[part]
        if parts[-1] not in target:
            raise ConfigError(f"Unknown config key: {key}")
        target[parts[-1]] = value
    return _rebuild(data)


def _rebuild(data: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig(**data)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e


def validate_config(config: RunConfig) -> List[str]:
    """
    Validate cross-field constraints and return list of issues.

    Returns empty list if configuration is valid.
    """
    issues = []

    world = config.world
    if world.validation_fraction + world.test_fraction >= 0.9:
        issues.append("validation_fraction + test_fraction leaves too little training data")

    if world.session_gap_ms <= world.think_time_mean_ms:
        issues.append("session_gap_ms must exceed think_time_mean_ms or sessions merge")

    if config.model.hidden and any(h < 1 for h in config.model.hidden):
        issues.append("model.hidden sizes must be positive")

    if config.training.phase1_epochs > config.training.epochs * 10:
        issues.append("phase1_epochs is unusually large compared to epochs")

    if any(size < 2 for size in config.eval.bench_pool_sizes):
        issues.append("bench pool sizes must be at least 2")

    return issues


def create_sample_config(directory: str | Path = CONFIG_DIR) -> str:
    """Create a sample configuration file with comments."""
    Path(directory).mkdir(parents=True, exist_ok=True)
    filepath = Path(directory) / SAMPLE_CONFIG_FILE

    sample = {"_comment": "CUPID run configuration - copy to config.json and customize"}
    sample.update(get_default_config().model_dump())

    with open(filepath, 'w') as f:
        json.dump(sample, f, indent=2)

    logging.info(f"Sample configuration created at {filepath}")
    return str(filepath)
