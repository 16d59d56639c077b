from .errors import CupidError, ConfigError, DataError, ShapeError, CheckpointError, NumericError, UndefinedMetricError
from .config import (
    RunConfig, WorldConfig, ModelConfig, TrainingConfig, EngineConfig, EvalConfig,
    load_config, save_config, get_default_config, derive_seed, validate_config, create_sample_config
)
from .domain import (
    FeatureSchema, Demographics, FeatureVector, MatchRecord, Session, Dataset, MatchingPool,
    UserKind, MatchType, log_scale, unlog, rolling_features, sessionize, classify_user
)
from .dataset_io import save_dataset, load_dataset
from .embedding import FeatureEmbedder, MatchEmbedder, SessionEncoder, SessionStates, InferenceCounter
from .prediction import HeadMode, PredictionHead, combine, predict_log, score_matrix
from .training import CupidModel, Trainer, build_variant, reduction_factor, mse_loss
from .evaluation import EvalReport, auroc, evaluate, run_delay_sweep, run_ablations
from .engine import (
    EmbeddingMemory, UpdateJob, DelayConfig, ThreadedUpdateWorker, DeferredUpdateScheduler,
    MatchingEngine, pair_pool, bench_latency, nearest_rank_percentile
)
from .worldsim import (
    WorldState, RandomPolicy, ModelPolicy, OnlineReport,
    true_duration, drift, generate_dataset, run_online, run_switchback
)

__all__ = [
    'CupidError',
    'ConfigError',
    'DataError',
    'ShapeError',
    'CheckpointError',
    'NumericError',
    'UndefinedMetricError',
    'RunConfig',
    'WorldConfig',
    'ModelConfig',
    'TrainingConfig',
    'EngineConfig',
    'EvalConfig',
    'load_config',
    'save_config',
    'get_default_config',
    'derive_seed',
    'validate_config',
    'create_sample_config',
    'FeatureSchema',
    'Demographics',
    'FeatureVector',
    'MatchRecord',
    'Session',
    'Dataset',
    'MatchingPool',
    'UserKind',
    'MatchType',
    'log_scale',
    'unlog',
    'rolling_features',
    'sessionize',
    'classify_user',
    'save_dataset',
    'load_dataset',
    'FeatureEmbedder',
    'MatchEmbedder',
    'SessionEncoder',
    'SessionStates',
    'InferenceCounter',
    'HeadMode',
    'PredictionHead',
    'combine',
    'predict_log',
    'score_matrix',
    'CupidModel',
    'Trainer',
    'build_variant',
    'reduction_factor',
    'mse_loss',
    'EvalReport',
    'auroc',
    'evaluate',
    'run_delay_sweep',
    'run_ablations',
    'EmbeddingMemory',
    'UpdateJob',
    'DelayConfig',
    'ThreadedUpdateWorker',
    'DeferredUpdateScheduler',
    'MatchingEngine',
    'pair_pool',
    'bench_latency',
    'nearest_rank_percentile',
    'WorldState',
    'RandomPolicy',
    'ModelPolicy',
    'OnlineReport',
    'true_duration',
    'drift',
    'generate_dataset',
    'run_online',
    'run_switchback',
]
