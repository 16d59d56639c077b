"""
Training for the CUPID model.

Two-phase procedure:
- phase 1 trains f_u, the auxiliary counterpart layer, f_s and f_o together,
  encoding every training session once per epoch
- phase 2 freezes f_u and f_s, precomputes both sides' representations and
  trains only the prediction head

The joint baseline encodes both users' session prefixes for every match
instead. InferenceCounter records every transformer pass so the two costs
can be compared exactly.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .autograd import Tensor, no_grad, square
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig, RunConfig, TrainingConfig, derive_seed
from .custom_helpers import MetricsLogger
from .domain import Dataset, FeatureSchema, MatchRecord, RecordLocation, Session
from .embedding import (
    AUX_FEATURE_PREFIX,
    FEATURE_PREFIX,
    SESSION_PREFIX,
    FeatureEmbedder,
    InferenceCounter,
    SessionEncoder,
)
from .errors import ConfigError, DataError
from .layers import ParamStore
from .optim import AdamW, ReduceLROnPlateau
from .prediction import HEAD_PREFIX, HeadMode, PredictionHead, training_target

logger = logging.getLogger(__name__)

ABLATIONS = ("full", "no-session", "no-sp", "no-et")
BASELINES = ("wide_deep", "wide_deep_s")


class FeatureSet(str, Enum):
    FULL = "full"
    DEMOGRAPHICS = "demographics"


def schema_for(config: RunConfig) -> FeatureSchema:
    return FeatureSchema(
        num_genders=config.world.num_genders,
        num_countries=config.world.num_countries,
        max_session_len=config.model.max_session_len,
    )


# ----------------------------------------------------------------------
# model bundle
# ----------------------------------------------------------------------

class CupidModel:
    """
    f_u, auxiliary f_u, f_s and f_o sharing one ParamStore.

    use_session=False replaces every session state with zeros (the
    feature-only baselines). aux_counterpart=True scores the counterpart
    with the auxiliary layer, which is how a phase-1-only model predicts.
    """

    def __init__(self, config: ModelConfig, schema: FeatureSchema, seed: int = 0,
                 use_session: bool = True, feature_set: FeatureSet | str = FeatureSet.FULL,
                 counter: InferenceCounter | None = None):
        self.config = config
        self.schema = schema
        self.seed = seed
        self.use_session = use_session
        self.feature_set = FeatureSet(feature_set)
        self.aux_counterpart = False
        self.counter = counter or InferenceCounter()
        self.store = ParamStore(seed)

        use_numeric = self.feature_set is FeatureSet.FULL
        self.f_u = FeatureEmbedder(self.store, FEATURE_PREFIX, schema, config.dim, config.hidden,
                                   config.field_embedding_dim, use_numeric)
        self.f_aux = FeatureEmbedder(self.store, AUX_FEATURE_PREFIX, schema, config.dim, config.hidden,
                                     config.field_embedding_dim, use_numeric)
        self.f_s = SessionEncoder(self.store, schema, config.dim, config.hidden, config.field_embedding_dim,
                                  config.layers, config.heads, config.max_session_len, self.counter)
        self.f_o = PredictionHead(self.store, config.dim, config.projected_dim, config.head_mode,
                                  config.duration_unit_ms, config.exp_clamp)

    @property
    def head_mode(self) -> HeadMode:
        return self.f_o.mode

    def zero_states(self, n: int) -> np.ndarray:
        return np.zeros((n, self.config.dim))

    def feature_embeddings(self, features, aux: bool = False) -> np.ndarray:
        with no_grad():
            return (self.f_aux if aux else self.f_u)(list(features)).data

    def encode(self, sessions: Sequence[Session], count: bool = True, batch_size: int = 64):
        """SessionStates for each session; count=False leaves the InferenceCounter untouched."""
        return self.f_s.encode_sessions(sessions, batch_size, count)

    def metadata(self) -> Dict:
        return {
            "model": self.config.model_dump(),
            "schema": {
                "num_genders": self.schema.num_genders,
                "num_countries": self.schema.num_countries,
                "max_session_len": self.schema.max_session_len,
                "log_duration_scale": self.schema.log_duration_scale,
            },
            "seed": self.seed,
            "use_session": self.use_session,
            "feature_set": self.feature_set.value,
            "aux_counterpart": self.aux_counterpart,
            "head_mode": self.head_mode.value,
        }

    def save(self, path: str | Path, extra: Optional[Dict] = None,
             optimizer: Optional[AdamW] = None) -> Path:
        tensors = self.store.state_dict()
        if optimizer is not None:
            tensors.update(optimizer.state_dict())
        metadata = self.metadata()
        metadata.update(extra or {})
        return save_checkpoint(path, tensors, metadata)

    def load_weights(self, tensors: Dict[str, np.ndarray]) -> None:
        self.store.load_state_dict({k: v for k, v in tensors.items() if not k.startswith("optim/")})

    @classmethod
    def load(cls, path: str | Path, counter: InferenceCounter | None = None) -> Tuple["CupidModel", Dict]:
        """Rebuild a model from a checkpoint; returns (model, metadata)."""
        tensors, metadata = load_checkpoint(path)
        schema = FeatureSchema(**metadata["schema"])
        model = cls(ModelConfig(**metadata["model"]), schema, seed=metadata.get("seed", 0),
                    use_session=metadata["use_session"], feature_set=metadata["feature_set"],
                    counter=counter)
        model.aux_counterpart = metadata.get("aux_counterpart", False)
        model.load_weights(tensors)
        return model, metadata


def build_variant(variant: str, config: RunConfig, counter: InferenceCounter | None = None) -> CupidModel:
    """Model for an ablation variant or a baseline, all from the same init seed."""
    model_config = config.model
    if variant == "no-et":
        model_config = model_config.model_copy(update={"head_mode": HeadMode.LINEAR.value})
    elif variant not in ABLATIONS + BASELINES:
        raise ConfigError(f"Unknown variant: {variant}")
    use_session = variant not in ("no-session",) + BASELINES
    feature_set = FeatureSet.DEMOGRAPHICS if variant == "wide_deep" else FeatureSet.FULL
    return CupidModel(model_config, schema_for(config), seed=derive_seed(config.seed, "init"),
                      use_session=use_session, feature_set=feature_set, counter=counter)


# ----------------------------------------------------------------------
# losses and closed forms
# ----------------------------------------------------------------------

def mse_loss(predictions: Sequence[float], targets: Sequence[float]) -> float:
    """Mean squared difference with compensated summation."""
    predictions = np.asarray(predictions, dtype=np.float64).ravel()
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if predictions.size == 0:
        raise DataError("mse_loss of an empty input")
    if predictions.shape != targets.shape:
        raise DataError(f"mse_loss length mismatch: {predictions.size} vs {targets.size}")
    return math.fsum((predictions - targets) ** 2) / predictions.size


def squared_error(z: Tensor, targets: np.ndarray) -> Tensor:
    return square(z - Tensor(targets)).mean()


def reduction_factor(epochs: int, phase1_epochs: int, mean_session_len: float) -> float:
    """Joint-training transformer passes divided by two-phase passes: 2 N |S| / (N1 + 2)."""
    if epochs <= 0 or phase1_epochs <= 0 or mean_session_len <= 0:
        raise ConfigError("reduction_factor arguments must be positive")
    return 2.0 * epochs * mean_session_len / (phase1_epochs + 2)


def check_temporal_alignment(session: Session, state_index: int, record: MatchRecord) -> None:
    """The state used for a record may only summarise matches that ended before it started."""
    if state_index > len(session):
        raise DataError(f"state index {state_index} beyond session of length {len(session)}")
    if state_index and session.records[state_index - 1].end_time_ms > record.start_time_ms:
        raise DataError(
            f"temporal leakage: state {state_index} of user {session.owner} includes a match ending at "
            f"{session.records[state_index - 1].end_time_ms} after the match starting at {record.start_time_ms}"
        )


# ----------------------------------------------------------------------
# training examples
# ----------------------------------------------------------------------

@dataclass
class TrainingExamples:
    """Directed training records with their own and the counterpart's session locations."""
    records: List[MatchRecord]
    sessions: List[Session]
    own: List[RecordLocation]
    counterpart: List[RecordLocation]

    @classmethod
    def from_dataset(cls, dataset: Dataset, max_session_len: int) -> "TrainingExamples":
        train = dataset.restricted_to(dataset.train_end_ms)
        if not train.events:
            raise DataError("no training records before the end of the training window")
        sessions = train.sessions(max_session_len)
        locations = train.locations(max_session_len)
        own, counterpart = [], []
        for record in train.events:
            mine = locations[(record.self_id, record.end_time_ms)]
            theirs = locations.get((record.counterpart, record.end_time_ms))
            if theirs is None:
                raise DataError(f"missing counterpart record for {record.self_id}->{record.counterpart} "
                                f"at {record.end_time_ms}")
            check_temporal_alignment(sessions[mine.session_index], mine.position, record)
            check_temporal_alignment(sessions[theirs.session_index], theirs.position, record)
            own.append(mine)
            counterpart.append(theirs)
        return cls(list(train.events), sessions, own, counterpart)

    def __len__(self) -> int:
        return len(self.records)

    def targets(self, mode: HeadMode, duration_unit_ms: float) -> np.ndarray:
        return training_target([r.duration_ms for r in self.records], mode, duration_unit_ms)

    def mean_session_len(self) -> float:
        return len(self.records) / len(self.sessions)


EpochCallback = Callable[[str, int, float], bool]


def _shuffled(n: int, seed: int, phase: str, epoch: int) -> np.ndarray:
    return np.random.default_rng(derive_seed(seed, f"shuffle/{phase}/{epoch}")).permutation(n)


def _optimizer(params, config: TrainingConfig) -> AdamW:
    return AdamW(params, lr=config.lr, weight_decay=config.weight_decay)


# ----------------------------------------------------------------------
# phase 1
# ----------------------------------------------------------------------

def train_phase1(model: CupidModel, examples: TrainingExamples, config: TrainingConfig, seed: int,
                 optimizer: Optional[AdamW] = None, start_epoch: int = 0,
                 on_epoch: Optional[EpochCallback] = None) -> List[float]:
    """
    One encode per session per epoch; the record at session position p is
    scored with state p against the auxiliary counterpart embedding.
    """
    if not len(examples):
        raise DataError("phase 1 needs a non-empty training set")
    optimizer = optimizer or _optimizer(model.store.parameters(), config)
    targets = examples.targets(model.head_mode, model.config.duration_unit_ms)
    by_session: Dict[int, List[int]] = {}
    for i, loc in enumerate(examples.own):
        by_session.setdefault(loc.session_index, []).append(i)
    session_ids = sorted(by_session)

    losses = []
    for epoch in range(start_epoch, config.phase1_epochs):
        order = [session_ids[i] for i in _shuffled(len(session_ids), seed, "phase1", epoch)]
        total, count = 0.0, 0
        for start in range(0, len(order), config.session_batch_size):
            batch = order[start:start + config.session_batch_size]
            rows, positions, items = [], [], []
            for row, s_idx in enumerate(batch):
                for i in by_session[s_idx]:
                    rows.append(row)
                    positions.append(examples.own[i].position)
                    items.append(i)
            records = [examples.records[i] for i in items]

            model.store.zero_grad()
            e_u = model.f_u([r.self_features for r in records])
            if model.use_session:
                states = model.f_s.forward([examples.sessions[s] for s in batch])
                e_i = e_u + states[(np.array(rows), np.array(positions))]
            else:
                e_i = e_u
            e_j = model.f_aux([r.counterpart_features for r in records])
            loss = squared_error(model.f_o.logits(e_i, e_j), targets[items])
            loss.backward()
            optimizer.step()
            total += loss.item() * len(items)
            count += len(items)
        losses.append(total / count)
        logger.info(f"Phase 1 epoch {epoch + 1}/{config.phase1_epochs}: loss={losses[-1]:.4f}")
        if on_epoch is not None and on_epoch("phase1", epoch, losses[-1]):
            break
    return losses


# ----------------------------------------------------------------------
# phase 2
# ----------------------------------------------------------------------

def precompute_session_table(model: CupidModel, sessions: Sequence[Session], threads: int = 1) -> List[np.ndarray]:
    """Session states for every session, one encode each; identical for any thread count."""
    if threads <= 1 or len(sessions) < 2:
        return [s.states for s in model.encode(sessions)]
    chunks = [list(sessions[i::threads]) for i in range(threads)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(model.encode, chunks))
    table: List[np.ndarray] = [None] * len(sessions)
    for offset, chunk_states in enumerate(results):
        for k, states in enumerate(chunk_states):
            table[offset + k * threads] = states.states
    return table


@dataclass
class PrecomputedRepresentations:
    e_i: np.ndarray
    e_j: np.ndarray


def precompute_representations(model: CupidModel, examples: TrainingExamples,
                               threads: int = 1) -> PrecomputedRepresentations:
    """e^u + e^s for both sides of every training record, from frozen f_u and f_s."""
    n = len(examples)
    e_u_i = model.feature_embeddings(r.self_features for r in examples.records)
    e_u_j = model.feature_embeddings(r.counterpart_features for r in examples.records)
    if not model.use_session:
        return PrecomputedRepresentations(e_u_i, e_u_j)

    # Phase 2 is costed as one pass per side, 2|D|/|S̄| forwards in total; the
    # counterpart table stays a separate pass even when both sides share sessions.
    requester_table = precompute_session_table(model, examples.sessions, threads)
    counterpart_table = precompute_session_table(model, examples.sessions, threads)
    e_s_i = np.empty((n, model.config.dim))
    e_s_j = np.empty((n, model.config.dim))
    for k in range(n):
        mine, theirs = examples.own[k], examples.counterpart[k]
        try:
            e_s_i[k] = requester_table[mine.session_index][mine.position]
            e_s_j[k] = counterpart_table[theirs.session_index][theirs.position]
        except IndexError as e:
            record = examples.records[k]
            raise DataError(f"missing precomputed state for user {record.self_id} at {record.end_time_ms}") from e
    return PrecomputedRepresentations(e_u_i + e_s_i, e_u_j + e_s_j)


def train_phase2(model: CupidModel, examples: TrainingExamples, config: TrainingConfig, seed: int,
                 optimizer: Optional[AdamW] = None, start_epoch: int = 0, threads: int = 1,
                 on_epoch: Optional[EpochCallback] = None) -> List[float]:
    """Freeze f_u and f_s, precompute both sides once, then train the head on batches of matches."""
    model.store.freeze(FEATURE_PREFIX + "/")
    model.store.freeze(AUX_FEATURE_PREFIX + "/")
    model.store.freeze(SESSION_PREFIX + "/")
    model.aux_counterpart = False
    reps = precompute_representations(model, examples, threads)
    targets = examples.targets(model.head_mode, model.config.duration_unit_ms)
    optimizer = optimizer or _optimizer(model.store.parameters(HEAD_PREFIX + "/"), config)

    losses = []
    for epoch in range(start_epoch, config.phase2_epochs):
        order = _shuffled(len(examples), seed, "phase2", epoch)
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            model.store.zero_grad()
            loss = squared_error(model.f_o.logits(Tensor(reps.e_i[idx]), Tensor(reps.e_j[idx])), targets[idx])
            loss.backward()
            optimizer.step()
            total += loss.item() * len(idx)
        losses.append(total / len(order))
        logger.info(f"Phase 2 epoch {epoch + 1}/{config.phase2_epochs}: loss={losses[-1]:.4f}")
        if on_epoch is not None and on_epoch("phase2", epoch, losses[-1]):
            break
    return losses


# ----------------------------------------------------------------------
# joint baseline
# ----------------------------------------------------------------------

def train_joint_baseline(model: CupidModel, examples: TrainingExamples, config: TrainingConfig, seed: int,
                         optimizer: Optional[AdamW] = None, start_epoch: int = 0,
                         on_epoch: Optional[EpochCallback] = None) -> List[float]:
    """Per match, encode both users' session prefixes (two passes), then update everything."""
    if not len(examples):
        raise DataError("joint training needs a non-empty training set")
    optimizer = optimizer or _optimizer(model.store.parameters(), config)
    targets = examples.targets(model.head_mode, model.config.duration_unit_ms)

    losses = []
    for epoch in range(start_epoch, config.epochs):
        order = _shuffled(len(examples), seed, "joint", epoch)
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            records = [examples.records[i] for i in idx]
            model.store.zero_grad()
            e_i = model.f_u([r.self_features for r in records])
            e_j = model.f_u([r.counterpart_features for r in records])
            if model.use_session:
                prefixes, positions = [], []
                for side in (examples.own, examples.counterpart):
                    for i in idx:
                        loc = side[i]
                        prefixes.append(examples.sessions[loc.session_index].prefix(loc.position))
                        positions.append(loc.position)
                states = model.f_s.forward(prefixes)[(np.arange(len(prefixes)), np.array(positions))]
                n = len(idx)
                e_i = e_i + states[:n]
                e_j = e_j + states[n:]
            loss = squared_error(model.f_o.logits(e_i, e_j), targets[idx])
            loss.backward()
            optimizer.step()
            total += loss.item() * len(idx)
        losses.append(total / len(order))
        logger.info(f"Joint epoch {epoch + 1}/{config.epochs}: loss={losses[-1]:.4f}")
        if on_epoch is not None and on_epoch("joint", epoch, losses[-1]):
            break
    return losses


# ----------------------------------------------------------------------
# orchestration
# ----------------------------------------------------------------------

@dataclass
class TrainingSummary:
    variant: str
    mode: str
    losses: Dict[str, List[float]] = field(default_factory=dict)
    val_mse: List[float] = field(default_factory=list)
    transformer_forward_count: int = 0
    epochs_run: int = 0


class Trainer:
    """
    Runs a training mode end to end: validation after every epoch,
    reduce-on-plateau, the convergence rule, per-epoch metrics rows and
    checkpoints that can be resumed.
    """

    def __init__(self, model: CupidModel, dataset: Dataset, config: RunConfig,
                 metrics: Optional[MetricsLogger] = None, checkpoint_path: Optional[str | Path] = None,
                 variant: str = "full", threshold_ms: Optional[float] = None):
        self.model = model
        self.dataset = dataset
        self.config = config
        self.training = config.training
        self.metrics = metrics
        self.checkpoint_path = Path(checkpoint_path) if checkpoint_path else None
        self.variant = variant
        self.threshold_ms = threshold_ms if threshold_ms is not None else (
            config.eval.quality_threshold_ms or dataset.quality_threshold_ms)
        self.seed = derive_seed(config.seed, "shuffle")
        self.examples = TrainingExamples.from_dataset(dataset, model.config.max_session_len)
        self.has_validation = bool(dataset.split("validation")) and self.training.validate_every_epoch
        self.global_epoch = 0
        self.optimizer: Optional[AdamW] = None
        self.scheduler: Optional[ReduceLROnPlateau] = None
        self._best = math.inf
        self._stale = 0
        self.summary = TrainingSummary(variant=variant, mode="")

    # -- helpers -------------------------------------------------------

    def _start_phase(self, params) -> None:
        self.optimizer = _optimizer(params, self.training)
        self.scheduler = ReduceLROnPlateau(self.optimizer, self.training.plateau_factor,
                                           self.training.plateau_patience, self.training.plateau_threshold)
        self._best = math.inf
        self._stale = 0

    def _init_bias(self) -> None:
        targets = self.examples.targets(self.model.head_mode, self.model.config.duration_unit_ms)
        self.model.f_o.init_bias(float(np.mean(targets)))

    def _validate(self) -> Tuple[Optional[float], Optional[float]]:
        if not self.has_validation:
            return None, None
        from .evaluation import evaluate

        report = evaluate(self.model, self.dataset, "validation", self.threshold_ms)
        entire = report.entire
        return entire.mse, entire.auroc

    def _on_epoch(self, phase: str, epoch: int, loss: float) -> bool:
        """Validate, log, checkpoint; True when the convergence rule says stop."""
        self.global_epoch += 1
        self.summary.epochs_run += 1
        self.summary.losses.setdefault(phase, []).append(loss)
        val_mse, val_auroc = self._validate()
        stop = False
        if val_mse is not None:
            self.summary.val_mse.append(val_mse)
            self.scheduler.step(val_mse)
            if val_mse < self._best - self.training.plateau_threshold:
                self._best = val_mse
                self._stale = 0
            else:
                self._stale += 1
                stop = self._stale >= self.training.convergence_patience
        if self.metrics is not None:
            self.metrics.log(
                epoch=self.global_epoch, phase=phase, loss=loss, val_mse=val_mse, val_auroc=val_auroc,
                lr=self.optimizer.lr, transformer_forward_count=self.model.counter.transformer_forward_count,
                clamp_count=self.model.f_o.clamp_counter.count,
            )
        self._save(phase, epoch + 1, done=stop)
        if stop:
            logger.info(f"{phase} converged after epoch {epoch + 1}")
        return stop

    def _save(self, phase: str, phase_epoch: int, done: bool = False) -> None:
        if self.checkpoint_path is None:
            return
        self.model.save(self.checkpoint_path, optimizer=self.optimizer, extra={
            "variant": self.variant,
            "mode": self.summary.mode,
            "phase": phase,
            "phase_epoch": phase_epoch,
            "phase_done": done,
            "global_epoch": self.global_epoch,
            "step_count": self.optimizer.step_count,
            "lr": self.optimizer.lr,
            "scheduler": self.scheduler.state(),
            "transformer_forward_count": self.model.counter.transformer_forward_count,
            "run_config": self.config.model_dump(),
        })

    def _restore(self, resume: Optional[Dict], phase: str, tensors: Optional[Dict], epochs: int) -> int:
        """Starting epoch within phase when resuming into it."""
        if not resume or resume.get("phase") != phase:
            return 0
        if resume.get("phase_done"):
            return epochs
        self.optimizer.load_state_dict(tensors or {}, resume.get("step_count", 0), resume.get("lr", self.training.lr))
        self.scheduler.load_state(resume.get("scheduler", {}))
        return int(resume.get("phase_epoch", 0))

    # -- modes ---------------------------------------------------------

    def fit_two_phase(self, phase1_only: bool = False, resume: Optional[Dict] = None,
                      resume_tensors: Optional[Dict] = None) -> TrainingSummary:
        logger.info(f"=== Two-phase training started ({self.variant}, {len(self.examples)} records, "
                    f"{len(self.examples.sessions)} sessions) ===")
        self.summary.mode = "phase1-only" if phase1_only else "two-phase"
        if resume:
            self.global_epoch = int(resume.get("global_epoch", 0))
        resumed_phase = resume.get("phase") if resume else None

        if resumed_phase != "phase2":
            if not resume:
                self._init_bias()
            self.model.aux_counterpart = True
            self._start_phase(self.model.store.parameters())
            start = self._restore(resume, "phase1", resume_tensors, self.training.phase1_epochs)
            if start < self.training.phase1_epochs:
                train_phase1(self.model, self.examples, self.training, self.seed, self.optimizer,
                             start, self._on_epoch)

        if phase1_only:
            self.model.aux_counterpart = True
        else:
            self._start_phase(self.model.store.parameters(HEAD_PREFIX + "/"))
            start = self._restore(resume, "phase2", resume_tensors, self.training.phase2_epochs)
            train_phase2(self.model, self.examples, self.training, self.seed, self.optimizer,
                         start, self.config.threads, self._on_epoch)
        self.summary.transformer_forward_count = self.model.counter.transformer_forward_count
        logger.info(f"=== Two-phase training finished: {self.summary.transformer_forward_count} transformer passes ===")
        return self.summary

    def fit_joint(self, resume: Optional[Dict] = None, resume_tensors: Optional[Dict] = None) -> TrainingSummary:
        logger.info(f"=== Joint training started ({len(self.examples)} records) ===")
        self.summary.mode = "joint"
        if resume:
            self.global_epoch = int(resume.get("global_epoch", 0))
        else:
            self._init_bias()
        self._start_phase(self.model.store.parameters())
        start = self._restore(resume, "joint", resume_tensors, self.training.epochs)
        train_joint_baseline(self.model, self.examples, self.training, self.seed, self.optimizer,
                             start, self._on_epoch)
        self.summary.transformer_forward_count = self.model.counter.transformer_forward_count
        logger.info(f"=== Joint training finished: {self.summary.transformer_forward_count} transformer passes ===")
        return self.summary

    def fit_ablation(self) -> TrainingSummary:
        """Train according to self.variant (see build_variant)."""
        return self.fit_two_phase(phase1_only=self.variant == "no-sp")
