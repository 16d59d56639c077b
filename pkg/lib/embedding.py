"""
Embedding layers: Wide&Deep feature embedders and the causal session encoder.

- FeatureEmbedder: user features X -> e^u (used as f_u and as the auxiliary
  counterpart layer during phase 1)
- MatchEmbedder: one matching history (self features, counterpart
  features, log duration) -> e^m
- SessionEncoder: [start, e^m_1, ..., e^m_h] -> causal transformer ->
  SessionStates, one state per prefix length
"""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .autograd import Tensor, broadcast_to, concat, no_grad, take_rows
from .domain import FeatureSchema, FeatureVector, MatchRecord, Session
from .errors import DataError
from .layers import MLP, CausalTransformer, Embedding, Linear, ParamStore

logger = logging.getLogger(__name__)

FEATURE_PREFIX = "feature"
AUX_FEATURE_PREFIX = "aux_feature"
SESSION_PREFIX = "session"


class InferenceCounter:
    """Counts causal-transformer forward passes, one per encoded session."""

    def __init__(self):
        self._count = 0
        self._lock = threading.Lock()

    @property
    def transformer_forward_count(self) -> int:
        return self._count

    def increment(self, sessions: int = 1) -> None:
        with self._lock:
            self._count += sessions

    def reset(self) -> None:
        with self._lock:
            self._count = 0


# ----------------------------------------------------------------------
# feature arrays
# ----------------------------------------------------------------------

def _check_categories(categorical: np.ndarray, cardinalities: Sequence[int]) -> None:
    for column, cardinality in enumerate(cardinalities):
        values = categorical[:, column]
        if values.size and (values.min() < 0 or values.max() >= cardinality):
            bad = int(values[(values < 0) | (values >= cardinality)][0])
            raise DataError(f"category index {bad} out of range [0, {cardinality}) in field {column}")


def feature_arrays(features: Sequence[FeatureVector], schema: FeatureSchema) -> Tuple[np.ndarray, np.ndarray]:
    """(categorical [N, 2] ints, scaled numeric [N, 3]) for a batch of feature vectors."""
    categorical = np.array([(f.gender, f.country) for f in features], dtype=np.int64).reshape(-1, 2)
    numeric = np.array([f.numeric() for f in features], dtype=np.float64).reshape(-1, 3)
    _check_categories(categorical, (schema.num_genders, schema.num_countries))
    return categorical, numeric * np.array(schema.numeric_scale())


def match_arrays(records: Sequence[MatchRecord], schema: FeatureSchema) -> Tuple[np.ndarray, np.ndarray]:
    """(categorical [N, 4], numeric [N, 7]): self, counterpart, then log duration."""
    self_cat, self_num = feature_arrays([r.self_features for r in records], schema)
    cp_cat, cp_num = feature_arrays([r.counterpart_features for r in records], schema)
    durations = np.array([[r.log_duration] for r in records], dtype=np.float64).reshape(-1, 1)
    numeric = np.concatenate([self_num, cp_num, durations / schema.log_duration_scale], axis=1)
    return np.concatenate([self_cat, cp_cat], axis=1), numeric


# ----------------------------------------------------------------------
# Wide&Deep
# ----------------------------------------------------------------------

class WideDeep:
    """
    Wide: one linear layer over one-hot categoricals plus numeric values.
    Deep: per-field embedding tables concatenated with numeric values,
    then an MLP [h1, h2] -> dim. Output is wide + deep.
    """

    def __init__(self, store: ParamStore, name: str, cardinalities: Sequence[int], num_numeric: int,
                 dim: int, hidden: Sequence[int], field_dim: int, use_numeric: bool = True):
        self.name = name
        self.cardinalities = list(cardinalities)
        self.num_numeric = num_numeric
        self.dim = dim
        self.use_numeric = use_numeric
        self._offsets = np.cumsum([0] + self.cardinalities[:-1])
        self.wide = Linear(store, f"{name}/wide", sum(self.cardinalities) + num_numeric, dim)
        self.fields = [Embedding(store, f"{name}/deep/field{i}", c, field_dim) for i, c in enumerate(self.cardinalities)]
        self.deep = MLP(store, f"{name}/deep/mlp", [len(self.cardinalities) * field_dim + num_numeric, *hidden, dim])

    def _one_hot(self, categorical: np.ndarray) -> np.ndarray:
        one_hot = np.zeros((categorical.shape[0], sum(self.cardinalities)))
        rows = np.arange(categorical.shape[0])
        for column, offset in enumerate(self._offsets):
            one_hot[rows, offset + categorical[:, column]] = 1.0
        return one_hot

    def forward(self, categorical: np.ndarray, numeric: np.ndarray) -> Tensor:
        """Batched forward: [N, F] ints and [N, K] floats -> [N, dim]."""
        if categorical.shape[1] != len(self.cardinalities) or numeric.shape[1] != self.num_numeric:
            raise DataError(f"{self.name}: expected {len(self.cardinalities)} categorical and "
                            f"{self.num_numeric} numeric columns, got {categorical.shape[1]} and {numeric.shape[1]}")
        _check_categories(categorical, self.cardinalities)
        if not self.use_numeric:
            numeric = np.zeros_like(numeric)
        wide_in = Tensor(np.concatenate([self._one_hot(categorical), numeric], axis=1))
        fields = [table(categorical[:, i]) for i, table in enumerate(self.fields)]
        deep_in = concat(fields + [Tensor(numeric)], axis=1)
        return self.wide(wide_in) + self.deep(deep_in)


class FeatureEmbedder(WideDeep):
    """f_u / auxiliary f_u over (gender, country, match_count, mean_log_duration, last_log_duration)."""

    def __init__(self, store: ParamStore, name: str, schema: FeatureSchema, dim: int,
                 hidden: Sequence[int], field_dim: int = 8, use_numeric: bool = True):
        super().__init__(store, name, (schema.num_genders, schema.num_countries), 3,
                         dim, hidden, field_dim, use_numeric)
        self.schema = schema

    def __call__(self, features: Sequence[FeatureVector]) -> Tensor:
        return self.forward(*feature_arrays(features, self.schema))


class MatchEmbedder(WideDeep):
    """e^m over (self features, counterpart features, log-scaled duration); time is not an input."""

    def __init__(self, store: ParamStore, name: str, schema: FeatureSchema, dim: int,
                 hidden: Sequence[int], field_dim: int = 8, use_numeric: bool = True):
        cards = (schema.num_genders, schema.num_countries, schema.num_genders, schema.num_countries)
        super().__init__(store, name, cards, 7, dim, hidden, field_dim, use_numeric)
        self.schema = schema

    def __call__(self, records: Sequence[MatchRecord]) -> Tensor:
        return self.forward(*match_arrays(records, self.schema))


def embed_features(embedder: FeatureEmbedder, x: FeatureVector | Sequence[FeatureVector]) -> Tensor:
    """e^u for one feature vector ([dim]) or a batch ([N, dim])."""
    if isinstance(x, FeatureVector):
        return embedder([x]).reshape(embedder.dim)
    return embedder(list(x))


def embed_match(embedder: MatchEmbedder, m: MatchRecord | Sequence[MatchRecord]) -> Tensor:
    if isinstance(m, MatchRecord):
        return embedder([m]).reshape(embedder.dim)
    return embedder(list(m))


# ----------------------------------------------------------------------
# session encoder
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SessionStates:
    """states[k] is the representation after the first k matches; len = h + 1."""
    owner: int
    states: np.ndarray
    end_times: Tuple[int, ...] = ()

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def state(self, k: int) -> np.ndarray:
        return self.states[k]


class SessionEncoder:
    """
    Learned start token + learned absolute positions + causal transformer.

    Every batch is padded to max_session_len + 1 positions, so a session's
    outputs never depend on what else shares its batch or on how long it is.
    """

    def __init__(self, store: ParamStore, schema: FeatureSchema, dim: int, hidden: Sequence[int],
                 field_dim: int, layers: int, heads: int, max_session_len: int,
                 counter: InferenceCounter | None = None, name: str = SESSION_PREFIX):
        self.dim = dim
        self.max_session_len = max_session_len
        self.seq_len = max_session_len + 1
        self.counter = counter or InferenceCounter()
        self.match = MatchEmbedder(store, f"{name}/match", schema, dim, hidden, field_dim)
        self.start = store.normal(f"{name}/start", (dim,))
        self.positions = store.normal(f"{name}/positions", (self.seq_len, dim))
        self.transformer = CausalTransformer(store, f"{name}/transformer", dim, layers, heads, self.seq_len)

    def forward(self, sessions: Sequence[Session], count: bool = True) -> Tensor:
        """Differentiable batched pass: [B, max_session_len + 1, dim]."""
        sessions = [s.truncated(self.max_session_len) for s in sessions]
        batch = len(sessions)
        records = [r for s in sessions for r in s.records]
        pad = len(records)
        index = np.full((batch, self.max_session_len), pad, dtype=np.int64)
        cursor = 0
        for row, session in enumerate(sessions):
            index[row, :len(session)] = np.arange(cursor, cursor + len(session))
            cursor += len(session)

        zero_row = Tensor(np.zeros((1, self.dim)))
        table = concat([self.match(records), zero_row], axis=0) if records else zero_row
        matches = take_rows(table, index)
        start = broadcast_to(self.start.reshape(1, 1, self.dim), (batch, 1, self.dim))
        tokens = concat([start, matches], axis=1) + self.positions
        if count:
            self.counter.increment(batch)
        return self.transformer(tokens)

    def encode_sessions(self, sessions: Sequence[Session], batch_size: int = 64,
                        count: bool = True) -> List[SessionStates]:
        """Inference-only batched encoding; one counted forward per session."""
        results: List[SessionStates] = []
        with no_grad():
            for i in range(0, len(sessions), batch_size):
                chunk = [s.truncated(self.max_session_len) for s in sessions[i:i + batch_size]]
                out = self.forward(chunk, count).data
                for row, session in enumerate(chunk):
                    results.append(SessionStates(session.owner, out[row, :len(session) + 1].copy(),
                                                 tuple(session.end_times())))
        return results

    def encode_session(self, session: Session) -> SessionStates:
        return self.encode_sessions([session])[0]


def encode_session(encoder: SessionEncoder, session: Session) -> SessionStates:
    return encoder.encode_session(session)
