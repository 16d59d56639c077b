"""
Serving engine: per-user session representations kept up to date off the
request path.

- EmbeddingMemory: latest committed e^s per user (plus a short history for
  delayed lookups). Readers never block on writers.
- ThreadedUpdateWorker: background threads that re-encode a user's session
  after each finished match (production mode).
- DeferredUpdateScheduler: the same jobs on a virtual clock, committed
  compute_delay_ms after they were enqueued (deterministic mode, used by
  the simulator).
- MatchingEngine: scores a pool with one matrix product and pairs it
  greedily; never calls the session encoder while scoring.
"""
from __future__ import annotations

import heapq
import itertools
import logging
import math
import threading
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import EngineConfig
from .custom_helpers import Stopwatch
from .domain import Demographics, FeatureVector, MatchingPool, MatchRecord, Session, rolling_features
from .errors import ConfigError, DataError
from .prediction import score_matrix
from .training import CupidModel

logger = logging.getLogger(__name__)

LATENCY_COLUMNS = ["mode", "pool_size", "p50_us", "p90_us", "p99_us"]


def monotonic_ms() -> int:
    return time.monotonic_ns() // 1_000_000


@dataclass(frozen=True)
class DelayConfig:
    """Lookup delay t': only states computed from matches ended by now - t' are visible."""
    t_prime_ms: float = 0.0

    def __post_init__(self):
        if self.t_prime_ms < 0 or math.isnan(self.t_prime_ms):
            raise ConfigError(f"delay must be non-negative, got {self.t_prime_ms}")


@dataclass(frozen=True)
class MemorySlot:
    representation: np.ndarray
    computed_upto_time_ms: int
    commit_time_ms: int


@dataclass(frozen=True)
class UpdateJob:
    """Re-encode user's session snapshot; enqueued when a match ends."""
    user: int
    session: Session
    enqueue_time_ms: int

    @property
    def snapshot_end_ms(self) -> int:
        return self.session.last_end_time_ms


class EmbeddingMemory:
    """
    Map user -> committed session representations.

    Each commit swaps in a new immutable tuple of slots, so a lookup sees
    either the old or the new slot, never a partial write. Users without
    any commit get the empty-session state.
    """

    def __init__(self, empty_state: np.ndarray, history_limit: int = 64):
        self.empty_state = _frozen(empty_state)
        self.history_limit = history_limit
        self._slots: Dict[int, Tuple[MemorySlot, ...]] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._slots)

    def __contains__(self, user: int) -> bool:
        return user in self._slots

    def commit(self, user: int, representation: np.ndarray, computed_upto_time_ms: int,
               commit_time_ms: int) -> MemorySlot:
        if np.shape(representation) != self.empty_state.shape:
            raise DataError(f"representation shape {np.shape(representation)} does not match "
                            f"{self.empty_state.shape}")
        slot = MemorySlot(_frozen(representation), int(computed_upto_time_ms), int(commit_time_ms))
        with self._lock:
            history = self._slots.get(user, ())
            if history and commit_time_ms < history[-1].commit_time_ms:
                raise DataError(f"commit for user {user} at {commit_time_ms} precedes "
                                f"previous commit at {history[-1].commit_time_ms}")
            self._slots[user] = (history + (slot,))[-self.history_limit:]
        return slot

    def reset(self, user: int, now_ms: int) -> MemorySlot:
        """A new session starts: the user's state is the empty-session state again."""
        return self.commit(user, self.empty_state, now_ms, now_ms)

    def latest(self, user: int) -> Optional[MemorySlot]:
        history = self._slots.get(user)
        return history[-1] if history else None

    def lookup(self, user: int, now_ms: int, delay: DelayConfig = DelayConfig()) -> np.ndarray:
        history = self._slots.get(user)
        if not history:
            return self.empty_state
        if delay.t_prime_ms == 0:
            return history[-1].representation
        cutoff = now_ms - delay.t_prime_ms
        for slot in reversed(history):
            if slot.computed_upto_time_ms <= cutoff:
                return slot.representation
        return self.empty_state


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


def lookup(memory: EmbeddingMemory, user: int, now_ms: int, delay: DelayConfig = DelayConfig()) -> np.ndarray:
    return memory.lookup(user, now_ms, delay)


# ----------------------------------------------------------------------
# update executors
# ----------------------------------------------------------------------

SessionEncodeFn = Callable[[Sequence[Session]], List[np.ndarray]]


def final_states(model: CupidModel) -> SessionEncodeFn:
    """Batch encoder returning each session's final state (counted passes)."""
    def encode(sessions: Sequence[Session]) -> List[np.ndarray]:
        return [states.final for states in model.encode(sessions)]
    return encode


class ThreadedUpdateWorker:
    """
    Background session-update workers.

    A newer job for a user replaces that user's queued job; at most one job
    per user is in flight so commits for a user stay in order. The queue
    keeps accepting work beyond queue_capacity and counts back-pressure
    events instead of dropping jobs.
    """

    def __init__(self, encode: SessionEncodeFn, memory: EmbeddingMemory, workers: int = 1,
                 queue_capacity: int = 1024, clock: Callable[[], int] = monotonic_ms):
        self.encode = encode
        self.memory = memory
        self.queue_capacity = queue_capacity
        self.clock = clock
        self._pending: Dict[int, UpdateJob] = {}
        self._order: deque = deque()
        self._in_flight: set = set()
        self._committed_upto: Dict[int, int] = {}
        self._cond = threading.Condition()
        self._stopping = False
        self.superseded = 0
        self.completed = 0
        self.failed = 0
        self.backpressure_events = 0
        self._threads = [threading.Thread(target=self._run, name=f"session-update-{i}", daemon=True)
                         for i in range(workers)]
        for thread in self._threads:
            thread.start()
        logger.info(f"Started {workers} session update worker(s)")

    @property
    def queue_depth(self) -> int:
        return len(self._pending)

    def submit(self, job: UpdateJob) -> bool:
        """Enqueue and acknowledge; never blocks on encoding."""
        with self._cond:
            if self._stopping:
                return False
            if job.user in self._pending:
                self.superseded += 1
            else:
                self._order.append(job.user)
            self._pending[job.user] = job
            if len(self._pending) > self.queue_capacity:
                self.backpressure_events += 1
                logger.warning(f"Update queue depth {len(self._pending)} exceeds capacity {self.queue_capacity}")
            self._cond.notify()
        return True

    def _next_job(self) -> Optional[UpdateJob]:
        for _ in range(len(self._order)):
            user = self._order.popleft()
            if user in self._in_flight:
                self._order.append(user)
                continue
            self._in_flight.add(user)
            return self._pending.pop(user)
        return None

    def _run(self) -> None:
        while True:
            with self._cond:
                job = self._next_job()
                while job is None:
                    if self._stopping:
                        return
                    self._cond.wait()
                    job = self._next_job()
            try:
                if job.snapshot_end_ms > self._committed_upto.get(job.user, -1):
                    representation = self.encode([job.session])[0]
                    self.memory.commit(job.user, representation, job.snapshot_end_ms, self.clock())
                    self._committed_upto[job.user] = job.snapshot_end_ms
            except Exception as e:
                self.failed += 1
                logger.error(f"Session update for user {job.user} failed: {e}")
            finally:
                with self._cond:
                    self._in_flight.discard(job.user)
                    self.completed += 1
                    self._cond.notify_all()

    def drain(self, timeout_s: Optional[float] = None) -> bool:
        """Block until nothing is queued or in flight; False on timeout."""
        with self._cond:
            return self._cond.wait_for(lambda: not self._pending and not self._in_flight, timeout_s)

    def shutdown(self, drain: bool = True) -> None:
        if drain:
            self.drain()
        with self._cond:
            self._stopping = True
            self._cond.notify_all()
        for thread in self._threads:
            thread.join()
        logger.info(f"Session update workers stopped ({self.completed} jobs, {self.superseded} superseded)")


class DeferredUpdateScheduler:
    """
    Deterministic executor on a virtual clock: a job submitted at t is
    committed at t + compute_delay_ms, in (ready time, submission) order.
    """

    def __init__(self, encode: SessionEncodeFn, memory: EmbeddingMemory, compute_delay_ms: int = 200):
        self.encode = encode
        self.memory = memory
        self.compute_delay_ms = compute_delay_ms
        self._heap: List[Tuple[int, int, int]] = []
        self._pending: Dict[int, Tuple[int, UpdateJob]] = {}
        self._seq = itertools.count()
        self.superseded = 0
        self.completed = 0

    @property
    def queue_depth(self) -> int:
        return len(self._pending)

    def submit(self, job: UpdateJob) -> bool:
        seq = next(self._seq)
        if job.user in self._pending:
            self.superseded += 1
        self._pending[job.user] = (seq, job)
        heapq.heappush(self._heap, (job.enqueue_time_ms + self.compute_delay_ms, seq, job.user))
        return True

    def run_until(self, now_ms: int) -> int:
        """Commit every job ready by now_ms in one batched encode; returns the number committed."""
        due: List[Tuple[int, UpdateJob]] = []
        while self._heap and self._heap[0][0] <= now_ms:
            ready, seq, user = heapq.heappop(self._heap)
            entry = self._pending.get(user)
            if entry is None or entry[0] != seq:
                continue
            del self._pending[user]
            due.append((ready, entry[1]))
        if not due:
            return 0
        states = self.encode([job.session for _, job in due])
        for (ready, job), state in zip(due, states):
            self.memory.commit(job.user, state, job.snapshot_end_ms, ready)
        self.completed += len(due)
        return len(due)


def submit_update(executor: ThreadedUpdateWorker | DeferredUpdateScheduler, job: UpdateJob) -> bool:
    return executor.submit(job)


# ----------------------------------------------------------------------
# scoring and pairing
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class PairingResult:
    pairs: List[Tuple[int, int]]
    unmatched: List[int]


def pair_pool(scores: np.ndarray, pool: MatchingPool | Sequence[int]) -> PairingResult:
    """
    Greedy maximum pairing on the symmetrised score matrix.

    Pairs are taken by descending (Y[i, j] + Y[j, i]) / 2; ties go to the
    lower first index, then the lower second index (pool order).
    """
    members = list(pool.members if isinstance(pool, MatchingPool) else pool)
    n = len(members)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (n, n):
        raise DataError(f"score matrix {scores.shape} does not match pool of {n}")
    if n < 2:
        return PairingResult([], members)
    upper_i, upper_j = np.triu_indices(n, 1)
    symmetric = (scores[upper_i, upper_j] + scores[upper_j, upper_i]) / 2.0
    order = np.lexsort((upper_j, upper_i, -symmetric))
    taken = np.zeros(n, dtype=bool)
    pairs = []
    for k in order:
        i, j = upper_i[k], upper_j[k]
        if taken[i] or taken[j]:
            continue
        taken[i] = taken[j] = True
        pairs.append((members[i], members[j]))
        if len(pairs) == n // 2:
            break
    return PairingResult(pairs, [m for m, t in zip(members, taken) if not t])


class MatchingEngine:
    """Pool scoring against the embedding memory plus greedy pairing."""

    def __init__(self, model: CupidModel, memory: EmbeddingMemory,
                 executor: ThreadedUpdateWorker | DeferredUpdateScheduler,
                 delay: DelayConfig = DelayConfig()):
        self.model = model
        self.memory = memory
        self.executor = executor
        self.delay = delay

    @staticmethod
    def empty_state(model: CupidModel) -> np.ndarray:
        if not model.use_session:
            return model.zero_states(1)[0]
        return model.encode([Session(-1)])[0].state(0)

    @classmethod
    def deterministic(cls, model: CupidModel, config: EngineConfig = EngineConfig(),
                      delay: DelayConfig = DelayConfig()) -> "MatchingEngine":
        memory = EmbeddingMemory(cls.empty_state(model), config.history_limit)
        return cls(model, memory, DeferredUpdateScheduler(final_states(model), memory, config.compute_delay_ms), delay)

    @classmethod
    def threaded(cls, model: CupidModel, config: EngineConfig = EngineConfig(),
                 delay: DelayConfig = DelayConfig()) -> "MatchingEngine":
        memory = EmbeddingMemory(cls.empty_state(model), config.history_limit)
        worker = ThreadedUpdateWorker(final_states(model), memory, config.workers, config.queue_capacity)
        return cls(model, memory, worker, delay)

    def submit_update(self, job: UpdateJob) -> bool:
        if not self.model.use_session:
            return True
        return self.executor.submit(job)

    def advance(self, now_ms: int) -> int:
        """Let the deterministic scheduler commit what is ready; no-op for threads."""
        if isinstance(self.executor, DeferredUpdateScheduler):
            return self.executor.run_until(now_ms)
        return 0

    def representations(self, pool: MatchingPool, features: Dict[int, FeatureVector]) -> np.ndarray:
        missing = [u for u in pool.members if u not in features]
        if missing:
            raise DataError(f"no features for pool members {missing[:5]}")
        e_u = self.model.feature_embeddings(features[u] for u in pool.members)
        if not self.model.use_session:
            return e_u
        e_s = np.stack([self.memory.lookup(u, pool.time_ms, self.delay) for u in pool.members])
        return e_u + e_s

    def score_pool(self, pool: MatchingPool, features: Dict[int, FeatureVector]) -> np.ndarray:
        """[n, n] predicted durations with a -inf diagonal."""
        return score_matrix(self.model.f_o, self.representations(pool, features))

    def pair(self, pool: MatchingPool, features: Dict[int, FeatureVector]) -> PairingResult:
        if len(pool) < 2:
            return PairingResult([], list(pool.members))
        return pair_pool(self.score_pool(pool, features), pool)

    def shutdown(self) -> None:
        if isinstance(self.executor, ThreadedUpdateWorker):
            self.executor.shutdown()


def score_pool(engine: MatchingEngine, features: Dict[int, FeatureVector], pool: MatchingPool) -> np.ndarray:
    return engine.score_pool(pool, features)


# ----------------------------------------------------------------------
# latency benchmark
# ----------------------------------------------------------------------

def nearest_rank_percentile(values: Sequence[float], p: float) -> float:
    """Smallest value with at least p percent of the sample at or below it."""
    if not values:
        raise DataError("percentile of an empty sample")
    if not 0 < p <= 100:
        raise ConfigError(f"percentile must be in (0, 100], got {p}")
    ordered = sorted(values)
    rank = max(1, math.ceil(p / 100.0 * len(ordered)))
    return float(ordered[rank - 1])


@dataclass(frozen=True)
class LatencyRow:
    mode: str
    pool_size: int
    p50_us: float
    p90_us: float
    p99_us: float


@dataclass
class LatencyReport:
    rows: List[LatencyRow]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(r) for r in self.rows], columns=LATENCY_COLUMNS)

    def row(self, mode: str, pool_size: int) -> LatencyRow:
        for r in self.rows:
            if r.mode == mode and r.pool_size == pool_size:
                return r
        raise KeyError((mode, pool_size))

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.1f", lineterminator="\n")
        logger.info(f"Latency report written to {path}")
        return path


def _bench_population(model: CupidModel, size: int, session_len: int,
                      rng: np.random.Generator) -> Tuple[Dict[int, FeatureVector], List[Session]]:
    schema = model.schema
    demographics = {u: Demographics(int(rng.integers(schema.num_genders)), int(rng.integers(schema.num_countries)))
                    for u in range(size)}
    sessions: List[Session] = []
    features: Dict[int, FeatureVector] = {}
    for user in range(size):
        records: List[MatchRecord] = []
        clock = 0
        for _ in range(session_len):
            other = int((user + 1 + rng.integers(size - 1)) % size)
            duration = int(rng.lognormal(10.0, 1.0))
            clock += duration + 1000
            own = rolling_features(Session(user, tuple(records)), len(records), demographics[user])
            records.append(MatchRecord(user, other, duration, clock, own,
                                       FeatureVector.from_demographics(demographics[other])))
        session = Session(user, tuple(records))
        sessions.append(session)
        features[user] = rolling_features(session, len(records), demographics[user])
    return features, sessions


def bench_latency(model: CupidModel, pool_sizes: Sequence[int], reps: int = 50,
                  modes: Sequence[str] = ("sync", "async"), seed: int = 0,
                  session_len: Optional[int] = None) -> LatencyReport:
    """
    Time one pool-scoring call per repetition.

    sync re-encodes every member's session inline before scoring; async
    reads precommitted states from the embedding memory.
    """
    for mode in modes:
        if mode not in ("sync", "async"):
            raise ConfigError(f"Unknown benchmark mode: {mode}")
    rng = np.random.default_rng(seed)
    session_len = session_len or max(1, model.config.max_session_len // 2)
    rows: List[LatencyRow] = []
    for size in pool_sizes:
        if size < 2:
            raise ConfigError(f"pool size must be at least 2, got {size}")
        features, sessions = _bench_population(model, size, session_len, rng)
        pool = MatchingPool(time_ms=sessions[0].last_end_time_ms, members=tuple(range(size)))
        memory = EmbeddingMemory(MatchingEngine.empty_state(model))
        for session, states in zip(sessions, model.encode(sessions, count=False)):
            memory.commit(session.owner, states.final, session.last_end_time_ms, 0)
        engine = MatchingEngine(model, memory, DeferredUpdateScheduler(final_states(model), memory))

        def sync_once() -> None:
            e_s = np.stack([s.final for s in model.encode(sessions, count=False)])
            e_u = model.feature_embeddings(features[u] for u in pool.members)
            score_matrix(model.f_o, e_u + e_s)

        def async_once() -> None:
            engine.score_pool(pool, features)

        for mode in modes:
            run = sync_once if mode == "sync" else async_once
            run()
            samples = []
            for _ in range(reps):
                watch = Stopwatch()
                run()
                samples.append(watch.elapsed_us())
            row = LatencyRow(mode, size, nearest_rank_percentile(samples, 50),
                             nearest_rank_percentile(samples, 90), nearest_rank_percentile(samples, 99))
            logger.info(f"Latency {mode} n={size}: p50={row.p50_us:.0f}us p90={row.p90_us:.0f}us p99={row.p99_us:.0f}us")
            rows.append(row)
    return LatencyReport(rows)
