"""
Synthetic social-discovery world.

Users carry a unit-norm latent vector drawn around their country's
centroid, a persistent sociability offset and a per-session intent that
drifts after every match. Chat durations follow a log-normal law:

    c = v_i . v_j + affinity * [same country],  v = normalize(z + intent)
    y_ms = round(1000 * exp(mu0 + alpha * c + s_i + s_j + sigma * eps))

A single-threaded event loop (join, request, match tick, match end) drives
the matching pool. The same loop generates training datasets under a
random policy and runs online policy comparisons on a switchback schedule.
"""
from __future__ import annotations

import heapq
import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import EngineConfig, RunConfig, WorldConfig, derive_seed
from .domain import Dataset, Demographics, FeatureVector, MatchingPool, MatchRecord, Session, rolling_features
from .engine import DelayConfig, MatchingEngine, UpdateJob
from .errors import ConfigError, DataError
from .training import CupidModel

logger = logging.getLogger(__name__)

HOUR_MS = 3600 * 1000
SEGMENTS = ("all", "warm", "cold")
WINDOW_COLUMNS = ["window", "start_ms", "end_ms", "arm", "segment", "matches",
                  "mean_duration_ms", "long_ratio", "short_ratio"]


class EventKind(IntEnum):
    JOIN = 0
    REQUEST = 1
    MATCH_TICK = 2
    MATCH_END = 3


@dataclass(order=True)
class Event:
    time_ms: int
    seq: int
    kind: EventKind = field(compare=False)
    user: int = field(default=-1, compare=False)
    payload: Any = field(default=None, compare=False)


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(norm > 0, norm, 1.0)


def duration_law(config: WorldConfig, compatibility, sociability_sum, eps) -> np.ndarray:
    """Vectorised y_ms for given compatibility, s_i + s_j and standard-normal noise."""
    log_seconds = (config.mu0 + config.alpha * np.asarray(compatibility, dtype=np.float64)
                   + np.asarray(sociability_sum, dtype=np.float64) + config.sigma * np.asarray(eps, dtype=np.float64))
    return np.round(1000.0 * np.exp(log_seconds)).astype(np.int64)


class WorldState:
    """Users, the event queue and the single RNG every draw comes from."""

    def __init__(self, config: WorldConfig, seed: int, cold_start_ms: int = 0):
        self.config = config
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.clock_ms = 0
        self.cold_start_ms = cold_start_ms
        n, k = config.num_users, config.latent_dim

        gender_p = np.asarray(config.gender_probs, dtype=np.float64)
        country_p = 1.0 / np.arange(1, config.num_countries + 1) ** config.country_zipf
        genders = self.rng.choice(config.num_genders, size=n, p=gender_p / gender_p.sum())
        countries = self.rng.choice(config.num_countries, size=n, p=country_p / country_p.sum())
        self.demographics = {u: Demographics(int(genders[u]), int(countries[u])) for u in range(n)}
        self.countries = countries.astype(np.int64)

        centroids = _unit(self.rng.standard_normal((config.num_countries, k)))
        noise = self.rng.standard_normal((n, k)) * config.latent_noise / math.sqrt(k)
        self.latents = _unit(centroids[countries] + noise)
        self.sociability = self.rng.standard_normal(n) * config.sociability_scale
        self.intents = np.zeros((n, k))

        cold_count = int(round(config.cold_fraction * n))
        self.cold = np.zeros(n, dtype=bool)
        self.cold[self.rng.permutation(n)[:cold_count]] = True

        self.online = np.zeros(n, dtype=bool)
        self.session_target = np.zeros(n, dtype=np.int64)
        self.sessions: Dict[int, List[MatchRecord]] = {u: [] for u in range(n)}
        self.pool: Dict[int, int] = {}
        self._queue: List[Event] = []
        self._seq = itertools.count()

    @property
    def num_users(self) -> int:
        return self.config.num_users

    @property
    def median_duration_ms(self) -> float:
        """Median of the law at zero compatibility and sociability."""
        return 1000.0 * math.exp(self.config.mu0)

    # -- event queue ---------------------------------------------------

    def push(self, time_ms: int, kind: EventKind, user: int = -1, payload: Any = None) -> None:
        if time_ms < self.clock_ms:
            raise DataError(f"event scheduled in the past: {time_ms} < {self.clock_ms}")
        heapq.heappush(self._queue, Event(int(time_ms), next(self._seq), kind, user, payload))

    def pop(self) -> Event:
        event = heapq.heappop(self._queue)
        self.clock_ms = event.time_ms
        return event

    def peek_time(self) -> Optional[int]:
        return self._queue[0].time_ms if self._queue else None

    # -- users ---------------------------------------------------------

    def effective(self, user: int) -> np.ndarray:
        return _unit(self.latents[user] + self.intents[user])

    def compatibility(self, i: int, j: int) -> float:
        same_country = float(self.countries[i] == self.countries[j])
        return float(self.effective(i) @ self.effective(j)) + self.config.affinity * same_country

    def session_of(self, user: int) -> Session:
        return Session(user, tuple(self.sessions[user]))

    def current_features(self, user: int) -> FeatureVector:
        session = self.session_of(user)
        return rolling_features(session, len(session), self.demographics[user])

    def draw_intent(self) -> np.ndarray:
        return _unit(self.rng.standard_normal(self.config.latent_dim)) * self.config.intent_scale

    def start_session(self, user: int) -> None:
        self.online[user] = True
        self.sessions[user] = []
        self.intents[user] = self.draw_intent()
        draw = int(self.rng.geometric(1.0 / self.config.session_matches_mean))
        self.session_target[user] = min(draw, self.config.max_session_matches)

    def end_session(self, user: int) -> None:
        self.online[user] = False
        self.intents[user] = 0.0

    def exponential_ms(self, mean_ms: float) -> int:
        return int(round(self.rng.exponential(mean_ms))) if mean_ms > 0 else 0


def true_duration(state: WorldState, i: int, j: int) -> int:
    """Sample the chat duration of users i and j from the world's law."""
    if i == j:
        raise DataError(f"user {i} cannot be matched with themselves")
    eps = state.rng.standard_normal()
    social = state.sociability[i] + state.sociability[j]
    return int(duration_law(state.config, state.compatibility(i, j), social, eps))


def drift(state: WorldState, i: int, j: int, duration_ms: float) -> None:
    """
    Move both intents by at most drift_rate: toward each other after a
    longer-than-median match, away after a shorter one.
    """
    eta = state.config.drift_rate
    sign = np.sign(duration_ms - state.median_duration_ms)
    direction = state.latents[j] - state.latents[i]
    norm = float(np.linalg.norm(direction))
    if eta == 0 or sign == 0 or norm < 1e-12:
        return
    step = eta * sign * direction / norm
    state.intents[i] += step
    state.intents[j] -= step


# ----------------------------------------------------------------------
# policies
# ----------------------------------------------------------------------

class Policy:
    """Pairs a pool snapshot; sees every session start and match end."""
    name = "policy"

    def pair(self, pool: MatchingPool, world: WorldState) -> List[Tuple[int, int]]:
        raise NotImplementedError

    def on_session_start(self, user: int, now_ms: int) -> None:
        pass

    def on_match_end(self, record: MatchRecord, world: WorldState, now_ms: int) -> None:
        pass


class RandomPolicy(Policy):
    name = "random"

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def pair(self, pool: MatchingPool, world: WorldState) -> List[Tuple[int, int]]:
        order = self.rng.permutation(len(pool))
        members = [pool.members[k] for k in order]
        return [(members[k], members[k + 1]) for k in range(0, len(members) - 1, 2)]


class ModelPolicy(Policy):
    """
    Greedy pairing by predicted duration. A session model keeps its
    embedding memory current through the deterministic update scheduler;
    a feature-only model scores from rolling features alone.
    """

    def __init__(self, model: CupidModel, engine_config: EngineConfig = EngineConfig(),
                 delay: DelayConfig = DelayConfig(), name: Optional[str] = None):
        self.model = model
        self.engine = MatchingEngine.deterministic(model, engine_config, delay)
        self.name = name or ("cupid" if model.use_session else "feature-only")

    def pair(self, pool: MatchingPool, world: WorldState) -> List[Tuple[int, int]]:
        self.engine.advance(pool.time_ms)
        features = {u: world.current_features(u) for u in pool.members}
        return self.engine.pair(pool, features).pairs

    def on_session_start(self, user: int, now_ms: int) -> None:
        if self.model.use_session:
            self.engine.advance(now_ms)
            self.engine.memory.reset(user, now_ms)

    def on_match_end(self, record: MatchRecord, world: WorldState, now_ms: int) -> None:
        for user in (record.self_id, record.counterpart):
            self.engine.submit_update(UpdateJob(user, world.session_of(user), now_ms))


# ----------------------------------------------------------------------
# event loop
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Window:
    index: int
    start_ms: int
    end_ms: int
    arm: str


def switchback_windows(horizon_ms: int, window_ms: int, arms: Sequence[str]) -> List[Window]:
    """Consecutive windows covering [0, horizon) exactly; arms alternate in order."""
    if horizon_ms <= 0 or window_ms <= 0:
        raise ConfigError("horizon and window length must be positive")
    if not arms:
        raise ConfigError("switchback needs at least one arm")
    starts = range(0, horizon_ms, window_ms)
    return [Window(k, s, min(s + window_ms, horizon_ms), arms[k % len(arms)]) for k, s in enumerate(starts)]


@dataclass(frozen=True)
class OnlineMatch:
    window: int
    arm: str
    start_ms: int
    duration_ms: int
    user_a: int
    user_b: int
    cold_a: bool
    cold_b: bool


class WorldSimulator:
    """Runs the event loop until the horizon; the arm of the current window pairs the pool."""

    def __init__(self, state: WorldState, arms: Dict[str, Policy], horizon_ms: int,
                 window_ms: Optional[int] = None):
        if horizon_ms <= 0:
            raise ConfigError(f"horizon must be positive, got {horizon_ms}")
        self.state = state
        self.arms = arms
        self.horizon_ms = int(horizon_ms)
        self.windows = switchback_windows(self.horizon_ms, int(window_ms or self.horizon_ms), list(arms))
        self.window_ms = self.windows[0].end_ms - self.windows[0].start_ms
        self.records: List[MatchRecord] = []
        self.matches: List[OnlineMatch] = []

    def _window_at(self, time_ms: int) -> Window:
        return self.windows[min(time_ms // self.window_ms, len(self.windows) - 1)]

    def _schedule_initial(self) -> None:
        config = self.state.config
        for user in range(self.state.num_users):
            offset = self.state.cold_start_ms if self.state.cold[user] else 0
            start = offset + int(self.state.rng.integers(config.offline_mean_ms))
            if start < self.horizon_ms:
                self.state.push(start, EventKind.JOIN, user)
        self.state.push(0, EventKind.MATCH_TICK)

    def run(self) -> List[MatchRecord]:
        state = self.state
        self._schedule_initial()
        while state.peek_time() is not None and state.peek_time() < self.horizon_ms:
            event = state.pop()
            if event.kind is EventKind.JOIN:
                self._on_join(event)
            elif event.kind is EventKind.REQUEST:
                state.pool[event.user] = event.time_ms
            elif event.kind is EventKind.MATCH_TICK:
                self._on_tick(event)
            else:
                self._on_match_end(event)
        logger.info(f"World simulation finished: {len(self.records)} matches over {self.horizon_ms} ms")
        return self.records

    def _on_join(self, event: Event) -> None:
        self.state.start_session(event.user)
        for policy in self.arms.values():
            policy.on_session_start(event.user, event.time_ms)
        self.state.push(event.time_ms, EventKind.REQUEST, event.user)

    def _on_tick(self, event: Event) -> None:
        state = self.state
        now = event.time_ms
        if len(state.pool) >= 2:
            window = self._window_at(now)
            pool = MatchingPool(now, tuple(state.pool))
            for a, b in self.arms[window.arm].pair(pool, state):
                del state.pool[a]
                del state.pool[b]
                duration = true_duration(state, a, b)
                snapshot = (a, b, duration, state.current_features(a), state.current_features(b), window)
                state.push(now + duration, EventKind.MATCH_END, payload=snapshot)
        state.push(now + state.config.match_interval_ms, EventKind.MATCH_TICK)

    def _on_match_end(self, event: Event) -> None:
        state = self.state
        now = event.time_ms
        a, b, duration, features_a, features_b, window = event.payload
        record = MatchRecord(a, b, duration, now, features_a, features_b)
        self.records.append(record)
        self.matches.append(OnlineMatch(window.index, window.arm, now - duration, duration, a, b,
                                        bool(state.cold[a]), bool(state.cold[b])))
        state.sessions[a].append(record)
        state.sessions[b].append(record.mirrored())
        drift(state, a, b, duration)
        for policy in self.arms.values():
            policy.on_match_end(record, state, now)

        for user in (a, b):
            if len(state.sessions[user]) >= state.session_target[user]:
                state.end_session(user)
                rest = state.config.session_gap_ms + 1 + state.exponential_ms(state.config.offline_mean_ms)
                state.push(now + rest, EventKind.JOIN, user)
            else:
                state.push(now + state.exponential_ms(state.config.think_time_mean_ms), EventKind.REQUEST, user)


# ----------------------------------------------------------------------
# dataset generation
# ----------------------------------------------------------------------

def split_markers(config: WorldConfig, horizon_ms: int) -> Tuple[int, int]:
    train_end = int(horizon_ms * (1.0 - config.validation_fraction - config.test_fraction))
    val_end = int(horizon_ms * (1.0 - config.test_fraction))
    return train_end, val_end


def generate_dataset(config: WorldConfig, seed: int, horizon_ms: Optional[int] = None) -> Dataset:
    """
    Simulate the world under a uniform-random policy and log mirrored match
    records with feature snapshots. Cold users first join after the
    training window ends.
    """
    horizon = int(horizon_ms if horizon_ms is not None else config.horizon_hours * HOUR_MS)
    if horizon <= 0:
        raise ConfigError(f"horizon must be positive, got {horizon}")
    train_end, val_end = split_markers(config, horizon)

    logger.info(f"=== Generating dataset: {config.num_users} users, {horizon / HOUR_MS:.1f} h ===")
    state = WorldState(config, seed, cold_start_ms=train_end)
    policy = RandomPolicy(derive_seed(seed, "random-policy"))
    matches = WorldSimulator(state, {policy.name: policy}, horizon).run()

    train_durations = [m.duration_ms for m in matches if m.end_time_ms < train_end]
    threshold = int(np.percentile(train_durations, 75)) if train_durations else None
    dataset = Dataset.from_matches(dict(state.demographics), matches, train_end, val_end,
                                   session_gap_ms=config.session_gap_ms, quality_threshold_ms=threshold)
    logger.info(f"Generated {len(matches)} matches ({len(dataset)} records), quality threshold {threshold} ms")
    return dataset


def long_threshold(config: WorldConfig, seed: int, samples: int = 20000) -> float:
    """Quantile of durations over random pairs (fresh intents), estimated by Monte Carlo."""
    state = WorldState(config, seed)
    rng = state.rng
    n = state.num_users
    state.intents = np.stack([state.draw_intent() for _ in range(n)])
    i = rng.integers(n, size=samples)
    j = (i + 1 + rng.integers(n - 1, size=samples)) % n
    effective = _unit(state.latents + state.intents)
    compatibility = np.einsum("ij,ij->i", effective[i], effective[j]) + config.affinity * (state.countries[i] == state.countries[j])
    durations = duration_law(config, compatibility, state.sociability[i] + state.sociability[j],
                             rng.standard_normal(samples))
    return float(np.quantile(durations, config.long_quantile))


# ----------------------------------------------------------------------
# online comparison
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ArmStats:
    arm: str
    segment: str
    windows: int
    matches: int
    mean_duration_ms: float
    se_ms: float
    long_ratio: float
    short_ratio: float


@dataclass
class OnlineReport:
    """Matches of an online run, attributed to the arm active when they started."""
    matches: List[OnlineMatch]
    windows: List[Window]
    long_threshold_ms: float
    short_threshold_ms: float
    config: Dict = field(default_factory=dict)

    @property
    def arms(self) -> List[str]:
        return list(dict.fromkeys(w.arm for w in self.windows))

    def observations(self, segment: str = "all") -> pd.DataFrame:
        """
        One row per physical match for "all"; one row per participant of the
        segment for "warm" and "cold".
        """
        if segment not in SEGMENTS:
            raise ConfigError(f"Unknown segment: {segment}")
        rows = []
        for m in self.matches:
            if segment == "all":
                rows.append((m.window, m.arm, m.duration_ms))
                continue
            for cold in (m.cold_a, m.cold_b):
                if cold == (segment == "cold"):
                    rows.append((m.window, m.arm, m.duration_ms))
        return pd.DataFrame(rows, columns=["window", "arm", "duration_ms"])

    def window_frame(self) -> pd.DataFrame:
        rows = []
        for segment in SEGMENTS:
            obs = self.observations(segment)
            grouped = {w: g["duration_ms"].to_numpy() for w, g in obs.groupby("window")} if len(obs) else {}
            for window in self.windows:
                durations = grouped.get(window.index, np.array([]))
                count = len(durations)
                rows.append({
                    "window": window.index, "start_ms": window.start_ms, "end_ms": window.end_ms,
                    "arm": window.arm, "segment": segment, "matches": count,
                    "mean_duration_ms": float(durations.mean()) if count else math.nan,
                    "long_ratio": float(np.mean(durations > self.long_threshold_ms)) if count else math.nan,
                    "short_ratio": float(np.mean(durations < self.short_threshold_ms)) if count else math.nan,
                })
        return pd.DataFrame(rows, columns=WINDOW_COLUMNS)

    def arm_stats(self, arm: str, segment: str = "all") -> ArmStats:
        """Mean of per-window means with its standard error; ratios pooled over matches."""
        obs = self.observations(segment)
        obs = obs[obs["arm"] == arm]
        means = obs.groupby("window")["duration_ms"].mean().to_numpy() if len(obs) else np.array([])
        durations = obs["duration_ms"].to_numpy()
        se = float(np.std(means, ddof=1) / math.sqrt(len(means))) if len(means) > 1 else math.nan
        return ArmStats(
            arm=arm, segment=segment, windows=len(means), matches=len(durations),
            mean_duration_ms=float(means.mean()) if len(means) else math.nan,
            se_ms=se,
            long_ratio=float(np.mean(durations > self.long_threshold_ms)) if len(durations) else math.nan,
            short_ratio=float(np.mean(durations < self.short_threshold_ms)) if len(durations) else math.nan,
        )

    def significant_difference(self, arm_a: str, arm_b: str, segment: str = "all", z: float = 2.0) -> bool:
        """True when the arm means differ by more than z combined standard errors."""
        a, b = self.arm_stats(arm_a, segment), self.arm_stats(arm_b, segment)
        se = math.hypot(a.se_ms, b.se_ms)
        if math.isnan(se):
            return False
        return abs(a.mean_duration_ms - b.mean_duration_ms) > z * se

    def summary(self) -> str:
        lines = [f"long_threshold_ms={self.long_threshold_ms:.0f} short_threshold_ms={self.short_threshold_ms:.0f}"]
        for arm in self.arms:
            for segment in SEGMENTS:
                s = self.arm_stats(arm, segment)
                lines.append(f"  {arm:<12} {segment:<5} windows={s.windows:<4} matches={s.matches:<7} "
                             f"mean={s.mean_duration_ms:.0f}ms se={s.se_ms:.0f} "
                             f"long={s.long_ratio:.3f} short={s.short_ratio:.3f}")
        return "\n".join(lines)

    def write(self, csv_path: str | Path) -> Path:
        csv_path = Path(csv_path)
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        self.window_frame().to_csv(csv_path, index=False, float_format="%.4f", lineterminator="\n")
        csv_path.with_suffix(".txt").write_text(self.summary() + "\n", encoding="utf-8")
        logger.info(f"Online report written to {csv_path}")
        return csv_path


def run_switchback(config: RunConfig, arms: Dict[str, Policy], horizon_ms: Optional[int] = None,
                   window_ms: Optional[int] = None) -> OnlineReport:
    """Alternate the arms on a fixed window schedule over one simulated world."""
    world = config.world
    horizon = int(horizon_ms if horizon_ms is not None else config.eval.online_hours * HOUR_MS)
    window = int(window_ms if window_ms is not None else config.eval.switchback_window_ms)
    seed = derive_seed(config.seed, "online")
    train_end, _ = split_markers(world, horizon)

    logger.info(f"=== Online run: arms={list(arms)} horizon={horizon / HOUR_MS:.1f} h window={window} ms ===")
    state = WorldState(world, seed, cold_start_ms=train_end)
    simulator = WorldSimulator(state, arms, horizon, window)
    simulator.run()
    return OnlineReport(
        matches=simulator.matches,
        windows=simulator.windows,
        long_threshold_ms=long_threshold(world, derive_seed(config.seed, "long-threshold")),
        short_threshold_ms=float(world.short_threshold_ms),
        config=config.model_dump(),
    )


def run_online(config: RunConfig, policy: Policy, horizon_ms: Optional[int] = None) -> OnlineReport:
    """One policy over the whole horizon, still reported per window for standard errors."""
    return run_switchback(config, {policy.name: policy}, horizon_ms)
