"""
Domain Module for the CUPID matchmaking engine

Core identifiers, feature schema, match records, sessions, datasets and the
matching pool snapshot shared by every other module. All types are
immutable value objects once constructed.
"""
from __future__ import annotations

import bisect
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, Iterator, List, NewType, Optional, Sequence, Tuple

import numpy as np

from .errors import DataError

UserId = NewType("UserId", int)

NUMERIC_FIELDS = ("match_count", "mean_log_duration", "last_log_duration")


def log_scale(duration_ms: float) -> float:
    """ln(1 + y) of a duration in milliseconds; the +1 handles zero-length chats."""
    if duration_ms < 0:
        raise DataError(f"duration must be non-negative, got {duration_ms}")
    return math.log1p(duration_ms)


def unlog(value: float) -> int:
    """Inverse of log_scale, rounded back to integer milliseconds."""
    if value < 0:
        raise DataError(f"log-scaled duration must be non-negative, got {value}")
    return int(round(math.expm1(value)))


@dataclass(frozen=True)
class FeatureSchema:
    """Declared cardinalities of the categorical fields and numeric scaling."""
    num_genders: int = 3
    num_countries: int = 32
    max_session_len: int = 32
    log_duration_scale: float = 12.0

    def numeric_scale(self) -> Tuple[float, float, float]:
        return (1.0 / self.max_session_len, 1.0 / self.log_duration_scale, 1.0 / self.log_duration_scale)


@dataclass(frozen=True)
class Demographics:
    """Static per-user features."""
    gender: int
    country: int


@dataclass(frozen=True)
class FeatureVector:
    """User features X_i: categorical demographics plus rolling match statistics."""
    gender: int
    country: int
    match_count: int = 0
    mean_log_duration: float = 0.0
    last_log_duration: float = 0.0

    def __post_init__(self):
        if self.match_count < 0:
            raise DataError(f"match_count must be non-negative, got {self.match_count}")
        for name in NUMERIC_FIELDS[1:]:
            if not math.isfinite(getattr(self, name)):
                raise DataError(f"{name} must be finite")
        if self.match_count == 0 and self.mean_log_duration != 0.0:
            raise DataError("mean_log_duration must be 0 when match_count is 0")

    @property
    def demographics(self) -> Demographics:
        return Demographics(self.gender, self.country)

    def numeric(self) -> Tuple[float, float, float]:
        return (float(self.match_count), self.mean_log_duration, self.last_log_duration)

    def validate(self, schema: FeatureSchema) -> None:
        """Raise DataError on a category index outside the declared cardinality."""
        if not 0 <= self.gender < schema.num_genders:
            raise DataError(f"gender index {self.gender} out of range [0, {schema.num_genders})")
        if not 0 <= self.country < schema.num_countries:
            raise DataError(f"country index {self.country} out of range [0, {schema.num_countries})")

    @classmethod
    def from_demographics(cls, demographics: Demographics) -> "FeatureVector":
        return cls(gender=demographics.gender, country=demographics.country)


@dataclass(frozen=True)
class MatchRecord:
    """One matching history m = (u_i, u_j, y_ij) seen from self_id's side."""
    self_id: int
    counterpart: int
    duration_ms: int
    end_time_ms: int
    self_features: FeatureVector
    counterpart_features: FeatureVector

    def __post_init__(self):
        if self.self_id == self.counterpart:
            raise DataError(f"self-match for user {self.self_id}")
        if self.duration_ms < 0:
            raise DataError(f"negative duration {self.duration_ms}")

    @property
    def start_time_ms(self) -> int:
        return self.end_time_ms - self.duration_ms

    @property
    def log_duration(self) -> float:
        return log_scale(self.duration_ms)

    def mirrored(self) -> "MatchRecord":
        """The same physical match seen from the counterpart's side."""
        return MatchRecord(
            self_id=self.counterpart,
            counterpart=self.self_id,
            duration_ms=self.duration_ms,
            end_time_ms=self.end_time_ms,
            self_features=self.counterpart_features,
            counterpart_features=self.self_features,
        )


@dataclass(frozen=True)
class Session:
    """One platform visit: the owner's matching histories ordered by end time."""
    owner: int
    records: Tuple[MatchRecord, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        previous = None
        for record in self.records:
            if record.self_id != self.owner:
                raise DataError(f"record of user {record.self_id} in session of {self.owner}")
            if previous is not None and record.end_time_ms <= previous:
                raise DataError(f"session of user {self.owner} is not strictly time-ordered")
            previous = record.end_time_ms

    def __len__(self) -> int:
        return len(self.records)

    def prefix(self, upto: int) -> "Session":
        return Session(self.owner, self.records[:upto])

    def truncated(self, max_len: int) -> "Session":
        """Keep the most recent max_len records."""
        if len(self.records) <= max_len:
            return self
        return Session(self.owner, self.records[-max_len:])

    def end_times(self) -> List[int]:
        return [r.end_time_ms for r in self.records]

    def count_ended_by(self, cutoff_ms: int) -> int:
        """Number of records whose end time is at or before cutoff_ms."""
        return bisect.bisect_right(self.end_times(), cutoff_ms)

    @property
    def last_end_time_ms(self) -> int:
        return self.records[-1].end_time_ms if self.records else 0


@dataclass(frozen=True)
class MatchingPool:
    """Users available for immediate pairing at time_ms."""
    time_ms: int
    members: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if len(set(self.members)) != len(self.members):
            raise DataError("matching pool contains duplicate members")

    def __len__(self) -> int:
        return len(self.members)


class UserKind(str, Enum):
    WARM = "warm"
    COLD = "cold"


class MatchType(str, Enum):
    ENTIRE = "Entire"
    WARM_WARM = "Warm-Warm"
    WARM_COLD = "Warm-Cold"
    COLD_COLD = "Cold-Cold"


def rolling_features(session: Session, upto: int, demographics: Demographics) -> FeatureVector:
    """Features over session records [0, upto) only; demographics copied through."""
    if not 0 <= upto <= len(session):
        raise DataError(f"upto={upto} out of range for session of length {len(session)}")
    if upto == 0:
        return FeatureVector.from_demographics(demographics)
    logs = [r.log_duration for r in session.records[:upto]]
    return FeatureVector(
        gender=demographics.gender,
        country=demographics.country,
        match_count=upto,
        mean_log_duration=math.fsum(logs) / upto,
        last_log_duration=logs[-1],
    )


def sessionize(records: Sequence[MatchRecord], session_gap_ms: int, max_session_len: Optional[int] = None) -> List[Session]:
    """
    Split one user's time-ordered records into sessions.

    A new session starts when the next match starts more than
    session_gap_ms after the previous match ended. Sessions are not
    truncated here; max_session_len is applied by the encoder.
    """
    if not records:
        return []
    owner = records[0].self_id
    sessions: List[Session] = []
    current: List[MatchRecord] = [records[0]]
    for record in records[1:]:
        if record.start_time_ms - current[-1].end_time_ms > session_gap_ms:
            sessions.append(Session(owner, tuple(current)))
            current = []
        current.append(record)
    sessions.append(Session(owner, tuple(current)))
    if max_session_len is not None:
        sessions = [s.truncated(max_session_len) for s in sessions]
    return sessions


@dataclass(frozen=True)
class RecordLocation:
    """Where a record lives: session index in Dataset.sessions() and position in it."""
    session_index: int
    position: int


@dataclass
class Dataset:
    """
    Globally time-ordered mirrored match records with time split markers.

    Each physical match contributes two MatchRecords (one per direction) with
    equal duration and end time.
    """
    static_features: Dict[int, Demographics]
    events: List[MatchRecord]
    train_end_ms: int
    val_end_ms: int
    session_gap_ms: int = 30 * 60 * 1000
    quality_threshold_ms: Optional[int] = None
    _sessions: Dict[Optional[int], List[Session]] = field(default_factory=dict, init=False, repr=False, compare=False)
    _locations: Dict[Optional[int], Dict[Tuple[int, int], RecordLocation]] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.val_end_ms < self.train_end_ms:
            raise DataError("validation window must end after the training window")

    @classmethod
    def from_matches(cls, static_features: Dict[int, Demographics], matches: Iterable[MatchRecord],
                     train_end_ms: int, val_end_ms: int, **kwargs) -> "Dataset":
        """Build a dataset from one record per physical match, adding the mirrors."""
        events: List[MatchRecord] = []
        for record in matches:
            events.append(record)
            events.append(record.mirrored())
        events.sort(key=lambda r: (r.end_time_ms, r.self_id, r.counterpart))
        return cls(static_features, events, train_end_ms, val_end_ms, **kwargs)

    def __len__(self) -> int:
        return len(self.events)

    def users(self) -> List[int]:
        return sorted(self.static_features)

    def split_of(self, record: MatchRecord) -> str:
        if record.end_time_ms < self.train_end_ms:
            return "train"
        if record.end_time_ms < self.val_end_ms:
            return "validation"
        return "test"

    def split(self, name: str) -> List[MatchRecord]:
        """Records of one time window: train, validation or test."""
        if name not in ("train", "validation", "test"):
            raise DataError(f"unknown split: {name}")
        return [r for r in self.events if self.split_of(r) == name]

    def physical_matches(self) -> Iterator[MatchRecord]:
        """One record per physical match (the side with the lower user id)."""
        for record in self.events:
            if record.self_id < record.counterpart:
                yield record

    def records_by_user(self) -> Dict[int, List[MatchRecord]]:
        by_user: Dict[int, List[MatchRecord]] = defaultdict(list)
        for record in self.events:
            by_user[record.self_id].append(record)
        return by_user

    def sessions(self, max_session_len: Optional[int] = None) -> List[Session]:
        """
        All sessions, ordered by (owner, start time); cached per length cap.

        With max_session_len, longer sessions are cut into consecutive chunks
        of at most that many records, each encoded from the start token.
        """
        if max_session_len not in self._sessions:
            sessions: List[Session] = []
            by_user = self.records_by_user()
            for user in sorted(by_user):
                for session in sessionize(by_user[user], self.session_gap_ms):
                    sessions.extend(_chunk(session, max_session_len))
            self._sessions[max_session_len] = sessions
        return self._sessions[max_session_len]

    def locations(self, max_session_len: Optional[int] = None) -> Dict[Tuple[int, int], RecordLocation]:
        """(user, end_time_ms) -> location of that user's record in sessions(max_session_len)."""
        if max_session_len not in self._locations:
            locations = {}
            for s_idx, session in enumerate(self.sessions(max_session_len)):
                for pos, record in enumerate(session.records):
                    locations[(record.self_id, record.end_time_ms)] = RecordLocation(s_idx, pos)
            self._locations[max_session_len] = locations
        return self._locations[max_session_len]

    def training_users(self) -> set:
        return {r.self_id for r in self.events if r.end_time_ms < self.train_end_ms}

    def restricted_to(self, end_ms: int) -> "Dataset":
        """Copy keeping only records that end before end_ms."""
        return Dataset(
            static_features=dict(self.static_features),
            events=[r for r in self.events if r.end_time_ms < end_ms],
            train_end_ms=min(self.train_end_ms, end_ms),
            val_end_ms=min(self.val_end_ms, end_ms),
            session_gap_ms=self.session_gap_ms,
            quality_threshold_ms=self.quality_threshold_ms,
        )

    def check_mirrors(self) -> None:
        """Raise DataError unless every record has a mirror with equal duration."""
        index = {(r.self_id, r.counterpart, r.end_time_ms): r for r in self.events}
        for record in self.events:
            mirror = index.get((record.counterpart, record.self_id, record.end_time_ms))
            if mirror is None or mirror.duration_ms != record.duration_ms:
                raise DataError(f"record {record.self_id}->{record.counterpart} at {record.end_time_ms} has no mirror")


def classify_user(user: int, train_set: Dataset | Iterable[int]) -> UserKind:
    """Cold iff the user appears in zero training records."""
    warm = train_set.training_users() if isinstance(train_set, Dataset) else set(train_set)
    return UserKind.WARM if user in warm else UserKind.COLD


def match_type(kind_a: UserKind, kind_b: UserKind) -> MatchType:
    kinds = {kind_a, kind_b}
    if kinds == {UserKind.WARM}:
        return MatchType.WARM_WARM
    if kinds == {UserKind.COLD}:
        return MatchType.COLD_COLD
    return MatchType.WARM_COLD


def uniform_session_dataset(num_users: int, session_len: int, seed: int = 0,
                            num_genders: int = 3, num_countries: int = 32,
                            duration_mean_log: float = 10.0) -> Dataset:
    """
    Synthetic dataset where every user has exactly session_len records in one
    session: session_len rounds, each a random perfect matching of all users.
    All records fall in the training window.
    """
    if num_users < 2 or num_users % 2:
        raise DataError("uniform_session_dataset needs an even number of users >= 2")
    rng = np.random.default_rng(seed)
    static = {
        u: Demographics(int(rng.integers(num_genders)), int(rng.integers(num_countries)))
        for u in range(num_users)
    }
    history: Dict[int, List[MatchRecord]] = {u: [] for u in range(num_users)}
    clock = 0
    matches: List[MatchRecord] = []
    for _ in range(session_len):
        order = rng.permutation(num_users)
        durations = np.round(np.exp(duration_mean_log + 0.5 * rng.standard_normal(num_users // 2))).astype(int)
        round_end = clock + int(durations.max()) + 1
        for k in range(num_users // 2):
            a, b = int(order[2 * k]), int(order[2 * k + 1])
            start = clock
            end = start + int(durations[k])
            fa = rolling_features(Session(a, tuple(history[a])), len(history[a]), static[a])
            fb = rolling_features(Session(b, tuple(history[b])), len(history[b]), static[b])
            record = MatchRecord(a, b, int(durations[k]), end, fa, fb)
            matches.append(record)
            history[a].append(record)
            history[b].append(record.mirrored())
        clock = round_end + 1000
    horizon = clock + 1
    return Dataset.from_matches(static, matches, train_end_ms=horizon, val_end_ms=horizon,
                                session_gap_ms=max(horizon, 1))


def _chunk(session: Session, max_len: Optional[int]) -> List[Session]:
    if max_len is None or len(session) <= max_len:
        return [session]
    return [Session(session.owner, session.records[i:i + max_len]) for i in range(0, len(session), max_len)]
