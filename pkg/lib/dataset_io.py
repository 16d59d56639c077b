"""
Dataset files for the CUPID matchmaking engine.

A dataset directory holds:
- events.jsonl   one physical match per line; field order
                 end_time_ms, user_a, user_b, duration_ms, features_a, features_b
- users.csv      user_id,gender,country
- manifest.json  format version, split markers, quality threshold, config echo

Field order and names are part of the format contract (docs/FORMATS.md).
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import pandas as pd

from .domain import Dataset, Demographics, FeatureVector, MatchRecord
from .errors import DataError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
EVENTS_FILE = "events.jsonl"
USERS_FILE = "users.csv"
MANIFEST_FILE = "manifest.json"

EVENT_FIELDS = ("end_time_ms", "user_a", "user_b", "duration_ms", "features_a", "features_b")
FEATURE_FIELDS = ("gender", "country", "match_count", "mean_log_duration", "last_log_duration")
USER_COLUMNS = ["user_id", "gender", "country"]


def _features_to_dict(features: FeatureVector) -> Dict[str, Any]:
    return {name: getattr(features, name) for name in FEATURE_FIELDS}


def _features_from_dict(data: Dict[str, Any]) -> FeatureVector:
    return FeatureVector(
        gender=int(data["gender"]),
        country=int(data["country"]),
        match_count=int(data["match_count"]),
        mean_log_duration=float(data["mean_log_duration"]),
        last_log_duration=float(data["last_log_duration"]),
    )


def event_line(record: MatchRecord) -> str:
    """Serialize one physical match (user_a = record.self_id)."""
    event = {
        "end_time_ms": record.end_time_ms,
        "user_a": record.self_id,
        "user_b": record.counterpart,
        "duration_ms": record.duration_ms,
        "features_a": _features_to_dict(record.self_features),
        "features_b": _features_to_dict(record.counterpart_features),
    }
    return json.dumps(event, separators=(",", ":"))


def parse_event_line(line: str, line_no: int = 0) -> MatchRecord:
    """Parse one events.jsonl line into the user_a-side record."""
    try:
        data = json.loads(line)
        if tuple(data.keys()) != EVENT_FIELDS:
            raise DataError(f"line {line_no}: expected fields {EVENT_FIELDS}, got {tuple(data.keys())}")
        return MatchRecord(
            self_id=int(data["user_a"]),
            counterpart=int(data["user_b"]),
            duration_ms=int(data["duration_ms"]),
            end_time_ms=int(data["end_time_ms"]),
            self_features=_features_from_dict(data["features_a"]),
            counterpart_features=_features_from_dict(data["features_b"]),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise DataError(f"line {line_no}: corrupt event: {e}") from e


def save_dataset(dataset: Dataset, directory: str | Path, config_echo: Optional[Dict[str, Any]] = None) -> Path:
    """Write events, users and manifest files; byte-identical for identical datasets."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / EVENTS_FILE, "w", encoding="utf-8", newline="\n") as f:
        for record in dataset.physical_matches():
            f.write(event_line(record) + "\n")

    users = pd.DataFrame(
        [(u, d.gender, d.country) for u, d in sorted(dataset.static_features.items())],
        columns=USER_COLUMNS,
    )
    users.to_csv(out / USERS_FILE, index=False, lineterminator="\n")

    manifest = {
        "format_version": FORMAT_VERSION,
        "train_end_ms": dataset.train_end_ms,
        "val_end_ms": dataset.val_end_ms,
        "session_gap_ms": dataset.session_gap_ms,
        "quality_threshold_ms": dataset.quality_threshold_ms,
        "num_users": len(dataset.static_features),
        "num_matches": len(dataset.events) // 2,
        "config": config_echo or {},
    }
    with open(out / MANIFEST_FILE, "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, indent=2)

    logger.info(f"Dataset saved to {out} ({manifest['num_matches']} matches, {manifest['num_users']} users)")
    return out


def load_manifest(directory: str | Path) -> Dict[str, Any]:
    path = Path(directory) / MANIFEST_FILE
    if not path.exists():
        raise DataError(f"Dataset manifest not found: expected {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"Corrupt manifest {path}: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DataError(f"Unsupported dataset format version {manifest.get('format_version')} in {path}")
    return manifest


def load_dataset(directory: str | Path) -> Dataset:
    """Load a dataset directory written by save_dataset."""
    root = Path(directory)
    manifest = load_manifest(root)

    users_path = root / USERS_FILE
    if not users_path.exists():
        raise DataError(f"Static features not found: expected {users_path}")
    try:
        users = pd.read_csv(users_path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"Corrupt static features {users_path}: {e}") from e
    if list(users.columns) != USER_COLUMNS:
        raise DataError(f"{users_path}: expected columns {USER_COLUMNS}, got {list(users.columns)}")
    static = {
        int(row.user_id): Demographics(int(row.gender), int(row.country))
        for row in users.itertuples(index=False)
    }

    events_path = root / EVENTS_FILE
    if not events_path.exists():
        raise DataError(f"Match events not found: expected {events_path}")
    matches = []
    with open(events_path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            record = parse_event_line(line, line_no)
            for user in (record.self_id, record.counterpart):
                if user not in static:
                    raise DataError(f"line {line_no}: user {user} missing from {users_path}")
            matches.append(record)

    dataset = Dataset.from_matches(
        static,
        matches,
        train_end_ms=int(manifest["train_end_ms"]),
        val_end_ms=int(manifest["val_end_ms"]),
        session_gap_ms=int(manifest["session_gap_ms"]),
        quality_threshold_ms=manifest.get("quality_threshold_ms"),
    )
    logger.info(f"Dataset loaded from {root} ({len(matches)} matches, {len(static)} users)")
    return dataset
