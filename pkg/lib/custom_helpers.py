from __future__ import annotations

import json
import logging
import time
from pathlib import Path
from datetime import datetime, timezone
from typing import Any


def get_timestamp() -> str:
    """Get current UTC timestamp in simple format: YYYY-MM-DD HH:MM:SS"""
    return datetime.now(timezone.utc).strftime("%Y-%m-%d %H:%M:%S")


def configure_logger(run_name: str, log_dir: str | Path = "logs", level: int = logging.INFO) -> Path:
    """Configure logging to file in the log directory and to the console."""
    logs_dir = Path(log_dir)
    logs_dir.mkdir(parents=True, exist_ok=True)
    log_file = logs_dir / f"{run_name}.log"

    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_file, encoding='utf-8'),
            logging.StreamHandler()
        ],
        force=True,
    )
    return log_file


class MetricsLogger:
    """
    Structured-text metrics log: one JSON object per line.

    Usage:
        metrics = MetricsLogger(output_dir / "metrics.jsonl")
        metrics.log(epoch=1, phase="phase1", loss=0.42)
    """

    def __init__(self, path: str | Path, append: bool = False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not append and self.path.exists():
            self.path.unlink()
        self.rows: list[dict[str, Any]] = []

    def log(self, **fields: Any) -> dict[str, Any]:
        """Append one metrics row and flush it to disk."""
        row = dict(fields)
        self.rows.append(row)
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(json.dumps(row) + "\n")
        logging.info(" ".join(f"{k}={_format_value(v)}" for k, v in row.items()))
        return row

    def last_epoch(self) -> int:
        """Return the highest epoch recorded in the file (0 when empty)."""
        if not self.path.exists():
            return 0
        last = 0
        with open(self.path, "r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    last = max(last, int(json.loads(line).get("epoch", 0)))
        return last


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


class Stopwatch:
    """Wall-clock timer in microseconds based on perf_counter_ns."""

    def __init__(self):
        self._start = time.perf_counter_ns()

    def elapsed_us(self) -> float:
        return (time.perf_counter_ns() - self._start) / 1000.0
