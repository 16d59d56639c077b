"""
Evaluation: log-domain MSE, AUROC, match-type breakdowns, the delay sweep
and the ablation runner, plus CSV/text report writers.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from .autograd import Tensor, no_grad
from .config import RunConfig
from .domain import Dataset, MatchType, UserKind, match_type
from .embedding import InferenceCounter
from .errors import DataError, UndefinedMetricError
from .prediction import DistributionShape, distribution_shape, log_prediction
from .training import ABLATIONS, CupidModel, Trainer, build_variant

logger = logging.getLogger(__name__)

MATCH_TYPES = (MatchType.ENTIRE, MatchType.WARM_WARM, MatchType.WARM_COLD, MatchType.COLD_COLD)
NEVER_UPDATED = math.inf
ABLATION_COLUMNS = ["variant", "match_type", "count", "mse", "auroc"]
DELAY_COLUMNS = ["delay_ms", "match_type", "count", "mse", "auroc"]


def auroc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    Probability that a random positive outranks a random negative, ties
    counting one half (Mann-Whitney U with midranks).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise DataError(f"auroc: {scores.size} scores but {labels.size} labels")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("auroc is undefined when only one class is present")
    ranks = rankdata(scores, method="average")
    u = math.fsum(ranks[labels]) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def _safe_auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    try:
        return auroc(scores, labels)
    except UndefinedMetricError:
        return math.nan


@dataclass(frozen=True)
class MetricRow:
    match_type: str
    count: int
    mse: float
    auroc: float


@dataclass
class EvalReport:
    """Per match type: count, log-domain MSE, AUROC (NaN when undefined)."""
    rows: Dict[str, MetricRow]
    split: str
    threshold_ms: float
    delay_ms: float = 0.0
    config: Dict = field(default_factory=dict)

    @property
    def entire(self) -> MetricRow:
        return self.rows[MatchType.ENTIRE.value]

    def row(self, kind: MatchType | str) -> MetricRow:
        return self.rows[MatchType(kind).value]

    def summary(self) -> str:
        lines = [f"split={self.split} threshold_ms={self.threshold_ms:.0f} delay_ms={self.delay_ms}"]
        for row in self.rows.values():
            lines.append(f"  {row.match_type:<10} n={row.count:<7} mse={row.mse:.4f} auroc={row.auroc:.4f}")
        return "\n".join(lines)


@dataclass
class Predictions:
    """Per directed record of a split: logits, log-domain prediction, truth and match type."""
    z: np.ndarray
    log_pred: np.ndarray
    truth_ms: np.ndarray
    match_types: List[MatchType]

    @property
    def log_truth(self) -> np.ndarray:
        return np.log1p(self.truth_ms)


def default_threshold(dataset: Dataset) -> float:
    """The dataset's recorded quality threshold, else the 75th percentile of training durations."""
    if dataset.quality_threshold_ms is not None:
        return float(dataset.quality_threshold_ms)
    train = [r.duration_ms for r in dataset.physical_matches() if r.end_time_ms < dataset.train_end_ms]
    if not train:
        raise DataError("cannot derive a quality threshold without training records")
    return float(np.percentile(train, 75))


def _state_index(session, position: int, start_time_ms: int, delay_ms: float) -> int:
    """Matches of this session ended by start - delay, never past the record itself."""
    if math.isinf(delay_ms):
        return 0
    return min(session.count_ended_by(int(start_time_ms - delay_ms)), position)


def collect_predictions(model: CupidModel, dataset: Dataset, split: str = "test",
                        delay_ms: float = 0.0, count: bool = False) -> Predictions:
    """
    Predict every directed record of a split using each user's session
    state as of just before the match (or as of start - delay_ms).
    """
    records = dataset.split(split)
    if not records:
        raise DataError(f"split '{split}' is empty")
    max_len = model.config.max_session_len
    sessions = dataset.sessions(max_len)
    locations = dataset.locations(max_len)
    warm = dataset.training_users()

    own = [locations[(r.self_id, r.end_time_ms)] for r in records]
    theirs = [locations[(r.counterpart, r.end_time_ms)] for r in records]
    n = len(records)
    e_s_i = np.zeros((n, model.config.dim))
    e_s_j = np.zeros((n, model.config.dim))
    if model.use_session:
        needed = sorted({loc.session_index for loc in own + theirs})
        encoded = dict(zip(needed, model.encode([sessions[i] for i in needed], count=count)))
        for k, record in enumerate(records):
            for loc, target in ((own[k], e_s_i), (theirs[k], e_s_j)):
                session = sessions[loc.session_index]
                idx = _state_index(session, loc.position, record.start_time_ms, delay_ms)
                target[k] = encoded[loc.session_index].state(idx)

    e_i = model.feature_embeddings(r.self_features for r in records) + e_s_i
    if model.aux_counterpart:
        e_j = model.feature_embeddings((r.counterpart_features for r in records), aux=True)
    else:
        e_j = model.feature_embeddings(r.counterpart_features for r in records) + e_s_j
    with no_grad():
        z = model.f_o.logits(Tensor(e_i), Tensor(e_j)).data

    def kind(user: int) -> UserKind:
        return UserKind.WARM if user in warm else UserKind.COLD

    return Predictions(
        z=z,
        log_pred=log_prediction(z, model.head_mode, model.config.duration_unit_ms, model.config.exp_clamp),
        truth_ms=np.array([r.duration_ms for r in records], dtype=np.float64),
        match_types=[match_type(kind(r.self_id), kind(r.counterpart)) for r in records],
    )


def report_from_predictions(predictions: Predictions, threshold_ms: float, split: str,
                            delay_ms: float = 0.0, config: Optional[Dict] = None) -> EvalReport:
    labels = predictions.truth_ms > threshold_ms
    truth = predictions.log_truth
    types = np.array([t.value for t in predictions.match_types])
    rows = {}
    for kind in MATCH_TYPES:
        mask = np.ones(len(types), dtype=bool) if kind is MatchType.ENTIRE else types == kind.value
        count = int(mask.sum())
        if count:
            mse = math.fsum((predictions.log_pred[mask] - truth[mask]) ** 2) / count
            score = _safe_auroc(predictions.log_pred[mask], labels[mask])
        else:
            mse, score = math.nan, math.nan
        rows[kind.value] = MetricRow(kind.value, count, mse, score)
    return EvalReport(rows, split, threshold_ms, delay_ms, config or {})


def evaluate(model: CupidModel, dataset: Dataset, split: str = "test", threshold_ms: Optional[float] = None,
             delay_ms: float = 0.0, config: Optional[Dict] = None) -> EvalReport:
    """Log-domain MSE and AUROC of the model on a split, broken down by match type."""
    threshold = default_threshold(dataset) if threshold_ms is None else float(threshold_ms)
    predictions = collect_predictions(model, dataset, split, delay_ms)
    return report_from_predictions(predictions, threshold, split, delay_ms, config)


def prediction_shape(model: CupidModel, dataset: Dataset, split: str = "test") -> DistributionShape:
    """Shape of raw-domain predictions against the true durations of a split."""
    predictions = collect_predictions(model, dataset, split)
    with no_grad():
        raw = model.f_o.to_duration_ms(predictions.z)
    return distribution_shape(raw, predictions.truth_ms)


# ----------------------------------------------------------------------
# sweeps and ablations
# ----------------------------------------------------------------------

def run_delay_sweep(model: CupidModel, dataset: Dataset, delays_ms: Sequence[float],
                    split: str = "test", threshold_ms: Optional[float] = None,
                    include_never_updated: bool = True) -> List[EvalReport]:
    """One report per delay t'; the optional last row uses t' = inf (sessions never updated)."""
    threshold = default_threshold(dataset) if threshold_ms is None else float(threshold_ms)
    delays = list(delays_ms) + ([NEVER_UPDATED] if include_never_updated else [])
    reports = []
    for delay in delays:
        report = report_from_predictions(collect_predictions(model, dataset, split, delay),
                                         threshold, split, delay)
        logger.info(f"Delay {delay_label(delay)}: mse={report.entire.mse:.4f} auroc={report.entire.auroc:.4f}")
        reports.append(report)
    return reports


def delay_label(delay_ms: float) -> str:
    return "never" if math.isinf(delay_ms) else str(int(delay_ms))


@dataclass
class AblationResult:
    reports: Dict[str, EvalReport]
    shapes: Dict[str, DistributionShape]
    forward_counts: Dict[str, int]

    def best_variant(self) -> str:
        return min(self.reports, key=lambda v: self.reports[v].entire.mse)


def run_ablations(dataset: Dataset, config: RunConfig, variants: Sequence[str] = ABLATIONS,
                  split: str = "test", threshold_ms: Optional[float] = None,
                  output_dir: Optional[str | Path] = None) -> AblationResult:
    """Train and evaluate each variant with the same splits and seeds."""
    threshold = default_threshold(dataset) if threshold_ms is None else float(threshold_ms)
    reports, shapes, counts = {}, {}, {}
    for variant in variants:
        logger.info(f"=== Ablation variant: {variant} ===")
        counter = InferenceCounter()
        model = build_variant(variant, config, counter)
        checkpoint = Path(output_dir) / f"{variant}.ckpt" if output_dir else None
        Trainer(model, dataset, config, checkpoint_path=checkpoint, variant=variant,
                threshold_ms=threshold).fit_ablation()
        reports[variant] = evaluate(model, dataset, split, threshold)
        shapes[variant] = prediction_shape(model, dataset, split)
        counts[variant] = counter.transformer_forward_count
    return AblationResult(reports, shapes, counts)


# ----------------------------------------------------------------------
# report files
# ----------------------------------------------------------------------

def reports_frame(reports: Dict[str, EvalReport] | List[EvalReport], key: str) -> pd.DataFrame:
    """Long-format table: one row per (variant or delay, match type)."""
    rows = []
    items = reports.items() if isinstance(reports, dict) else ((delay_label(r.delay_ms), r) for r in reports)
    for label, report in items:
        for row in report.rows.values():
            rows.append({key: label, "match_type": row.match_type, "count": row.count,
                         "mse": row.mse, "auroc": row.auroc})
    columns = ABLATION_COLUMNS if key == "variant" else DELAY_COLUMNS
    return pd.DataFrame(rows, columns=columns)


def write_report(frame: pd.DataFrame, csv_path: str | Path, summary: str) -> Path:
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(csv_path, index=False, float_format="%.6f", lineterminator="\n")
    csv_path.with_suffix(".txt").write_text(summary + "\n", encoding="utf-8")
    logger.info(f"Report written to {csv_path}")
    return csv_path
