"""
Chat duration prediction layer and the batched pool score matrix.

z = w * ((W1 e_i + b1) . (W2 e_j + b2)) + b
ET mode:     y_hat = exp(z), trained against log_scale(y)
LINEAR mode: y_hat = max(z, 0) * duration_unit_ms, trained against y / duration_unit_ms
"""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import stats

from .autograd import Tensor, as_tensor, clamp
from .errors import DataError, ShapeError
from .layers import ParamStore, linear

logger = logging.getLogger(__name__)

HEAD_PREFIX = "head"


class HeadMode(str, Enum):
    ET = "et"
    LINEAR = "linear"


class ClampCounter:
    """Number of logits clipped to |z| <= bound before exponentiation."""

    def __init__(self):
        self.count = 0
        self._lock = threading.Lock()

    def add(self, n: int) -> None:
        if n:
            with self._lock:
                self.count += n

    def reset(self) -> None:
        with self._lock:
            self.count = 0


class PredictionHead:
    """Dual projection head: W1 projects the requesting side, W2 the counterpart side."""

    def __init__(self, store: ParamStore, dim: int, projected_dim: int, mode: HeadMode | str = HeadMode.ET,
                 duration_unit_ms: float = 60000.0, exp_clamp: float = 30.0,
                 clamp_counter: ClampCounter | None = None, name: str = HEAD_PREFIX):
        self.dim = dim
        self.mode = HeadMode(mode)
        self.duration_unit_ms = duration_unit_ms
        self.exp_clamp = exp_clamp
        self.clamp_counter = clamp_counter or ClampCounter()
        self.W1, self.b1 = store.dense(f"{name}/proj_self", projected_dim, dim)
        self.W2, self.b2 = store.dense(f"{name}/proj_counterpart", projected_dim, dim)
        self.w = store.constant(f"{name}/w", (), 0.1)
        self.b = store.constant(f"{name}/b", (), 0.0)

    def init_bias(self, value: float) -> None:
        """Start b at the mean training target."""
        self.b.data[...] = value

    def logits(self, e_i: Tensor, e_j: Tensor) -> Tensor:
        """Differentiable z for batches [N, dim] x [N, dim] -> [N]; ET logits are clamped and counted."""
        if e_i.shape != e_j.shape or e_i.shape[-1] != self.dim:
            raise ShapeError(f"head inputs {e_i.shape} and {e_j.shape} do not match dim {self.dim}")
        projected = linear(e_i, self.W1, self.b1) * linear(e_j, self.W2, self.b2)
        z = projected.sum(axis=-1) * self.w + self.b
        if self.mode is HeadMode.ET:
            self.clamp_counter.add(int(np.sum(np.abs(z.data) > self.exp_clamp)))
            z = clamp(z, -self.exp_clamp, self.exp_clamp)
        return z

    def to_duration_ms(self, z: np.ndarray) -> np.ndarray:
        return to_duration_ms(z, self.mode, self.duration_unit_ms, self.exp_clamp, self.clamp_counter)


def combine(e_s, e_u):
    """e = e^s + e^u."""
    if np.shape(e_s) != np.shape(e_u):
        raise ShapeError(f"cannot combine representations of shape {np.shape(e_s)} and {np.shape(e_u)}")
    if isinstance(e_s, Tensor) or isinstance(e_u, Tensor):
        return as_tensor(e_s) + as_tensor(e_u)
    return np.asarray(e_s) + np.asarray(e_u)


def predict_log(head: PredictionHead, e_i: np.ndarray, e_j: np.ndarray) -> float:
    """Unclamped z for one ordered pair."""
    a = head.W1.data @ np.asarray(e_i, dtype=np.float64) + head.b1.data
    c = head.W2.data @ np.asarray(e_j, dtype=np.float64) + head.b2.data
    return float(head.w.data * np.dot(a, c) + head.b.data)


def to_duration_ms(z, mode: HeadMode | str, duration_unit_ms: float = 60000.0,
                   exp_clamp: float = 30.0, clamp_counter: ClampCounter | None = None) -> np.ndarray:
    """Raw-domain prediction from logits."""
    z = np.asarray(z, dtype=np.float64)
    if HeadMode(mode) is HeadMode.ET:
        clipped = np.abs(z) > exp_clamp
        if clamp_counter is not None and clipped.any():
            clamp_counter.add(int(clipped.sum()))
            logger.warning(f"Clamped {int(clipped.sum())} logits to |z| <= {exp_clamp}")
        return np.exp(np.clip(z, -exp_clamp, exp_clamp))
    return np.maximum(z, 0.0) * duration_unit_ms


def predict_duration(head: PredictionHead, e_i: np.ndarray, e_j: np.ndarray) -> float:
    return float(head.to_duration_ms(predict_log(head, e_i, e_j)))


def training_target(y_ms, mode: HeadMode | str, duration_unit_ms: float = 60000.0) -> np.ndarray:
    """log_scale(y) for ET, y in duration units for LINEAR."""
    y = np.asarray(y_ms, dtype=np.float64)
    if np.any(y < 0):
        raise DataError("durations must be non-negative")
    if HeadMode(mode) is HeadMode.ET:
        return np.log1p(y)
    return y / duration_unit_ms


def log_prediction(z, mode: HeadMode | str, duration_unit_ms: float = 60000.0,
                   exp_clamp: float = 30.0) -> np.ndarray:
    """
    log_scale of the raw-domain prediction, compared against log_scale(y) in
    evaluation. Equals log1p(to_duration_ms(z)) in both modes; the ET branch
    uses logaddexp(0, z) so large logits do not overflow.
    """
    z = np.asarray(z, dtype=np.float64)
    if HeadMode(mode) is HeadMode.ET:
        return np.logaddexp(0.0, np.clip(z, -exp_clamp, exp_clamp))
    return np.log1p(np.maximum(z, 0.0) * duration_unit_ms)


def score_matrix(head: PredictionHead, reps: np.ndarray) -> np.ndarray:
    """
    Y[i, j] = predicted duration of user i matched with j, via one (W1 E)(W2 E)^T
    product; the diagonal is -inf so a user is never paired with itself.
    """
    reps = np.asarray(reps, dtype=np.float64)
    if reps.ndim != 2 or reps.shape[1] != head.dim:
        raise ShapeError(f"expected representations [n, {head.dim}], got {reps.shape}")
    n = reps.shape[0]
    if n < 2:
        raise DataError(f"score_matrix needs at least 2 pool members, got {n}")
    left = reps @ head.W1.data.T + head.b1.data
    right = reps @ head.W2.data.T + head.b2.data
    z = head.w.data * (left @ right.T) + head.b.data
    scores = head.to_duration_ms(z)
    np.fill_diagonal(scores, -np.inf)
    return scores


@dataclass(frozen=True)
class DistributionShape:
    skewness: float
    excess_kurtosis: float
    ks_statistic: float


def distribution_shape(predictions: Sequence[float], truth: Sequence[float]) -> DistributionShape:
    """Skewness and excess kurtosis of predictions plus their KS distance to the true durations."""
    predictions = np.asarray(predictions, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    return DistributionShape(
        skewness=float(stats.skew(predictions)),
        excess_kurtosis=float(stats.kurtosis(predictions)),
        ks_statistic=float(stats.ks_2samp(predictions, truth).statistic),
    )


