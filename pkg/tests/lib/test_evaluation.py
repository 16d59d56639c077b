"""
Tests for lib/evaluation.py - metrics, delay sweeps and report tables
"""

import math

import numpy as np
import pytest

from lib.domain import MatchType
from lib.errors import DataError, UndefinedMetricError
from lib.evaluation import (
    DELAY_COLUMNS,
    auroc,
    collect_predictions,
    default_threshold,
    evaluate,
    reports_frame,
    run_delay_sweep,
    write_report,
)


class TestAuroc:
    """Test AUROC with ties counted as one half."""

    def test_known_example(self):
        assert auroc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75

    def test_perfect(self):
        assert auroc([1, 2, 3, 4], [0, 0, 1, 1]) == 1.0

    def test_reversed(self):
        assert auroc([4, 3, 2, 1], [0, 0, 1, 1]) == 0.0

    def test_all_tied(self):
        assert auroc([5, 5, 5, 5], [0, 1, 0, 1]) == 0.5

    def test_single_class_undefined(self):
        with pytest.raises(UndefinedMetricError):
            auroc([0.2, 0.4], [1, 1])

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            auroc([0.2, 0.4], [1])

    def test_invariant_under_monotone_transform(self):
        """Ranks, and so AUROC, survive exp and affine maps; rounding keeps some ties."""
        rng = np.random.default_rng(3)
        scores = np.round(rng.normal(size=500), 1)
        labels = rng.integers(0, 2, size=500)

        base = auroc(scores, labels)

        assert auroc(np.exp(scores), labels) == base
        assert auroc(3.0 * scores + 1.0, labels) == base

    def test_random_scores_near_half(self):
        rng = np.random.default_rng(17)

        value = auroc(rng.uniform(size=10_000), rng.integers(0, 2, size=10_000))

        assert value == pytest.approx(0.5, abs=0.02)


class TestThreshold:
    def test_recorded_threshold_used(self, world_dataset):
        assert default_threshold(world_dataset) == world_dataset.quality_threshold_ms

    def test_percentile_fallback(self, uniform_dataset):
        durations = [r.duration_ms for r in uniform_dataset.physical_matches()]

        assert default_threshold(uniform_dataset) == np.percentile(durations, 75)


class TestEvaluate:
    """Test per-match-type reports."""

    def test_rows_per_match_type(self, model, world_dataset):
        report = evaluate(model, world_dataset, "test")

        assert set(report.rows) == {t.value for t in MatchType}
        assert report.entire.count == len(world_dataset.split("test"))
        assert sum(report.row(t).count for t in MatchType if t is not MatchType.ENTIRE) == report.entire.count

    def test_evaluation_not_counted(self, model, world_dataset):
        evaluate(model, world_dataset, "validation")

        assert model.counter.transformer_forward_count == 0

    def test_empty_split(self, model, uniform_dataset):
        with pytest.raises(DataError, match="empty"):
            evaluate(model, uniform_dataset, "test")

    def test_summary_mentions_split(self, model, world_dataset):
        assert "split=test" in evaluate(model, world_dataset, "test").summary()


class TestDelaySweep:
    """Test delayed session lookups in evaluation."""

    def test_never_row_appended(self, model, world_dataset):
        reports = run_delay_sweep(model, world_dataset, [0, 4000])

        assert [r.delay_ms for r in reports][:2] == [0, 4000]
        assert math.isinf(reports[-1].delay_ms)

    def test_never_row_optional(self, model, world_dataset):
        reports = run_delay_sweep(model, world_dataset, [0], include_never_updated=False)

        assert len(reports) == 1

    def test_infinite_delay_uses_start_state(self, model, world_dataset):
        """With t' = inf every requester is scored with the empty-session state."""
        never = collect_predictions(model, world_dataset, "test", delay_ms=math.inf)
        huge = collect_predictions(model, world_dataset, "test", delay_ms=10 ** 12)

        np.testing.assert_allclose(never.z, huge.z)

    def test_frame_layout(self, model, world_dataset, tmp_path):
        reports = run_delay_sweep(model, world_dataset, [0])
        frame = reports_frame(reports, "delay_ms")

        path = write_report(frame, tmp_path / "delay_sweep.csv", "summary")

        assert list(frame.columns) == DELAY_COLUMNS
        assert set(frame["delay_ms"]) == {"0", "never"}
        assert path.with_suffix(".txt").read_text() == "summary\n"
