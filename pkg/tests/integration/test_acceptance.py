"""
Experiment-level checks at desk scale: exact pass counts, ablation ordering,
prediction shape, delay sweep, latency and the online comparison.
"""

import pytest

from lib.config import derive_seed
from lib.domain import uniform_session_dataset
from lib.embedding import InferenceCounter
from lib.engine import bench_latency
from lib.evaluation import evaluate, run_ablations, run_delay_sweep
from lib.training import ABLATIONS, BASELINES, Trainer, build_variant, reduction_factor
from lib.worldsim import ModelPolicy, RandomPolicy, generate_dataset, run_switchback
from tests.conftest import tiny_config


pytestmark = [pytest.mark.integration, pytest.mark.slow]


def experiment_config(**overrides):
    """A larger world and longer schedule than the unit-test configuration."""
    settings = dict(
        world__num_users=120,
        world__horizon_hours=12.0,
        training__phase1_epochs=6,
        training__phase2_epochs=3,
        training__epochs=6,
    )
    settings.update(overrides)
    return tiny_config(**settings)


# ============================================================================
# Fixtures
# ============================================================================

@pytest.fixture(scope="module")
def config():
    return experiment_config()


@pytest.fixture(scope="module")
def dataset(config):
    return generate_dataset(config.world, derive_seed(config.seed, "world"))


@pytest.fixture(scope="module")
def ablations(dataset, config):
    return run_ablations(dataset, config, variants=ABLATIONS + BASELINES)


@pytest.fixture(scope="module")
def trained(dataset, config):
    model = build_variant("full", config, InferenceCounter())
    Trainer(model, dataset, config).fit_two_phase()
    return model


# ============================================================================
# Training Cost
# ============================================================================

class TestPassCounts:
    """Transformer passes at |S|=32, |D|=4096 and N = N1 = 10."""

    def test_closed_forms_exact(self):
        config = tiny_config(training__epochs=10, training__phase1_epochs=10, training__phase2_epochs=1,
                             training__validate_every_epoch=False, model__max_session_len=32)
        dataset = uniform_session_dataset(128, 32, seed=3, num_countries=4)
        records = len(dataset.split("train"))
        assert records == 4096

        phase1 = build_variant("full", config, InferenceCounter())
        two_phase = build_variant("full", config, InferenceCounter())
        joint = build_variant("full", config, InferenceCounter())
        Trainer(phase1, dataset, config).fit_two_phase(phase1_only=True)
        Trainer(two_phase, dataset, config).fit_two_phase()
        Trainer(joint, dataset, config).fit_joint()

        assert phase1.counter.transformer_forward_count == 10 * records // 32
        assert two_phase.counter.transformer_forward_count == (10 + 2) * records // 32 == 1536
        assert joint.counter.transformer_forward_count == 2 * 10 * records == 81920
        ratio = joint.counter.transformer_forward_count / two_phase.counter.transformer_forward_count
        assert ratio == pytest.approx(reduction_factor(10, 10, 32))
        assert ratio == pytest.approx(53.333, abs=1e-3)

    def test_headline_factor(self):
        assert reduction_factor(10, 10, 128) == pytest.approx(213.333, abs=1e-3)


# ============================================================================
# Offline Quality
# ============================================================================

class TestAblationOrdering:
    """All variants share splits and seeds, so their reports are comparable."""

    def test_full_model_has_lowest_mse(self, ablations):
        ranked = {v: ablations.reports[v].entire.mse for v in ABLATIONS}

        assert min(ranked, key=ranked.get) == "full"

    def test_full_beats_feature_only(self, ablations):
        full = ablations.reports["full"].entire
        feature_only = ablations.reports["wide_deep_s"].entire

        assert full.mse <= 0.95 * feature_only.mse
        assert full.auroc >= feature_only.auroc + 0.01

    def test_exponential_head_matches_duration_shape(self, ablations):
        """The exponential head fits the heavy tail better than the linear one."""
        et, linear = ablations.shapes["full"], ablations.shapes["no-et"]

        assert et.ks_statistic < linear.ks_statistic
        assert et.skewness > linear.skewness

    def test_head_training_does_not_hurt_validation(self, dataset, config):
        """Training the head on frozen representations keeps validation MSE at or below phase 1 alone."""
        phase1 = build_variant("full", config)
        both = build_variant("full", config)
        Trainer(phase1, dataset, config).fit_two_phase(phase1_only=True)
        Trainer(both, dataset, config).fit_two_phase()

        assert evaluate(both, dataset, "validation").entire.mse <= evaluate(phase1, dataset, "validation").entire.mse


class TestDelaySweep:
    def test_zero_delay_row_is_plain_evaluation(self, trained, dataset):
        reports = run_delay_sweep(trained, dataset, [0], include_never_updated=False)

        assert reports[0].entire.mse == evaluate(trained, dataset, "test").entire.mse

    def test_stale_sessions_cost_accuracy(self, trained, dataset, ablations):
        reports = run_delay_sweep(trained, dataset, [0, 16000], include_never_updated=False)
        fresh, stale = reports[0].entire, reports[1].entire

        assert stale.mse >= fresh.mse
        assert stale.mse < ablations.reports["wide_deep"].entire.mse
        assert stale.mse < ablations.reports["wide_deep_s"].entire.mse


# ============================================================================
# Serving
# ============================================================================

class TestLatency:
    """Reading precommitted states beats re-encoding sessions at scoring time."""

    def test_async_tail_at_most_half_of_sync(self, trained):
        sizes = [16, 64, 256]

        report = bench_latency(trained, sizes, reps=30, session_len=8)

        for size in sizes:
            sync, lagged = report.row("sync", size), report.row("async", size)
            assert lagged.p99_us <= 0.5 * sync.p99_us
            assert sync.p50_us <= sync.p90_us <= sync.p99_us
            assert lagged.p50_us <= lagged.p90_us <= lagged.p99_us


class TestOnlineLift:
    def test_model_lengthens_chats(self, trained, config):
        arms = {"random": RandomPolicy(1), "cupid": ModelPolicy(trained, config.engine, name="cupid")}

        report = run_switchback(config, arms, horizon_ms=12 * 3600 * 1000, window_ms=10 * 60 * 1000)
        random_arm, cupid = report.arm_stats("random"), report.arm_stats("cupid")

        assert random_arm.windows >= 30 and cupid.windows >= 30
        assert cupid.mean_duration_ms > random_arm.mean_duration_ms
        assert report.significant_difference("random", "cupid", z=2.0)
