"""
Tests for lib/optim.py - AdamW and reduce-on-plateau
"""

import numpy as np
import pytest

from lib.layers import ParamStore
from lib.optim import AdamW, ReduceLROnPlateau


def single_param(value=1.0):
    store = ParamStore()
    p = store.constant("w", (1,), value)
    return store, p


class TestAdamW:
    """Test the update rule."""

    def test_first_step_moves_by_lr(self):
        """With bias correction the first step has magnitude lr (no decay)."""
        _, p = single_param(1.0)
        optimizer = AdamW([p], lr=0.1, weight_decay=0.0)
        p.grad = np.array([0.5])

        optimizer.step()

        assert p.data[0] == pytest.approx(0.9, abs=1e-6)

    def test_decoupled_weight_decay(self):
        """Zero gradient still shrinks weights by lr * weight_decay."""
        _, p = single_param(2.0)
        optimizer = AdamW([p], lr=0.1, weight_decay=0.5)
        p.grad = np.zeros(1)

        optimizer.step()

        assert p.data[0] == pytest.approx(2.0 * (1 - 0.05))

    def test_frozen_parameters_untouched(self):
        """Frozen parameters keep bitwise-identical values."""
        store, p = single_param(1.5)
        store.freeze("w")
        optimizer = AdamW([p], lr=0.1)
        p.grad = np.array([3.0])

        optimizer.step()

        assert p.data[0] == 1.5

    def test_state_dict_round_trip(self):
        _, p = single_param(1.0)
        optimizer = AdamW([p], lr=0.1)
        p.grad = np.array([1.0])
        optimizer.step()

        state = optimizer.state_dict()
        restored = AdamW([p], lr=0.5)
        restored.load_state_dict(state, optimizer.step_count, optimizer.lr)

        assert set(state) == {"optim/m/w", "optim/v/w"}
        assert restored.step_count == 1
        assert restored.lr == 0.1
        np.testing.assert_array_equal(restored.m["w"], optimizer.m["w"])


class TestReduceLROnPlateau:
    """Test lr reduction after stalled evaluations."""

    def test_reduces_after_patience(self):
        _, p = single_param()
        optimizer = AdamW([p], lr=1.0)
        scheduler = ReduceLROnPlateau(optimizer, factor=0.5, patience=2)

        assert scheduler.step(1.0) is False
        assert scheduler.step(1.0) is False
        assert scheduler.step(1.0) is True
        assert optimizer.lr == 0.5

    def test_improvement_resets(self):
        _, p = single_param()
        optimizer = AdamW([p], lr=1.0)
        scheduler = ReduceLROnPlateau(optimizer, patience=2)

        scheduler.step(1.0)
        scheduler.step(1.0)
        scheduler.step(0.5)
        scheduler.step(0.5)

        assert optimizer.lr == 1.0

    def test_min_lr(self):
        _, p = single_param()
        optimizer = AdamW([p], lr=1e-3)
        scheduler = ReduceLROnPlateau(optimizer, factor=0.1, patience=1, min_lr=1e-3)

        scheduler.step(1.0)
        scheduler.step(1.0)

        assert optimizer.lr == 1e-3

    def test_state_round_trip(self):
        _, p = single_param()
        scheduler = ReduceLROnPlateau(AdamW([p]))
        scheduler.step(0.3)
        scheduler.step(0.4)

        other = ReduceLROnPlateau(AdamW([p]))
        other.load_state(scheduler.state())

        assert other.best == 0.3
        assert other.num_bad == 1
