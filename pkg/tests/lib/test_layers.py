"""
Tests for lib/layers.py - parameters, dense layers and the causal transformer
"""

import numpy as np
import pytest

from lib.autograd import Tensor, grad_check, no_grad
from lib.errors import CheckpointError, ShapeError
from lib.layers import (
    MLP,
    CausalTransformer,
    Linear,
    ParamStore,
    causal_mask,
    linear,
)


class TestParamStore:
    """Test naming, freezing and state dicts."""

    def test_seeded_init_is_reproducible(self):
        a, b = ParamStore(5), ParamStore(5)
        a.dense("x", 3, 4)
        b.dense("x", 3, 4)

        assert a.checksum() == b.checksum()

    def test_duplicate_name(self):
        store = ParamStore()
        store.normal("table", (2, 2))

        with pytest.raises(ValueError):
            store.normal("table", (2, 2))

    def test_freeze_by_prefix(self):
        store = ParamStore()
        store.dense("feature/wide", 2, 2)
        store.dense("head/proj", 2, 2)

        frozen = store.freeze("feature/")

        assert frozen == 2
        assert all(p.frozen for p in store.parameters("feature/"))
        assert store.parameters(trainable_only=True) == store.parameters("head/")

    def test_load_state_dict_shape_mismatch(self):
        store = ParamStore()
        store.dense("x", 3, 4)
        state = store.state_dict()
        state["x/W"] = np.zeros((4, 3))

        with pytest.raises(CheckpointError, match="shape mismatch"):
            store.load_state_dict(state)

    def test_load_state_dict_missing_name(self):
        store = ParamStore()
        store.dense("x", 3, 4)

        with pytest.raises(CheckpointError, match="schema mismatch"):
            store.load_state_dict({"x/W": np.zeros((3, 4))})

    def test_checksum_changes_with_values(self):
        store = ParamStore()
        store.dense("x", 2, 2)
        before = store.checksum()

        store.fill(0.0)

        assert store.checksum() != before


class TestDense:
    """Test linear layers and MLPs."""

    def test_linear_dim_mismatch(self):
        store = ParamStore()
        W, b = store.dense("x", 3, 4)

        with pytest.raises(ShapeError):
            linear(Tensor(np.ones((2, 5))), W, b)

    def test_linear_vector_input(self):
        layer = Linear(ParamStore(), "x", 4, 3)

        assert layer(Tensor(np.ones(4))).shape == (3,)

    def test_mlp_gradients(self):
        store = ParamStore(1)
        net = MLP(store, "mlp", [3, 5, 2])
        x = Tensor(np.random.default_rng(0).normal(size=(4, 3)))

        error = grad_check(lambda: (net(x) * net(x)).sum(), store.parameters())

        assert error < 1e-4


class TestCausalTransformer:
    """Test masking and prefix stability."""

    def make(self, seq_len=6, dim=8):
        store = ParamStore(2)
        return store, CausalTransformer(store, "t", dim, layers=2, heads=2, max_seq_len=seq_len)

    def test_causal_mask(self):
        mask = causal_mask(3)

        assert mask[2, 0] and mask[1, 1]
        assert not mask[0, 1]

    def test_future_tokens_do_not_leak(self):
        """Changing position 4 leaves outputs at positions 0..3 bitwise unchanged."""
        _, transformer = self.make()
        rng = np.random.default_rng(0)
        tokens = rng.normal(size=(6, 8))
        changed = tokens.copy()
        changed[4] += rng.normal(scale=3.0, size=8)

        with no_grad():
            a = transformer(Tensor(tokens)).data
            b = transformer(Tensor(changed)).data

        np.testing.assert_array_equal(a[:4], b[:4])
        assert not np.allclose(a[4], b[4])

    def test_causality_random_sequences(self):
        """Over 100 random sequences, rewriting every token after k never moves outputs 0..k."""
        _, transformer = self.make(seq_len=8)
        rng = np.random.default_rng(7)

        for _ in range(100):
            seq_len = int(rng.integers(2, 9))
            k = int(rng.integers(0, seq_len - 1))
            tokens = rng.normal(size=(seq_len, 8))
            changed = tokens.copy()
            changed[k + 1:] = rng.normal(scale=2.0, size=(seq_len - k - 1, 8))

            with no_grad():
                a = transformer(Tensor(tokens)).data
                b = transformer(Tensor(changed)).data

            np.testing.assert_array_equal(a[:k + 1], b[:k + 1])

    def test_batch_matches_single(self):
        _, transformer = self.make()
        tokens = np.random.default_rng(1).normal(size=(3, 6, 8))

        with no_grad():
            batched = transformer(Tensor(tokens)).data
            single = transformer(Tensor(tokens[1])).data

        np.testing.assert_allclose(batched[1], single, rtol=0, atol=1e-12)

    def test_sequence_too_long(self):
        _, transformer = self.make(seq_len=4)

        with pytest.raises(ShapeError):
            transformer(Tensor(np.zeros((5, 8))))

    def test_heads_must_divide_dim(self):
        with pytest.raises(ShapeError):
            CausalTransformer(ParamStore(), "t", 10, layers=1, heads=3, max_seq_len=4)

    def test_gradients(self):
        store = ParamStore(3)
        transformer = CausalTransformer(store, "t", 4, layers=1, heads=2, max_seq_len=3)
        tokens = Tensor(np.random.default_rng(2).normal(size=(3, 4)), requires_grad=True)
        weights = Tensor(np.random.default_rng(3).normal(size=(3, 4)))

        error = grad_check(lambda: (transformer(tokens) * weights).sum(), [tokens] + store.parameters("t/block0/attn"))

        assert error < 1e-3
