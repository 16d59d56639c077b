"""
Tests for lib/autograd.py - reverse-mode differentiation
"""

import numpy as np
import pytest

from lib.autograd import (
    Tensor,
    clamp,
    concat,
    exp,
    gelu,
    grad_check,
    is_grad_enabled,
    layer_norm,
    masked_softmax,
    matmul,
    no_grad,
    relu,
    square,
    take_rows,
)
from lib.errors import NumericError, ShapeError


def param(*shape, seed=0):
    return Tensor(np.random.default_rng(seed).normal(size=shape), requires_grad=True)


class TestBackward:
    """Test gradients of basic expressions."""

    def test_product_rule(self):
        x = Tensor(np.array(3.0), requires_grad=True)
        y = Tensor(np.array(4.0), requires_grad=True)

        (x * y + x).backward()

        assert float(x.grad) == pytest.approx(5.0)
        assert float(y.grad) == pytest.approx(3.0)

    def test_shared_subexpression_accumulates(self):
        """A node used twice receives both gradient contributions."""
        x = Tensor(np.array(2.0), requires_grad=True)
        y = x * x

        (y + y).backward()

        assert float(x.grad) == pytest.approx(8.0)

    def test_broadcast_gradient_reduced(self):
        x = param(3, 4)
        b = param(4, seed=1)

        (x + b).sum().backward()

        assert b.grad.shape == (4,)
        np.testing.assert_allclose(b.grad, np.full(4, 3.0))

    def test_non_scalar_needs_gradient(self):
        with pytest.raises(ShapeError):
            param(2, 2).backward()

    def test_no_grad_records_nothing(self):
        x = param(2)
        with no_grad():
            assert not is_grad_enabled()
            y = x * 2.0
        assert is_grad_enabled()
        assert not y.requires_grad


class TestGradCheck:
    """Analytic gradients agree with central differences."""

    @pytest.mark.parametrize("op", [relu, gelu, exp, square])
    def test_elementwise(self, op):
        x = param(3, 2)
        x.data += 0.05
        assert grad_check(lambda: op(x).sum(), [x]) < 1e-5

    def test_matmul(self):
        a, b = param(3, 4), param(4, 2, seed=1)
        assert grad_check(lambda: matmul(a, b).sum(), [a, b]) < 1e-6

    def test_layer_norm(self):
        x, g, b = param(2, 5), param(5, seed=1), param(5, seed=2)
        w = Tensor(np.random.default_rng(3).normal(size=(2, 5)))
        assert grad_check(lambda: (layer_norm(x, g, b) * w).sum(), [x, g, b]) < 1e-5

    def test_masked_softmax(self):
        x = param(3, 3)
        mask = np.tril(np.ones((3, 3), dtype=bool))
        w = Tensor(np.random.default_rng(4).normal(size=(3, 3)))
        assert grad_check(lambda: (masked_softmax(x, mask) * w).sum(), [x]) < 1e-6

    def test_take_rows_repeated_ids(self):
        table = param(4, 3)
        ids = np.array([[0, 2], [2, 2]])
        assert grad_check(lambda: square(take_rows(table, ids)).sum(), [table]) < 1e-6

    def test_concat(self):
        a, b = param(2, 3), param(1, 3, seed=1)
        assert grad_check(lambda: square(concat([a, b], axis=0)).sum(), [a, b]) < 1e-6


class TestOps:
    """Test forward semantics and error cases."""

    def test_masked_entries_exactly_zero(self):
        mask = np.array([[True, False], [True, True]])

        out = masked_softmax(Tensor(np.array([[5.0, 100.0], [0.0, 0.0]])), mask)

        assert out.data[0, 1] == 0.0
        assert out.data[0, 0] == 1.0
        np.testing.assert_allclose(out.data[1], [0.5, 0.5])

    def test_fully_masked_row(self):
        with pytest.raises(ShapeError):
            masked_softmax(Tensor(np.zeros((1, 2))), np.zeros((1, 2), dtype=bool))

    def test_clamp_blocks_gradient_outside(self):
        x = Tensor(np.array([-50.0, 0.5, 50.0]), requires_grad=True)

        clamp(x, -30.0, 30.0).sum().backward()

        np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])

    def test_matmul_shape_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(param(2, 3), param(2, 3))

    def test_take_rows_out_of_range(self):
        with pytest.raises(ShapeError):
            take_rows(param(3, 2), np.array([3]))

    def test_overflow_detected(self):
        """Non-finite values raise instead of propagating."""
        with pytest.raises(NumericError):
            exp(Tensor(np.array([1000.0])))
