"""Unit tests for the tensor core: forward values, tape gradients and grad_check."""

from __future__ import annotations

import math

import numpy as np
import pytest

from nioperator.errors import DimensionError, NumericalOverflowError, UsageError
from nioperator.tensor import (
    Tape,
    Tensor,
    backward,
    div,
    exp,
    grad_check,
    log,
    log_softmax,
    matmul,
    repeat_rows,
    sigmoid,
    softmax,
    softplus,
    square,
    tanh,
    tensor_abs,
)


pytestmark = pytest.mark.unit


class TestForward:
    """Forward values of the elementary operations."""

    def test_matmul_hand_example(self):
        out = matmul(Tensor([[1, 2], [3, 4]]), Tensor([[5, 6], [7, 8]]))
        np.testing.assert_array_equal(out.data, [[19, 22], [43, 50]])

    def test_matmul_identity_and_zero(self, rng):
        a = Tensor(rng.normal(size=(3, 4)))
        np.testing.assert_array_equal((a @ Tensor(np.eye(4))).data, a.data)
        np.testing.assert_array_equal((a @ Tensor(np.zeros((4, 2)))).data, np.zeros((3, 2)))

    def test_matmul_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    @pytest.mark.parametrize("logits,expected", [
        ([0.0, 0.0], [0.5, 0.5]),
        ([math.log(2.0), 0.0], [2.0 / 3.0, 1.0 / 3.0]),
    ])
    def test_softmax_closed_forms(self, logits, expected):
        np.testing.assert_allclose(softmax(Tensor(logits)).data, expected, rtol=1e-12)

    def test_softmax_shift_invariance(self, rng):
        x = rng.normal(size=(3, 5))
        np.testing.assert_allclose(softmax(Tensor(x), axis=1).data, softmax(Tensor(x + 7.5), axis=1).data, atol=1e-15)

    def test_softmax_large_logits_stay_finite(self):
        out = softmax(Tensor([1000.0, 0.0]))
        np.testing.assert_allclose(out.data, [1.0, 0.0], atol=1e-300)

    def test_softmax_bad_axis(self):
        with pytest.raises(UsageError):
            softmax(Tensor([1.0, 2.0]), axis=3)

    def test_non_finite_output_raises(self):
        with pytest.raises(NumericalOverflowError, match="exp"):
            exp(Tensor([1000.0]))
        with pytest.raises(NumericalOverflowError, match="log"):
            log(Tensor([0.0]))

    def test_tensors_are_immutable(self):
        t = Tensor([1.0, 2.0])
        with pytest.raises(ValueError):
            t.data[0] = 5.0

    def test_reshape_mismatch(self):
        with pytest.raises(DimensionError):
            Tensor(np.ones(6)).reshape(4, 2)

    def test_repeat_rows(self):
        out = repeat_rows(Tensor([[1.0, 2.0], [3.0, 4.0]]), 2)
        np.testing.assert_array_equal(out.data, [[1, 2], [1, 2], [3, 4], [3, 4]])


class TestBackward:
    """Tape-based reverse-mode gradients."""

    def test_square_at_three(self):
        with Tape() as tape:
            x = Tensor(3.0, requires_grad=True)
            grads = tape.backward(x * x)
        assert grads[x].item() == 6.0

    def test_product_rule(self):
        with Tape():
            x = Tensor(2.0, requires_grad=True)
            y = Tensor(-5.0, requires_grad=True)
            grads = backward(x * y)
        assert grads[x].item() == -5.0
        assert grads[y].item() == 2.0

    def test_cross_entropy_gradient_is_probs_minus_onehot(self):
        logits = np.array([0.3, -1.2, 2.0, 0.5])
        onehot = np.array([0.0, 0.0, 1.0, 0.0])
        with Tape() as tape:
            x = Tensor(logits, requires_grad=True)
            grads = tape.backward(-(log_softmax(x) * onehot).sum())
        expected = softmax(Tensor(logits)).data - onehot
        np.testing.assert_allclose(grads[x].data, expected, atol=1e-12)

    def test_broadcast_gradient_is_summed(self):
        with Tape() as tape:
            a = Tensor(np.ones((2, 3)), requires_grad=True)
            b = Tensor(np.zeros(3), requires_grad=True)
            grads = tape.backward((a + b).sum())
        np.testing.assert_array_equal(grads[b].data, [2.0, 2.0, 2.0])

    def test_unreached_leaf_has_zero_gradient(self):
        with Tape() as tape:
            x = Tensor([1.0, 2.0], requires_grad=True)
            unused = Tensor([3.0], requires_grad=True)
            grads = tape.backward(x.sum())
        np.testing.assert_array_equal(grads.wrt(unused), [0.0])

    def test_non_scalar_loss_rejected(self):
        with Tape() as tape:
            x = Tensor([1.0, 2.0], requires_grad=True)
            with pytest.raises(UsageError, match="scalar"):
                tape.backward(x * 2.0)

    def test_backward_outside_tape(self):
        with pytest.raises(UsageError):
            backward(Tensor(1.0, requires_grad=True))

    def test_operations_outside_tape_are_not_recorded(self):
        x = Tensor(2.0, requires_grad=True)
        assert (x * x).node_id is None

    def test_tape_cannot_be_entered_twice(self):
        tape = Tape()
        with tape:
            with pytest.raises(UsageError):
                tape.__enter__()


_POSITIVE = np.array([[0.7, 1.3, 2.1], [0.4, 1.9, 0.9]])
_WEIGHTS = np.array([[0.3, -1.1, 0.8], [1.7, 0.2, -0.6]])


class TestGradCheck:
    """Finite-difference agreement of every differentiable operation."""

    @pytest.mark.parametrize("name,f", [
        ("add", lambda x: ((x + Tensor(_WEIGHTS)) * Tensor(_WEIGHTS)).sum()),
        ("sub", lambda x: ((Tensor(_WEIGHTS) - x) * x).sum()),
        ("mul", lambda x: (x * x * Tensor(_WEIGHTS)).sum()),
        ("div", lambda x: (Tensor(_WEIGHTS) / x).sum()),
        ("div_numerator", lambda x: div(x, Tensor(_POSITIVE + 1.0)).sum()),
        ("neg", lambda x: ((-x) * Tensor(_WEIGHTS)).sum()),
        ("matmul", lambda x: (x @ Tensor(_WEIGHTS.T) @ x).sum()),
        ("transpose", lambda x: (x.T @ Tensor(_WEIGHTS)).sum()),
        ("reshape", lambda x: (x.reshape(3, 2) @ Tensor(_WEIGHTS)).sum()),
        ("sum_axis", lambda x: (x.sum(axis=0) * Tensor([1.0, 2.0, 3.0])).sum()),
        ("mean_axis", lambda x: square(x.mean(axis=1, keepdims=True)).sum()),
        ("exp", lambda x: (exp(x) * Tensor(_WEIGHTS)).sum()),
        ("log", lambda x: (log(x) * Tensor(_WEIGHTS)).sum()),
        ("tanh", lambda x: (tanh(x) * Tensor(_WEIGHTS)).sum()),
        ("sigmoid", lambda x: (sigmoid(x) * Tensor(_WEIGHTS)).sum()),
        ("softplus", lambda x: (softplus(x) * Tensor(_WEIGHTS)).sum()),
        ("abs", lambda x: (tensor_abs(x - 1.5) * Tensor(_WEIGHTS)).sum()),
        ("square", lambda x: (square(x) * Tensor(_WEIGHTS)).sum()),
        ("softmax", lambda x: (softmax(x, axis=1) * Tensor(_WEIGHTS)).sum()),
        ("softmax_axis0", lambda x: (softmax(x, axis=0) * Tensor(_WEIGHTS)).sum()),
        ("log_softmax", lambda x: (log_softmax(x, axis=1) * Tensor(_WEIGHTS)).sum()),
        ("repeat_rows", lambda x: (repeat_rows(x, 3) * Tensor(np.repeat(_WEIGHTS, 3, axis=0))).sum()),
    ])
    def test_elementary_op(self, name, f):
        assert grad_check(f, _POSITIVE) < 1e-4, name

    def test_quadratic_form(self, rng):
        a = rng.normal(size=(4, 4))
        error = grad_check(lambda x: (x.T @ Tensor(a) @ x).sum(), rng.normal(size=(4, 1)))
        assert error < 1e-7

    def test_linear_function_is_exact(self):
        error = grad_check(lambda x: (x * Tensor([1.0, -2.0, 0.5])).sum(), np.array([0.2, -0.7, 0.4]), eps=1e-2)
        assert error < 1e-10

    def test_kink_of_abs_is_reported(self):
        # analytic subgradient +1 against a central difference of 0
        assert grad_check(lambda x: tensor_abs(x).sum(), np.array([0.0])) > 0.5

    def test_rejects_non_positive_eps(self):
        with pytest.raises(UsageError):
            grad_check(lambda x: x.sum(), np.ones(2), eps=0.0)
