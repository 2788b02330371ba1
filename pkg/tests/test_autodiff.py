"""Tape semantics, detach, determinism, and the verifier itself."""

import numpy as np
import pytest

from tubeseg.autodiff import (
    Tape,
    Tensor,
    add,
    constant,
    conv2d_3x3,
    finite_difference_check,
    log_softmax,
    matmul,
    mul,
    neg,
    reshape,
    scaled_dot_attention,
    slice_axis,
    softmax_axis,
    tsum,
)
from tubeseg.errors import ContractError, GradCheckError
from tubeseg.losses import dice_coefficient


def test_sum_backward_is_ones():
    with Tape() as tape:
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        tape.backward(tsum(x))
    np.testing.assert_array_equal(x.grad, np.ones(3))


def test_square_backward():
    with Tape() as tape:
        x = Tensor(3.0, requires_grad=True)
        tape.backward(mul(x, x))
    np.testing.assert_allclose(x.grad, [6.0])


def test_non_scalar_loss_rejected():
    with Tape() as tape:
        x = Tensor([1.0, 2.0], requires_grad=True)
        y = mul(x, x)
        with pytest.raises(ContractError):
            tape.backward(y)


def test_detached_values_receive_no_gradient():
    with Tape() as tape:
        x = Tensor([2.0, 4.0], requires_grad=True)
        held = x.detach()
        loss = tsum(mul(held, x))
        tape.backward(loss)
    # d/dx of <sg(x), x> is sg(x), not 2x.
    np.testing.assert_array_equal(x.grad, held.data)
    assert held.grad is None


def test_gradient_accumulates_across_uses():
    with Tape() as tape:
        x = Tensor([1.0], requires_grad=True)
        loss = add(mul(x, constant(2.0)), mul(x, constant(5.0)))
        tape.backward(loss)
    np.testing.assert_allclose(x.grad, [7.0])


def test_no_tape_means_no_graph():
    x = Tensor([1.0, 2.0], requires_grad=True)
    out = mul(x, x)
    assert not out.requires_grad


def test_determinism_bitwise(rng):
    def run():
        r = np.random.default_rng(42)
        x = Tensor(r.normal(size=(3, 4)), requires_grad=True)
        w = Tensor(r.normal(size=(4, 4)), requires_grad=True)
        with Tape() as tape:
            out = scaled_dot_attention(matmul(x, w), matmul(x, w), matmul(x, w))
            loss = tsum(mul(out, out))
            tape.backward(loss)
        return loss.data.copy(), x.grad.copy(), w.grad.copy()

    first, second = run(), run()
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a, b)


def test_composed_pipeline_gradient(rng):
    """conv -> attention -> softmax -> dice, against finite differences."""
    x = Tensor(rng.normal(size=(1, 4, 4)), requires_grad=True)
    k = Tensor(rng.normal(size=(2, 1, 3, 3)), requires_grad=True)
    w = Tensor(rng.normal(size=(16, 16)) * 0.3, requires_grad=True)
    gt = (rng.random((4, 4)) > 0.5).astype(float)

    def objective():
        feats = conv2d_3x3(x, k)  # (2,4,4)
        rows = reshape(feats, (2, 16))
        attended = scaled_dot_attention(matmul(rows, w), rows, rows)
        probs = softmax_axis(attended, 0)
        mask = reshape(probs, (2, 4, 4))
        return dice_coefficient(gt, reshape(slice_axis(mask, 0, 0, 1), (4, 4)))

    assert finite_difference_check(objective, [x, k, w]) < 1e-4


def test_softmax_cross_entropy_closed_form(rng):
    logits = Tensor(rng.normal(size=(5,)), requires_grad=True)
    target = 2

    def objective():
        picked = slice_axis(log_softmax(logits, 0), 0, target, target + 1)
        return neg(reshape(picked, ()))

    with Tape() as tape:
        tape.backward(objective())
    probs = np.exp(logits.data - logits.data.max())
    probs /= probs.sum()
    onehot = np.zeros(5)
    onehot[target] = 1.0
    np.testing.assert_allclose(logits.grad, probs - onehot, atol=1e-12)
    assert finite_difference_check(objective, [logits]) < 1e-7


def test_fd_check_square():
    x = Tensor([1.7], requires_grad=True)
    assert finite_difference_check(lambda: mul(x, x), [x]) < 1e-8


def test_fd_check_rejects_non_finite():
    x = Tensor([0.0], requires_grad=True)
    from tubeseg.autodiff import log

    with pytest.raises(GradCheckError):
        finite_difference_check(lambda: log(x), [x])


def test_tensor_invariants():
    t = Tensor(np.arange(6.0).reshape(2, 3))
    assert t.data.flags["C_CONTIGUOUS"]
    assert t.data.dtype == np.float64
    assert t.size == 6
