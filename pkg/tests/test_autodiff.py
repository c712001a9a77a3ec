"""Reverse-mode tape checked against central finite differences."""

import numpy as np
import pytest

from trafficpinn.autodiff import Tensor, relu, sigmoid, softplus, square, tanh, zero_grads


def fd_grad(f, x, h=1e-6):
    """Elementwise central difference of a scalar function of one array."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def check_against_fd(build, x0, rtol=1e-6):
    t = Tensor(x0.copy(), requires_grad=True)
    loss = build(t)
    loss.backward()

    def numeric(x):
        return float(build(Tensor(x)).data)

    expected = fd_grad(numeric, x0)
    scale = max(1.0, float(np.max(np.abs(expected))))
    assert np.max(np.abs(t.grad - expected)) / scale < rtol


def test_arithmetic_ops():
    rng = np.random.default_rng(0)
    x0 = rng.normal(size=(3, 4))
    check_against_fd(lambda t: (t + 2.0).sum(), x0)
    check_against_fd(lambda t: (2.0 - t).sum(), x0)
    check_against_fd(lambda t: (t * t).sum(), x0)
    check_against_fd(lambda t: (t / 3.0).sum(), x0)
    check_against_fd(lambda t: (3.0 / (t * t + 1.0)).sum(), x0)
    check_against_fd(lambda t: (t ** 3).mean(), x0)
    check_against_fd(lambda t: (-t).sum(), x0)


def test_activations():
    rng = np.random.default_rng(1)
    x0 = rng.normal(size=(5,))
    check_against_fd(lambda t: tanh(t).sum(), x0)
    check_against_fd(lambda t: sigmoid(t).sum(), x0)
    check_against_fd(lambda t: softplus(t).sum(), x0)
    # keep clear of the relu kink
    x0 = np.array([-2.0, -0.5, 0.5, 2.0])
    check_against_fd(lambda t: relu(t).sum(), x0)


def test_matmul_grads():
    rng = np.random.default_rng(2)
    a0 = rng.normal(size=(3, 4))
    b0 = rng.normal(size=(4, 2))
    b = Tensor(b0, requires_grad=True)
    check_against_fd(lambda t: (t @ b).sum(), a0)
    a = Tensor(a0, requires_grad=True)
    check_against_fd(lambda t: square(a @ t).sum(), b0)


def test_broadcasting_unbroadcast():
    col = Tensor(np.ones((3, 1)), requires_grad=True)
    row = Tensor(np.ones((1, 4)), requires_grad=True)
    (col * row).sum().backward()
    # gradients fold back onto the operand shapes
    assert col.grad.shape == (3, 1)
    assert row.grad.shape == (1, 4)
    np.testing.assert_allclose(col.grad, 4.0)
    np.testing.assert_allclose(row.grad, 3.0)
    bias = Tensor(np.zeros(4), requires_grad=True)
    (Tensor(np.ones((5, 4))) + bias).sum().backward()
    np.testing.assert_allclose(bias.grad, 5.0)


def test_shared_subexpression_accumulates():
    # diamond graph: y = a*b + a*c must add both paths into a.grad
    a = Tensor(np.array(2.0), requires_grad=True)
    b = Tensor(np.array(3.0), requires_grad=True)
    c = Tensor(np.array(5.0), requires_grad=True)
    (a * b + a * c).backward()
    assert float(a.grad) == 8.0
    assert float(b.grad) == 2.0
    assert float(c.grad) == 2.0


def test_deep_chain_backward():
    # iterative traversal handles graphs far beyond the recursion limit
    t = Tensor(np.array(0.5), requires_grad=True)
    y = t
    for _ in range(5000):
        y = y + 0.0
    y.backward()
    assert float(t.grad) == 1.0


def test_backward_requires_scalar():
    t = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        (t * 2.0).backward()


def test_constant_tensors_stay_out_of_graph():
    a = Tensor(np.array(2.0), requires_grad=True)
    k = Tensor(np.array(4.0))
    (a * k).backward()
    assert float(a.grad) == 4.0
    assert k.grad is None


def test_zero_grads_resets():
    a = Tensor(np.array(2.0), requires_grad=True)
    (a * a).backward()
    assert float(a.grad) == 4.0
    zero_grads([a])
    (a * 3.0).backward()
    assert float(a.grad) == 3.0


def test_pow_rejects_tensor_exponent():
    a = Tensor(np.array(2.0), requires_grad=True)
    with pytest.raises(TypeError):
        a ** a
