"""Minimal reverse-mode automatic differentiation over numpy arrays.

Provides exactly the machinery the estimator needs: elementwise arithmetic
with broadcasting, matrix products, tanh/sigmoid/softplus/relu, squares, and
full reductions, all in float64.  Gradients flow to every tensor created with
``requires_grad=True``; ``backward`` walks the recorded graph once in reverse
topological order.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Array node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjps")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjps = ()

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor({self.data!r}, requires_grad={self.requires_grad})"

    # graph construction -------------------------------------------------

    @staticmethod
    def _make(data, parents, vjps):
        out = Tensor(data)
        tracked = tuple((p, v) for p, v in zip(parents, vjps) if p.requires_grad)
        if tracked:
            out.requires_grad = True
            out._parents = tuple(p for p, _ in tracked)
            out._vjps = tuple(v for _, v in tracked)
        return out

    @staticmethod
    def _lift(value):
        return value if isinstance(value, Tensor) else Tensor(value)

    # arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = self._lift(other)
        return Tensor._make(
            self.data + other.data,
            (self, other),
            (
                lambda g: _unbroadcast(g, self.data.shape),
                lambda g: _unbroadcast(g, other.data.shape),
            ),
        )

    __radd__ = __add__

    def __neg__(self):
        return Tensor._make(-self.data, (self,), (lambda g: -g,))

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        other = self._lift(other)
        return Tensor._make(
            self.data * other.data,
            (self, other),
            (
                lambda g: _unbroadcast(g * other.data, self.data.shape),
                lambda g: _unbroadcast(g * self.data, other.data.shape),
            ),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        return Tensor._make(
            self.data / other.data,
            (self, other),
            (
                lambda g: _unbroadcast(g / other.data, self.data.shape),
                lambda g: _unbroadcast(-g * self.data / other.data**2, other.data.shape),
            ),
        )

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        return Tensor._make(
            self.data**exponent,
            (self,),
            (lambda g: g * exponent * self.data ** (exponent - 1),),
        )

    def __matmul__(self, other):
        other = self._lift(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ValueError("matmul expects 2-d operands")
        return Tensor._make(
            self.data @ other.data,
            (self, other),
            (
                lambda g: g @ other.data.T,
                lambda g: self.data.T @ g,
            ),
        )

    # reductions ---------------------------------------------------------

    def sum(self):
        return Tensor._make(
            self.data.sum(),
            (self,),
            (lambda g: np.broadcast_to(g, self.data.shape).copy(),),
        )

    def mean(self):
        n = self.data.size
        return self.sum() * (1.0 / n)

    # backward pass ------------------------------------------------------

    def backward(self):
        """Accumulate gradients of this scalar into every reachable leaf."""
        if self.data.size != 1:
            raise ValueError("backward requires a scalar root")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node.grad is None:
                continue
            for parent, vjp in zip(node._parents, node._vjps):
                contribution = vjp(node.grad)
                if parent.grad is None:
                    parent.grad = np.array(contribution, dtype=np.float64, copy=True)
                else:
                    parent.grad = parent.grad + contribution


def tanh(t):
    t = Tensor._lift(t)
    out = np.tanh(t.data)
    return Tensor._make(out, (t,), (lambda g: g * (1.0 - out**2),))


def sigmoid(t):
    t = Tensor._lift(t)
    out = 1.0 / (1.0 + np.exp(-np.clip(t.data, -500.0, 500.0)))
    return Tensor._make(out, (t,), (lambda g: g * out * (1.0 - out),))


def softplus(t):
    """``log(1 + exp(x))``, computed stably for large inputs."""
    t = Tensor._lift(t)
    out = np.logaddexp(0.0, t.data)
    sig = 1.0 / (1.0 + np.exp(-np.clip(t.data, -500.0, 500.0)))
    return Tensor._make(out, (t,), (lambda g: g * sig,))


def relu(t):
    t = Tensor._lift(t)
    mask = t.data > 0.0
    return Tensor._make(np.where(mask, t.data, 0.0), (t,), (lambda g: g * mask,))


def square(t):
    t = Tensor._lift(t)
    return t * t


def zero_grads(tensors):
    for t in tensors:
        t.grad = None
