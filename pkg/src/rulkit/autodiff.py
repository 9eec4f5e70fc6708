"""Minimal dense-tensor engine with reverse-mode gradient propagation.

Everything is float64.  A Tensor records the primitive that produced it;
calling ``backward`` on a scalar replays the tape in reverse topological
order and accumulates gradients into every leaf with ``requires_grad``.
"""

from __future__ import annotations

import numpy as np

from .errors import NonScalarLoss, ShapeMismatch

NEG_INF = -1e9  # additive mask value; exp underflows to exactly 0.0


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (reverses numpy broadcasting)."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev", "name")

    def __init__(self, data, requires_grad=False, _prev=(), name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._prev = _prev
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # ------------------------------------------------------------------
    # primitives
    # ------------------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data + other.data,
                     self.requires_grad or other.requires_grad,
                     (self, other))

        def _backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))
        out._backward = _backward
        return out

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data - other.data,
                     self.requires_grad or other.requires_grad,
                     (self, other))

        def _backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(-g, other.data.shape))
        out._backward = _backward
        return out

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data * other.data,
                     self.requires_grad or other.requires_grad,
                     (self, other))

        def _backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))
        out._backward = _backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data / other.data,
                     self.requires_grad or other.requires_grad,
                     (self, other))

        def _backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(-g * self.data / other.data ** 2,
                                               other.data.shape))
        out._backward = _backward
        return out

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __neg__(self):
        return self * -1.0

    def matmul(self, other):
        other = as_tensor(other)
        if self.data.ndim < 2 or other.data.ndim < 2:
            raise ShapeMismatch(
                f"matmul needs >=2-D operands, got {self.data.shape} and {other.data.shape}")
        if self.data.shape[-1] != other.data.shape[-2]:
            raise ShapeMismatch(
                f"matmul inner dims differ: {self.data.shape} vs {other.data.shape}")
        out = Tensor(np.matmul(self.data, other.data),
                     self.requires_grad or other.requires_grad,
                     (self, other))

        def _backward(g):
            if self.requires_grad:
                ga = np.matmul(g, np.swapaxes(other.data, -1, -2))
                self._accumulate(_unbroadcast(ga, self.data.shape))
            if other.requires_grad:
                gb = np.matmul(np.swapaxes(self.data, -1, -2), g)
                other._accumulate(_unbroadcast(gb, other.data.shape))
        out._backward = _backward
        return out

    __matmul__ = matmul

    def exp(self):
        out = Tensor(np.exp(self.data), self.requires_grad, (self,))

        def _backward(g):
            if self.requires_grad:
                self._accumulate(g * out.data)
        out._backward = _backward
        return out

    def tanh(self):
        out = Tensor(np.tanh(self.data), self.requires_grad, (self,))

        def _backward(g):
            if self.requires_grad:
                self._accumulate(g * (1.0 - out.data ** 2))
        out._backward = _backward
        return out

    def relu(self):
        out = Tensor(np.maximum(self.data, 0.0), self.requires_grad, (self,))

        def _backward(g):
            if self.requires_grad:
                self._accumulate(g * (self.data > 0.0))
        out._backward = _backward
        return out

    def sqrt(self):
        out = Tensor(np.sqrt(self.data), self.requires_grad, (self,))

        def _backward(g):
            if self.requires_grad:
                self._accumulate(g * 0.5 / out.data)
        out._backward = _backward
        return out

    def transpose(self, axes):
        axes = tuple(axes)
        out = Tensor(np.transpose(self.data, axes), self.requires_grad, (self,))
        inv = tuple(np.argsort(axes))

        def _backward(g):
            if self.requires_grad:
                self._accumulate(np.transpose(g, inv))
        out._backward = _backward
        return out

    def transpose_last(self):
        """Swap the last two axes."""
        axes = list(range(self.data.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
        return self.transpose(axes)

    def reshape(self, shape):
        out = Tensor(self.data.reshape(shape), self.requires_grad, (self,))
        orig = self.data.shape

        def _backward(g):
            if self.requires_grad:
                self._accumulate(g.reshape(orig))
        out._backward = _backward
        return out

    def __getitem__(self, idx):
        out = Tensor(self.data[idx], self.requires_grad, (self,))

        def _backward(g):
            if self.requires_grad:
                buf = np.zeros_like(self.data)
                np.add.at(buf, idx, g)
                self._accumulate(buf)
        out._backward = _backward
        return out

    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims),
                     self.requires_grad, (self,))

        def _backward(g):
            if self.requires_grad:
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(g, self.data.shape).copy())
        out._backward = _backward
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def var(self, axis=None, keepdims=False):
        """Population (1/N) variance along `axis`."""
        mu = self.mean(axis=axis, keepdims=True)
        d = self - mu
        return (d * d).mean(axis=axis, keepdims=keepdims)

    def softmax(self, additive_mask=None):
        """Softmax over the last axis, optionally after adding a constant mask."""
        z = self.data
        if additive_mask is not None:
            z = z + np.asarray(additive_mask, dtype=np.float64)
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=-1, keepdims=True)
        out = Tensor(y, self.requires_grad, (self,))

        def _backward(g):
            if self.requires_grad:
                dot = (g * y).sum(axis=-1, keepdims=True)
                self._accumulate(y * (g - dot))
        out._backward = _backward
        return out

    def dropout(self, rate, train, rng):
        """Inverted dropout: scale survivors by 1/(1-rate) at train time."""
        if not train or rate == 0.0:
            return self
        keep = (rng.random(self.data.shape) >= rate) / (1.0 - rate)
        return self * keep

    # ------------------------------------------------------------------
    # backward pass
    # ------------------------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise NonScalarLoss(f"loss has shape {self.data.shape}, expected scalar")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._prev:
                if id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._prev:
                    node.grad = None  # intermediates don't retain gradients


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors, axis=-1):
    """Concatenate along `axis` (used for multi-head recombination)."""
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                 any(t.requires_grad for t in tensors), tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def _backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece)
    out._backward = _backward
    return out


def linear(x, w, b=None):
    """x @ w + b with b broadcast over leading axes."""
    y = as_tensor(x).matmul(w)
    if b is not None:
        y = y + b
    return y


def finite_difference_check(f, params, step=1e-6):
    """Max relative error between analytic grads of f() and central differences.

    `f` must be a deterministic closure over `params` returning a scalar Tensor.
    """
    for p in params:
        p.grad = None
    loss = f()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.ravel()
        for i in range(flat.size):
            orig = flat[i]
            h = step * max(1.0, abs(orig))
            flat[i] = orig + h
            hi = float(f().data)
            flat[i] = orig - h
            lo = float(f().data)
            flat[i] = orig
            num = (hi - lo) / (2.0 * h)
            ana = a.ravel()[i]
            rel = abs(ana - num) / max(1e-8, abs(ana) + abs(num))
            worst = max(worst, rel)
    return worst
