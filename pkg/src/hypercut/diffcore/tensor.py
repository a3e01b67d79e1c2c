"""Reverse-mode automatic differentiation on numpy arrays.

A Tensor records the operations that produced it; calling ``backward()`` on a
scalar Tensor walks the tape in reverse topological order and accumulates
gradients into every tensor created with ``requires_grad=True``.

Values default to float32. Passing float64 inputs keeps the whole graph in
float64, which the finite-difference gradient checker relies on.
"""
from __future__ import annotations

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Raised when an operation receives tensors of incompatible shapes."""


def _as_array(data, dtype=None):
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    # float64 numpy inputs keep their precision (gradcheck path); everything
    # else, including python scalars, becomes float32
    if isinstance(data, (np.ndarray, np.generic)) and arr.dtype == np.float64:
        return arr
    return arr.astype(np.float32, copy=False)


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _wrap(other):
        if isinstance(other, Tensor):
            return other
        return Tensor(other)

    @classmethod
    def _from_op(cls, data, parents, backward):
        t = cls.__new__(cls)
        t.data = data
        t.grad = None
        t.requires_grad = False
        t._parents = tuple(parents)
        t._backward = backward
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        other = Tensor._wrap(other)
        out_data = self.data + other.data

        def backward(g, acc):
            acc(self, _unbroadcast(g, self.data.shape))
            acc(other, _unbroadcast(g, other.data.shape))

        return Tensor._from_op(out_data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(g, acc):
            acc(self, -g)

        return Tensor._from_op(-self.data, (self,), backward)

    def __sub__(self, other):
        return self + (-Tensor._wrap(other))

    def __rsub__(self, other):
        return Tensor._wrap(other) + (-self)

    def __mul__(self, other):
        other = Tensor._wrap(other)
        out_data = self.data * other.data

        def backward(g, acc):
            acc(self, _unbroadcast(g * other.data, self.data.shape))
            acc(other, _unbroadcast(g * self.data, other.data.shape))

        return Tensor._from_op(out_data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not a primitive; use * reciprocal")
        return self * (1.0 / other)

    def __matmul__(self, other):
        other = Tensor._wrap(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ShapeError("matmul expects 2-D tensors, got "
                             f"{self.data.shape} @ {other.data.shape}")
        if self.data.shape[1] != other.data.shape[0]:
            raise ShapeError(f"matmul shape mismatch: {self.data.shape} @ {other.data.shape}")
        out_data = self.data @ other.data

        def backward(g, acc):
            acc(self, g @ other.data.T)
            acc(other, self.data.T @ g)

        return Tensor._from_op(out_data, (self, other), backward)

    # -- reductions and shape ops ----------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g, acc):
            g = np.asarray(g)
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            acc(self, np.broadcast_to(g, self.data.shape).copy())

        return Tensor._from_op(np.asarray(out_data), (self,), backward)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            count = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = 1
            for a in axes:
                count *= self.data.shape[a]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out_data = self.data.reshape(shape)
        in_shape = self.data.shape

        def backward(g, acc):
            acc(self, g.reshape(in_shape))

        return Tensor._from_op(out_data, (self,), backward)

    def narrow(self, axis, start, length):
        """Slice `length` entries starting at `start` along `axis`."""
        idx = [slice(None)] * self.data.ndim
        idx[axis] = slice(start, start + length)
        idx = tuple(idx)
        out_data = self.data[idx]

        def backward(g, acc):
            full = np.zeros_like(self.data)
            full[idx] = g
            acc(self, full)

        return Tensor._from_op(out_data, (self,), backward)

    # -- pointwise nonlinearities ----------------------------------------------

    def leaky_relu(self, slope=0.1):
        mask = self.data > 0
        out_data = np.where(mask, self.data, slope * self.data)

        def backward(g, acc):
            acc(self, g * np.where(mask, 1.0, slope).astype(g.dtype))

        return Tensor._from_op(out_data.astype(self.data.dtype), (self,), backward)

    def softplus(self):
        # overflow-safe log(1 + e^t) = max(t, 0) + log1p(e^-|t|)
        t = self.data
        out_data = np.maximum(t, 0) + np.log1p(np.exp(-np.abs(t)))

        def backward(g, acc):
            sig = np.empty_like(t)
            pos = t >= 0
            sig[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
            e = np.exp(t[~pos])
            sig[~pos] = e / (1.0 + e)
            acc(self, g * sig.astype(g.dtype))

        return Tensor._from_op(out_data.astype(t.dtype), (self,), backward)

    def sigmoid(self):
        # two-branch form avoids overflow in exp for large |t|
        t = self.data
        s = np.empty_like(t)
        pos = t >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
        e = np.exp(t[~pos])
        s[~pos] = e / (1.0 + e)

        def backward(g, acc):
            acc(self, g * (s * (1.0 - s)))

        return Tensor._from_op(s, (self,), backward)

    def sqrt(self):
        root = np.sqrt(self.data)

        def backward(g, acc):
            acc(self, g * (0.5 / root))

        return Tensor._from_op(root, (self,), backward)

    def abs(self):
        out_data = np.abs(self.data)

        def backward(g, acc):
            acc(self, g * np.sign(self.data))

        return Tensor._from_op(out_data, (self,), backward)

    def l2_normalize(self, eps=1e-12):
        """Normalize the last axis to unit L2 norm."""
        norm = np.sqrt((self.data ** 2).sum(axis=-1, keepdims=True))
        norm = np.maximum(norm, eps)
        out_data = self.data / norm

        def backward(g, acc):
            dot = (g * out_data).sum(axis=-1, keepdims=True)
            acc(self, (g - out_data * dot) / norm)

        return Tensor._from_op(out_data, (self,), backward)

    # -- structured ops ----------------------------------------------------------

    def conv2d(self, weight, bias, stride=1, pad=1):
        """2-D convolution, NCHW input and OIHW weight."""
        weight = Tensor._wrap(weight)
        bias = Tensor._wrap(bias)
        x, w = self.data, weight.data
        if x.ndim != 4 or w.ndim != 4:
            raise ShapeError(f"conv2d expects NCHW/OIHW, got {x.shape} and {w.shape}")
        if x.shape[1] != w.shape[1]:
            raise ShapeError(f"conv2d channel mismatch: input {x.shape} vs weight {w.shape}")
        out_data = kernels.conv2d_forward(x, w, bias.data, stride, pad)

        def backward(g, acc):
            gx, gw, gb = kernels.conv2d_backward(np.ascontiguousarray(g), x, w, stride, pad)
            acc(self, gx)
            acc(weight, gw)
            acc(bias, gb)

        return Tensor._from_op(out_data, (self, weight, bias), backward)

    def avg_pool_global(self):
        """Mean over the spatial axes of an NCHW tensor -> (N, C)."""
        if self.data.ndim != 4:
            raise ShapeError(f"avg_pool_global expects NCHW, got {self.data.shape}")
        return self.mean(axis=(2, 3))

    def upsample2x(self):
        """Nearest-neighbour 2x spatial upsampling of an NCHW tensor."""
        if self.data.ndim != 4:
            raise ShapeError(f"upsample2x expects NCHW, got {self.data.shape}")
        out_data = self.data.repeat(2, axis=2).repeat(2, axis=3)
        n, c, h, w = self.data.shape

        def backward(g, acc):
            acc(self, g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)))

        return Tensor._from_op(out_data, (self,), backward)

    # -- backward pass ------------------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ShapeError(f"backward() requires a scalar loss, got shape {self.data.shape}")

        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))

        grads = {id(self): np.ones_like(self.data)}

        def acc(node, g):
            key = id(node)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = g

        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                g_leaf = np.asarray(g, dtype=node.data.dtype).reshape(node.data.shape)
                node.grad = g_leaf if node.grad is None else node.grad + g_leaf
            if node._backward is not None:
                node._backward(np.asarray(g).reshape(node.data.shape), acc)


def concat(tensors, axis=0):
    tensors = [Tensor._wrap(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def backward(g, acc):
        offset = 0
        for t, s in zip(tensors, sizes):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(offset, offset + s)
            acc(t, g[tuple(idx)])
            offset += s

    return Tensor._from_op(out_data, tensors, backward)
