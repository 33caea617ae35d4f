"""Minimal reverse-mode autodiff over numpy arrays.

Just enough operations for the alignment network: elementwise arithmetic
with broadcasting, matmul, constant sparse matmul, row gather, segment sum,
and the activations the model uses. Values are float64 throughout; the
gradient-check tolerances in the test suite rely on that.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

ArrayLike = Union[np.ndarray, float, int]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    # sum away leading added axes
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the computation tape."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value: ArrayLike, requires_grad: bool = False,
                 parents: Sequence["Tensor"] = (),
                 backward: Optional[Callable[[np.ndarray], None]] = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += grad

    # ---- elementwise arithmetic -------------------------------------

    def __add__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        other = as_tensor(other)
        out_val = self.value + other.value

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.value.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.value.shape))

        return Tensor(out_val, parents=(self, other), backward=backward)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        def backward(g):
            if self.requires_grad:
                self._accumulate(-g)

        return Tensor(-self.value, parents=(self,), backward=backward)

    def __sub__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        other = as_tensor(other)
        out_val = self.value * other.value

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.value, self.value.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.value, other.value.shape))

        return Tensor(out_val, parents=(self, other), backward=backward)

    __rmul__ = __mul__

    def __truediv__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        other = as_tensor(other)
        out_val = self.value / other.value

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.value, self.value.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(
                    -g * self.value / (other.value ** 2), other.value.shape))

        return Tensor(out_val, parents=(self, other), backward=backward)

    # ---- linear algebra ---------------------------------------------

    def matmul(self, other: "Tensor") -> "Tensor":
        out_val = self.value @ other.value

        def backward(g):
            if self.requires_grad:
                self._accumulate(g @ other.value.T)
            if other.requires_grad:
                other._accumulate(self.value.T @ g)

        return Tensor(out_val, parents=(self, other), backward=backward)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return self.matmul(other)

    # ---- structure ops ----------------------------------------------

    def gather(self, idx: np.ndarray) -> "Tensor":
        """Select rows; gradient scatters (with accumulation) back."""
        idx = np.asarray(idx, dtype=np.int64)
        out_val = self.value[idx]

        def backward(g):
            if self.requires_grad:
                acc = np.zeros_like(self.value)
                np.add.at(acc, idx, g)
                self._accumulate(acc)

        return Tensor(out_val, parents=(self,), backward=backward)

    def segment_sum(self, segments: np.ndarray, num_segments: int) -> "Tensor":
        """Sum rows into buckets; gradient is a gather of the bucket grads."""
        from ._kernels import segment_sum as _segment_sum
        segments = np.ascontiguousarray(segments, dtype=np.int64)
        vals = np.ascontiguousarray(self.value)
        if vals.ndim == 1:
            out_val = _segment_sum(vals[:, None], segments, num_segments)[:, 0]
        else:
            out_val = _segment_sum(vals, segments, num_segments)

        def backward(g):
            if self.requires_grad:
                self._accumulate(g[segments].reshape(self.value.shape))

        return Tensor(out_val, parents=(self,), backward=backward)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        old_shape = self.value.shape

        def backward(g):
            if self.requires_grad:
                self._accumulate(g.reshape(old_shape))

        return Tensor(self.value.reshape(shape), parents=(self,), backward=backward)

    def sum(self) -> "Tensor":
        def backward(g):
            if self.requires_grad:
                self._accumulate(np.broadcast_to(g, self.value.shape).copy())

        return Tensor(self.value.sum(), parents=(self,), backward=backward)

    def sum_axis(self, axis: int) -> "Tensor":
        out_val = self.value.sum(axis=axis)

        def backward(g):
            if self.requires_grad:
                self._accumulate(np.broadcast_to(
                    np.expand_dims(g, axis), self.value.shape).copy())

        return Tensor(out_val, parents=(self,), backward=backward)

    # ---- nonlinearities ---------------------------------------------

    def relu(self) -> "Tensor":
        mask = self.value > 0

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * mask)

        return Tensor(np.where(mask, self.value, 0.0), parents=(self,), backward=backward)

    def leaky_relu(self, slope: float = 0.2) -> "Tensor":
        mask = self.value > 0

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * np.where(mask, 1.0, slope))

        return Tensor(np.where(mask, self.value, slope * self.value),
                      parents=(self,), backward=backward)

    def sigmoid(self) -> "Tensor":
        out_val = 1.0 / (1.0 + np.exp(-self.value))

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * out_val * (1.0 - out_val))

        return Tensor(out_val, parents=(self,), backward=backward)

    def exp(self) -> "Tensor":
        out_val = np.exp(self.value)

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * out_val)

        return Tensor(out_val, parents=(self,), backward=backward)

    def abs(self) -> "Tensor":
        sign = np.sign(self.value)

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * sign)

        return Tensor(np.abs(self.value), parents=(self,), backward=backward)

    # ---- driver ------------------------------------------------------

    def backward(self) -> None:
        """Reverse-mode sweep from this (scalar) tensor."""
        if self.value.shape != ():
            raise ValueError("backward() requires a scalar loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.value)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def as_tensor(x: Union[Tensor, ArrayLike]) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    """Column-wise concatenation of two 2-d tensors."""
    na = a.value.shape[1]
    out_val = np.concatenate([a.value, b.value], axis=1)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g[:, :na])
        if b.requires_grad:
            b._accumulate(g[:, na:])

    return Tensor(out_val, parents=(a, b), backward=backward)


def spmm(matrix: sp.spmatrix, x: Tensor) -> Tensor:
    """Multiply by a constant sparse matrix: out = matrix @ x."""
    m = matrix.tocsr()
    out_val = m @ x.value

    def backward(g):
        if x.requires_grad:
            x._accumulate(m.T @ g)

    return Tensor(out_val, parents=(x,), backward=backward)


def segment_softmax(logits: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    """Softmax of a flat logit vector within each segment.

    The per-segment max is detached before exponentiation; softmax is
    shift-invariant so both the value and the gradient are unaffected.
    """
    segments = np.asarray(segments, dtype=np.int64)
    seg_max = np.full(num_segments, -np.inf)
    np.maximum.at(seg_max, segments, logits.value)
    shifted = logits - Tensor(seg_max[segments])
    expv = shifted.exp()
    denom = expv.segment_sum(segments, num_segments)
    return expv / denom.gather(segments)
