"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every differentiable quantity in the forecaster (node embedding, gate
weights, filter stacks, mappers, predictor kernel) is a few hundred to a
few hundred thousand scalars, so a plain operation tape is enough: each
op records its parent tensors and a closure mapping the upstream gradient
to parent gradients.  ``Tensor.backward()`` walks the tape once in
reverse topological order and accumulates into ``.grad``.

All data is coerced to float64.  Broadcasting follows numpy semantics;
gradients are summed back down to each parent's shape.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

Array = np.ndarray

__all__ = [
    "Tensor",
    "Parameter",
    "as_tensor",
    "concat",
    "sigmoid",
    "tanh",
    "relu",
    "leaky_relu",
    "softmax",
    "sqrt",
    "absolute",
    "zero_grads",
]


def _sum_to_shape(grad: Array, shape: tuple[int, ...]) -> Array:
    """Reduce a broadcast gradient back to the shape it was expanded from."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if keep:
        grad = grad.sum(axis=keep, keepdims=True)
    return grad


class Tensor:
    """A node in the operation tape.

    ``requires_grad`` is set for leaves that should accumulate gradients
    and propagates to every op output that depends on such a leaf.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    # Make numpy defer to the reflected operators below instead of trying
    # to coerce a Tensor into an object array.
    __array_ufunc__ = None

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: Sequence["Tensor"] = (),
        backward_fn: Callable[[Array], Sequence[Array | None]] | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Array | None = None
        self._parents = tuple(parents)
        self._backward_fn = backward_fn

    # -- graph bookkeeping -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """A constant view of the same values, cut from the tape."""
        return Tensor(self.data)

    def backward(self, grad: Array | None = None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable ``.grad``."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient requires a scalar")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)

        order = _toposort(self)
        grads: dict[int, Array] = {id(self): grad}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and node._backward_fn is None:
                node.grad = g if node.grad is None else node.grad + g
            if node._backward_fn is None:
                continue
            parent_grads = node._backward_fn(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        out_data = self.data + other.data
        a, b = self, other

        def bwd(g: Array):
            return (
                _sum_to_shape(g, a.shape) if a.requires_grad else None,
                _sum_to_shape(g, b.shape) if b.requires_grad else None,
            )

        return _make(out_data, (a, b), bwd)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        a = self
        return _make(-a.data, (a,), lambda g: (-g,))

    def __sub__(self, other) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other
        out_data = a.data * b.data

        def bwd(g: Array):
            return (
                _sum_to_shape(g * b.data, a.shape) if a.requires_grad else None,
                _sum_to_shape(g * a.data, b.shape) if b.requires_grad else None,
            )

        return _make(out_data, (a, b), bwd)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other
        out_data = a.data / b.data

        def bwd(g: Array):
            ga = g / b.data
            return (
                _sum_to_shape(ga, a.shape) if a.requires_grad else None,
                _sum_to_shape(-ga * a.data / b.data, b.shape) if b.requires_grad else None,
            )

        return _make(out_data, (a, b), bwd)

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        p = float(exponent)
        a = self
        out_data = a.data ** p

        def bwd(g: Array):
            return (g * p * a.data ** (p - 1.0),)

        return _make(out_data, (a,), bwd)

    def __matmul__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other
        out_data = a.data @ b.data

        def bwd(g: Array):
            ga = gb = None
            if a.requires_grad:
                ga = _sum_to_shape(g @ np.swapaxes(b.data, -1, -2), a.shape)
            if b.requires_grad:
                gb = _sum_to_shape(np.swapaxes(a.data, -1, -2) @ g, b.shape)
            return (ga, gb)

        return _make(out_data, (a, b), bwd)

    def __rmatmul__(self, other) -> "Tensor":
        return as_tensor(other) @ self

    # -- reductions and shape ----------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self
        out_data = a.data.sum(axis=axis, keepdims=keepdims)

        def bwd(g: Array):
            if axis is None:
                return (np.broadcast_to(g, a.shape).copy(),)
            g_exp = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(g_exp, a.shape).copy(),)

        return _make(out_data, (a,), bwd)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else _axis_count(self.shape, axis)
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def transpose(self, *axes: int) -> "Tensor":
        a = self
        perm = axes if axes else tuple(reversed(range(a.ndim)))
        inv = tuple(np.argsort(perm))
        return _make(a.data.transpose(perm), (a,), lambda g: (g.transpose(inv),))

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


class Parameter(Tensor):
    """A trainable leaf tensor."""

    __slots__ = ()

    def __init__(self, data):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data: Array, parents: Sequence[Tensor], backward_fn) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data)
    out = Tensor(data, requires_grad=True, parents=parents, backward_fn=backward_fn)
    return out


def _axis_count(shape: tuple[int, ...], axis) -> int:
    if isinstance(axis, int):
        axis = (axis,)
    count = 1
    for ax in axis:
        count *= shape[ax]
    return count


def _toposort(root: Tensor) -> list[Tensor]:
    """Reverse topological order (root first), iterative to bound recursion."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    order.reverse()
    return order


# -- elementwise nonlinearities ---------------------------------------------


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out_data = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))

    def bwd(g: Array):
        return (g * out_data * (1.0 - out_data),)

    return _make(out_data, (x,), bwd)


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)

    def bwd(g: Array):
        return (g * (1.0 - out_data * out_data),)

    return _make(out_data, (x,), bwd)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    mask = x.data > 0
    out_data = np.where(mask, x.data, slope * x.data)
    return _make(out_data, (x,), lambda g: (g * np.where(mask, 1.0, slope),))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def bwd(g: Array):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        return (out_data * (g - dot),)

    return _make(out_data, (x,), bwd)


def sqrt(x: Tensor) -> Tensor:
    out_data = np.sqrt(x.data)

    def bwd(g: Array):
        return (g * 0.5 / out_data,)

    return _make(out_data, (x,), bwd)


def absolute(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    return _make(np.abs(x.data), (x,), lambda g: (g * sign,))


def concat(tensors: Iterable[Tensor], axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in ts]
    out_data = np.concatenate([t.data for t in ts], axis=axis)
    bounds = np.cumsum(sizes)[:-1]

    def bwd(g: Array):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out_data, tuple(ts), bwd)


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
