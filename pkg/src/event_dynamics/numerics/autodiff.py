"""Reverse-mode automatic differentiation on a dynamic tape.

Every primitive here is dual-mode: called with plain floats or arrays it
returns a numpy result, and called with at least one :class:`Node` it records
the operation on that node's tape and returns a new :class:`Node`. Model code
is therefore written once and runs either as a pure forward pass or as a
differentiable one.

Example:
    >>> tape = Tape()
    >>> x = tape.parameter("x", 3.0)
    >>> loss = square(x)
    >>> tape_grad(loss, tape)["x"]
    array(6.)
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from typing import Any, Union

import numpy as np
import numpy.typing as npt
from scipy import special

from event_dynamics.core.exceptions import DomainError, ShapeError

Array = npt.NDArray[np.float64]
Tensor = Union["Node", Array, float]
VectorJacobian = Callable[[Array], tuple[Array | None, ...]]


class Node:
    """A value recorded on a tape, together with how to pull gradients back."""

    __slots__ = ("tape", "index", "value", "op", "inputs", "vjp", "name")

    # Makes ``ndarray <op> Node`` defer to the Node's reflected operator.
    __array_ufunc__ = None

    def __init__(
        self,
        tape: Tape,
        index: int,
        value: Array,
        op: str,
        inputs: tuple[object, ...],
        vjp: VectorJacobian | None,
        name: str | None = None,
    ) -> None:
        self.tape = tape
        self.index = index
        self.value = value
        self.op = op
        self.inputs = inputs
        self.vjp = vjp
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return int(self.value.size)

    @property
    def T(self) -> Node:  # noqa: N802
        return transpose(self)  # type: ignore[return-value]

    def __add__(self, other: Tensor) -> Node:
        return add(self, other)  # type: ignore[return-value]

    def __radd__(self, other: Tensor) -> Node:
        return add(other, self)  # type: ignore[return-value]

    def __sub__(self, other: Tensor) -> Node:
        return sub(self, other)  # type: ignore[return-value]

    def __rsub__(self, other: Tensor) -> Node:
        return sub(other, self)  # type: ignore[return-value]

    def __mul__(self, other: Tensor) -> Node:
        return mul(self, other)  # type: ignore[return-value]

    def __rmul__(self, other: Tensor) -> Node:
        return mul(other, self)  # type: ignore[return-value]

    def __truediv__(self, other: Tensor) -> Node:
        return div(self, other)  # type: ignore[return-value]

    def __rtruediv__(self, other: Tensor) -> Node:
        return div(other, self)  # type: ignore[return-value]

    def __neg__(self) -> Node:
        return neg(self)  # type: ignore[return-value]

    def __matmul__(self, other: Tensor) -> Node:
        return matmul(self, other)  # type: ignore[return-value]

    def __rmatmul__(self, other: Tensor) -> Node:
        return matmul(other, self)  # type: ignore[return-value]

    def __getitem__(self, index: Any) -> Node:
        return getitem(self, index)  # type: ignore[return-value]

    def __repr__(self) -> str:
        label = f" '{self.name}'" if self.name else ""
        return f"Node#{self.index}{label}({self.op}, shape={self.shape})"


class Tape:
    """Append-only record of operations in topological order."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def parameter(self, name: str, value: Tensor) -> Node:
        """Register a named leaf whose gradient :func:`tape_grad` reports."""
        return self._append(np.array(value, dtype=np.float64), "leaf", (), None, name)

    def record(
        self,
        op: str,
        inputs: tuple[object, ...],
        value: Array,
        vjp: VectorJacobian,
    ) -> Node:
        return self._append(value, op, inputs, vjp, None)

    def _append(
        self,
        value: Array,
        op: str,
        inputs: tuple[object, ...],
        vjp: VectorJacobian | None,
        name: str | None,
    ) -> Node:
        node = Node(self, len(self.nodes), value, op, inputs, vjp, name)
        self.nodes.append(node)
        return node


def tape_grad(loss: Node, tape: Tape) -> dict[str, Array]:
    """Gradients of a scalar ``loss`` with respect to every named leaf.

    Raises:
        ShapeError: If ``loss`` is not scalar-valued or belongs to another tape.
    """
    if loss.tape is not tape:
        raise ShapeError("Loss node was not recorded on this tape")
    if loss.size != 1:
        raise ShapeError(
            f"Loss must be scalar-valued, got shape {loss.shape}",
            details={"shape": loss.shape},
        )

    grads: list[Array | None] = [None] * len(tape.nodes)
    grads[loss.index] = np.ones_like(loss.value)
    for node in reversed(tape.nodes[: loss.index + 1]):
        upstream = grads[node.index]
        if upstream is None or node.vjp is None:
            continue
        for source, contribution in zip(node.inputs, node.vjp(upstream), strict=True):
            if not isinstance(source, Node) or contribution is None:
                continue
            current = grads[source.index]
            grads[source.index] = (
                contribution if current is None else current + contribution
            )

    result: dict[str, Array] = {}
    for node in tape.nodes:
        if node.name is not None:
            grad = grads[node.index]
            result[node.name] = np.zeros_like(node.value) if grad is None else grad
    return result


def value_of(x: Tensor) -> Array:
    """Numeric value of a node or constant."""
    if isinstance(x, Node):
        return x.value
    return np.asarray(x, dtype=np.float64)


def is_node(x: object) -> bool:
    return isinstance(x, Node)


def _tape_of(*xs: object) -> Tape | None:
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    return None


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _emit(
    op: str, inputs: tuple[object, ...], value: Array, vjp: VectorJacobian
) -> Tensor:
    tape = _tape_of(*inputs)
    if tape is None:
        return value
    return tape.record(op, inputs, value, vjp)


def _check_finite(op: str, value: Array) -> Array:
    if not np.all(np.isfinite(value)):
        raise DomainError(
            f"Primitive '{op}' produced a non-finite value", details={"op": op}
        )
    return value


def _binary_shapes(a: Tensor, b: Tensor) -> tuple[Array, Array]:
    va, vb = value_of(a), value_of(b)
    try:
        np.broadcast_shapes(va.shape, vb.shape)
    except ValueError as e:
        raise ShapeError(
            f"Cannot broadcast shapes {va.shape} and {vb.shape}",
            details={"left": va.shape, "right": vb.shape},
        ) from e
    return va, vb


# Element-wise arithmetic ----------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    va, vb = _binary_shapes(a, b)
    out = va + vb
    return _emit(
        "add",
        (a, b),
        out,
        lambda g: (_unbroadcast(g, va.shape), _unbroadcast(g, vb.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    va, vb = _binary_shapes(a, b)
    out = va - vb
    return _emit(
        "sub",
        (a, b),
        out,
        lambda g: (_unbroadcast(g, va.shape), _unbroadcast(-g, vb.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    va, vb = _binary_shapes(a, b)
    out = va * vb
    return _emit(
        "mul",
        (a, b),
        out,
        lambda g: (_unbroadcast(g * vb, va.shape), _unbroadcast(g * va, vb.shape)),
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    va, vb = _binary_shapes(a, b)
    if np.any(vb == 0.0):
        raise DomainError("Division by zero", details={"op": "div"})
    out = va / vb
    return _emit(
        "div",
        (a, b),
        out,
        lambda g: (
            _unbroadcast(g / vb, va.shape),
            _unbroadcast(-g * out / vb, vb.shape),
        ),
    )


def neg(a: Tensor) -> Tensor:
    return _emit("neg", (a,), -value_of(a), lambda g: (-g,))


def square(a: Tensor) -> Tensor:
    va = value_of(a)
    return _emit("square", (a,), va * va, lambda g: (2.0 * va * g,))


def power(a: Tensor, exponent: float) -> Tensor:
    va = value_of(a)
    if exponent < 1 and np.any(va <= 0.0):
        raise DomainError(
            f"power({exponent}) requires positive inputs", details={"op": "power"}
        )
    out = va**exponent
    return _emit(
        "power", (a,), out, lambda g: (exponent * va ** (exponent - 1.0) * g,)
    )


def sqrt(a: Tensor) -> Tensor:
    va = value_of(a)
    if np.any(va <= 0.0):
        raise DomainError("sqrt requires positive inputs", details={"op": "sqrt"})
    out = np.sqrt(va)
    return _emit("sqrt", (a,), out, lambda g: (g / (2.0 * out),))


def abs_(a: Tensor) -> Tensor:
    va = value_of(a)
    return _emit("abs", (a,), np.abs(va), lambda g: (np.sign(va) * g,))


# Transcendental functions ---------------------------------------------------


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = _check_finite("exp", np.exp(value_of(a)))
    return _emit("exp", (a,), out, lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    va = value_of(a)
    if np.any(va <= 0.0):
        raise DomainError("log requires positive inputs", details={"op": "log"})
    return _emit("log", (a,), np.log(va), lambda g: (g / va,))


def sin(a: Tensor) -> Tensor:
    va = value_of(a)
    return _emit("sin", (a,), np.sin(va), lambda g: (g * np.cos(va),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(value_of(a))
    return _emit("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))


def atanh(a: Tensor) -> Tensor:
    va = value_of(a)
    if np.any(np.abs(va) >= 1.0):
        raise DomainError("atanh requires |x| < 1", details={"op": "atanh"})
    return _emit("atanh", (a,), np.arctanh(va), lambda g: (g / (1.0 - va * va),))


def sigmoid(a: Tensor) -> Tensor:
    out = special.expit(value_of(a))
    return _emit("sigmoid", (a,), out, lambda g: (g * out * (1.0 - out),))


def softplus(a: Tensor) -> Tensor:
    va = value_of(a)
    out = np.logaddexp(0.0, va)
    return _emit("softplus", (a,), out, lambda g: (g * special.expit(va),))


def normal_cdf(a: Tensor) -> Tensor:
    va = value_of(a)
    out = special.ndtr(va)
    density = np.exp(-0.5 * va * va) / np.sqrt(2.0 * np.pi)
    return _emit("normal_cdf", (a,), out, lambda g: (g * density,))


def clip(a: Tensor, lower: float, upper: float) -> Tensor:
    """Clamp to ``[lower, upper]``; the gradient is zero where clamped."""
    va = value_of(a)
    inside = (va > lower) & (va < upper)
    return _emit("clip", (a,), np.clip(va, lower, upper), lambda g: (g * inside,))


# Reductions and normalizers -------------------------------------------------


def sum_(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    va = value_of(a)
    out = np.asarray(va.sum(axis=axis, keepdims=keepdims), dtype=np.float64)

    def vjp(g: Array) -> tuple[Array]:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, va.shape).copy(),)

    return _emit("sum", (a,), out, vjp)


def mean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    va = value_of(a)
    count = va.size if axis is None else va.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    out = special.softmax(value_of(a), axis=axis)

    def vjp(g: Array) -> tuple[Array]:
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return _emit("softmax", (a,), out, vjp)


def logsumexp(a: Tensor, axis: int = -1, keepdims: bool = True) -> Tensor:
    va = value_of(a)
    out = np.asarray(special.logsumexp(va, axis=axis, keepdims=keepdims))
    weights = special.softmax(va, axis=axis)

    def vjp(g: Array) -> tuple[Array]:
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * weights,)

    return _emit("logsumexp", (a,), out, vjp)


# Linear algebra and structure -----------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix-matrix or matrix-vector product for operands of rank <= 2."""
    va, vb = value_of(a), value_of(b)
    if va.ndim == 0 or vb.ndim == 0 or va.ndim > 2 or vb.ndim > 2:
        raise ShapeError(
            f"matmul expects rank-1 or rank-2 operands, got {va.shape} @ {vb.shape}"
        )
    if va.shape[-1] != vb.shape[0]:
        raise ShapeError(
            f"matmul inner dimensions differ: {va.shape} @ {vb.shape}",
            details={"left": va.shape, "right": vb.shape},
        )
    out = np.asarray(va @ vb, dtype=np.float64)

    def vjp(g: Array) -> tuple[Array, Array]:
        if va.ndim == 2 and vb.ndim == 2:
            return g @ vb.T, va.T @ g
        if va.ndim == 2:  # matrix @ vector
            return np.outer(g, vb), va.T @ g
        if vb.ndim == 2:  # vector @ matrix
            return vb @ g, np.outer(va, g)
        return g * vb, g * va

    return _emit("matmul", (a, b), out, vjp)


matvec = matmul


def transpose(a: Tensor) -> Tensor:
    return _emit("transpose", (a,), value_of(a).T, lambda g: (g.T,))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    va = value_of(a)
    return _emit("reshape", (a,), va.reshape(shape), lambda g: (g.reshape(va.shape),))


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    values = [value_of(p) for p in parts]
    try:
        out = np.concatenate(values, axis=axis)
    except ValueError as e:
        shapes = [v.shape for v in values]
        raise ShapeError(f"Cannot concatenate shapes {shapes}") from e
    bounds = np.cumsum([v.shape[axis] for v in values])[:-1]

    def vjp(g: Array) -> tuple[Array, ...]:
        return tuple(np.split(g, bounds, axis=axis))

    return _emit("concat", tuple(parts), out, vjp)


def getitem(a: Tensor, index: Any) -> Tensor:
    va = value_of(a)
    out = np.array(va[index], dtype=np.float64)

    def vjp(g: Array) -> tuple[Array]:
        grad = np.zeros_like(va)
        np.add.at(grad, index, g)
        return (grad,)

    return _emit("getitem", (a,), out, vjp)


def gather(a: Tensor, indices: npt.NDArray[np.int64]) -> Tensor:
    """Row-wise gather: ``out[r, k] = a[r, indices[r, k]]`` for 2-D ``a``."""
    va = value_of(a)
    if va.ndim != 2 or indices.ndim != 2 or indices.shape[0] != va.shape[0]:
        raise ShapeError(
            f"gather expects (R, n) values and (R, k) indices, got "
            f"{va.shape} and {indices.shape}"
        )
    out = np.take_along_axis(va, indices, axis=1)
    rows = np.broadcast_to(np.arange(va.shape[0])[:, None], indices.shape)

    def vjp(g: Array) -> tuple[Array]:
        grad = np.zeros_like(va)
        np.add.at(grad, (rows, indices), g)
        return (grad,)

    return _emit("gather", (a,), out, vjp)
