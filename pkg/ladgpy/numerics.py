# -*- coding: utf-8 -*-

"""numerics.py
Desc: Dense 2-D float64 matrices with a reverse-mode differentiation tape.

Every value is a `Node` wrapping a 2-D `numpy.ndarray`. Operations build the
tape as they run; `backward` walks it once from a 1x1 output. The tape is
rebuilt on every training step, so nothing here caches across calls.
"""

import logging
from typing import Callable, Iterable, Sequence

import numpy as np

from .config import SOLVE_MAX_CONDITION
from .errors import DegenerateInputError, NumericalDomainError, ShapeError

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


def as_matrix(value) -> np.ndarray:
    """Convert a scalar or 2-D array-like into a float64 matrix

    Args:
        value: Scalar, nested list or ndarray

    Raises:
        ShapeError: Value is not a scalar or 2-D, or has an empty dimension
        NumericalDomainError: Value holds NaN or Inf

    Returns:
        np.ndarray: 2-D float64 array
    """
    array = np.asarray(value, dtype=np.float64)
    if array.ndim == 0:
        array = array.reshape(1, 1)
    if array.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {array.shape}")
    if array.shape[0] == 0 or array.shape[1] == 0:
        raise ShapeError(f"matrix dimensions must be positive: {array.shape}")
    if not np.isfinite(array).all():
        raise NumericalDomainError("matrix holds non-finite entries")
    return array


class Node:
    """A matrix value on the differentiation tape

    Leaves are created with `parameter` (trainable) or `constant`; every
    operation returns a new Node whose parents are its inputs.
    """

    def __init__(
        self,
        value,
        parents: tuple["Node", ...] = (),
        backward_fn: BackwardFn | None = None,
        requires_grad: bool = False,
        name: str | None = None,
    ) -> None:
        self.value: np.ndarray = as_matrix(value)
        self.grad: np.ndarray = np.zeros_like(self.value)
        self.parents: tuple[Node, ...] = parents
        self.backward_fn: BackwardFn | None = backward_fn
        self.requires_grad: bool = requires_grad
        self.name: str | None = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape  # type: ignore[return-value]

    @property
    def is_leaf(self) -> bool:
        return len(self.parents) == 0

    @property
    def T(self) -> "Node":
        return transpose(self)

    def item(self) -> float:
        """Value of a 1x1 node as a Python float"""
        if self.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 node, got {self.shape}")
        return float(self.value[0, 0])

    def __add__(self, other) -> "Node":
        return add(self, other)

    def __radd__(self, other) -> "Node":
        return add(other, self)

    def __sub__(self, other) -> "Node":
        return sub(self, other)

    def __rsub__(self, other) -> "Node":
        return sub(other, self)

    def __mul__(self, other) -> "Node":
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other) -> "Node":
        return self.__mul__(other)

    def __truediv__(self, other) -> "Node":
        if not isinstance(other, (int, float)):
            raise TypeError("division is only defined by a Python scalar")
        return scale(self, 1.0 / other)

    def __neg__(self) -> "Node":
        return scale(self, -1.0)

    def __matmul__(self, other) -> "Node":
        return matmul(self, other)

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return (
            f"Node{label}(shape={self.shape}, "
            + f"requires_grad={self.requires_grad})"
        )


def parameter(value, name: str | None = None) -> Node:
    """Trainable leaf"""
    return Node(value, requires_grad=True, name=name)


def constant(value, name: str | None = None) -> Node:
    """Leaf that never receives a gradient"""
    return Node(value, requires_grad=False, name=name)


def to_node(value) -> Node:
    return value if isinstance(value, Node) else constant(value)


def _record(
    value: np.ndarray, parents: Iterable[Node], backward_fn: BackwardFn
) -> Node:
    parents = tuple(parents)
    if any(parent.requires_grad for parent in parents):
        return Node(value, parents, backward_fn, requires_grad=True)
    return Node(value)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum an adjoint back down to a broadcast operand's shape"""
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Node, b: Node, op: str) -> None:
    for size_a, size_b in zip(a.shape, b.shape):
        if size_a != size_b and size_a != 1 and size_b != 1:
            raise ShapeError(
                f"{op}: shapes {a.shape} and {b.shape} do not broadcast"
            )


"""Elementwise arithmetic
"""


def add(a, b) -> Node:
    a, b = to_node(a), to_node(b)
    _check_broadcast(a, b, "add")
    return _record(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Node:
    a, b = to_node(a), to_node(b)
    _check_broadcast(a, b, "sub")
    return _record(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Node:
    a, b = to_node(a), to_node(b)
    _check_broadcast(a, b, "mul")
    return _record(
        a.value * b.value,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.value, a.shape),
            _unbroadcast(g * a.value, b.shape),
        ),
    )


def scale(a, factor: float) -> Node:
    a = to_node(a)
    factor = float(factor)
    return _record(a.value * factor, (a,), lambda g: (g * factor,))


def exp(a) -> Node:
    a = to_node(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.value)
    if not np.isfinite(out).all():
        raise NumericalDomainError("exp overflowed")
    return _record(out, (a,), lambda g: (g * out,))


def log(a) -> Node:
    a = to_node(a)
    if (a.value <= 0.0).any():
        raise NumericalDomainError("log of a non-positive entry")
    return _record(np.log(a.value), (a,), lambda g: (g / a.value,))


def tanh(a) -> Node:
    a = to_node(a)
    out = np.tanh(a.value)
    return _record(out, (a,), lambda g: (g * (1.0 - out * out),))


def logcosh(a) -> Node:
    """log(cosh(x)) without overflow; derivative is tanh(x)"""
    a = to_node(a)
    x = np.abs(a.value)
    out = x + np.log1p(np.exp(-2.0 * x)) - np.log(2.0)
    return _record(out, (a,), lambda g: (g * np.tanh(a.value),))


def relu(a) -> Node:
    a = to_node(a)
    active = a.value > 0.0
    return _record(a.value * active, (a,), lambda g: (g * active,))


def power(a, exponent: float) -> Node:
    a = to_node(a)
    if not float(exponent).is_integer() and (a.value <= 0.0).any():
        raise NumericalDomainError(
            f"fractional power {exponent} of a non-positive entry"
        )
    out = a.value**exponent
    return _record(
        out,
        (a,),
        lambda g: (g * exponent * a.value ** (exponent - 1.0),),
    )


def clip_min(a, floor: float) -> Node:
    """max(a, floor); entries at or below the floor pass no gradient"""
    a = to_node(a)
    above = a.value > floor
    return _record(np.where(above, a.value, floor), (a,), lambda g: (g * above,))


def reverse_gradient(a, weight: float) -> Node:
    """Identity forward, adjoint multiplied by -weight"""
    a = to_node(a)
    weight = float(weight)
    return _record(a.value.copy(), (a,), lambda g: (-weight * g,))


def stop_gradient(a) -> Node:
    """Copy of the value as a constant, cut from the tape"""
    return constant(to_node(a).value.copy())


"""Structure
"""


def matmul(a, b) -> Node:
    a, b = to_node(a), to_node(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} x {b.shape}")
    return _record(
        a.value @ b.value,
        (a, b),
        lambda g: (g @ b.value.T, a.value.T @ g),
    )


def transpose(a) -> Node:
    a = to_node(a)
    return _record(a.value.T.copy(), (a,), lambda g: (g.T,))


def reduce_sum(a, axis: int | None = None) -> Node:
    """Sum keeping 2-D shape: None -> 1x1, 0 -> 1xm, 1 -> nx1"""
    a = to_node(a)
    if axis is None:
        out = np.array([[a.value.sum()]])
    else:
        out = a.value.sum(axis=axis, keepdims=True)
    return _record(
        out, (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),)
    )


def reduce_mean(a, axis: int | None = None) -> Node:
    a = to_node(a)
    count = a.value.size if axis is None else a.shape[axis]
    return scale(reduce_sum(a, axis), 1.0 / count)


def diag(a) -> Node:
    """Square matrix with the entries of an n x 1 or 1 x n vector"""
    a = to_node(a)
    if 1 not in a.shape:
        raise ShapeError(f"diag needs a vector, got {a.shape}")
    return _record(
        np.diagflat(a.value),
        (a,),
        lambda g: (np.diag(g).reshape(a.shape).copy(),),
    )


def diag_part(a) -> Node:
    """Diagonal of a square matrix as an n x 1 column"""
    a = to_node(a)
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"diag_part needs a square matrix, got {a.shape}")
    return _record(
        np.diag(a.value).reshape(-1, 1).copy(),
        (a,),
        lambda g: (np.diagflat(g),),
    )


def take_rows(a, index: Sequence[int] | np.ndarray) -> Node:
    a = to_node(a)
    index = np.asarray(index, dtype=np.int64)

    def backward_fn(g: np.ndarray):
        out = np.zeros_like(a.value)
        np.add.at(out, index, g)
        return (out,)

    return _record(a.value[index], (a,), backward_fn)


"""Row-wise maps
"""


def softmax_rows(a) -> Node:
    a = to_node(a)
    shifted = np.exp(a.value - a.value.max(axis=1, keepdims=True))
    out = shifted / shifted.sum(axis=1, keepdims=True)
    return _record(
        out,
        (a,),
        lambda g: (out * (g - (g * out).sum(axis=1, keepdims=True)),),
    )


def log_softmax_rows(a) -> Node:
    a = to_node(a)
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - log_norm
    probs = np.exp(out)
    return _record(
        out,
        (a,),
        lambda g: (g - probs * g.sum(axis=1, keepdims=True),),
    )


def row_norms(values: np.ndarray) -> np.ndarray:
    """L2 norm of every row, n x 1

    Raises:
        DegenerateInputError: A row has zero norm
    """
    norms = np.sqrt((values * values).sum(axis=1, keepdims=True))
    zero_rows = np.flatnonzero(norms[:, 0] == 0.0)
    if zero_rows.size > 0:
        raise DegenerateInputError(
            "zero-norm feature rows (cosine undefined): "
            + ", ".join(str(i) for i in zero_rows[:10])
        )
    return norms


def l2_normalize_rows(a) -> Node:
    a = to_node(a)
    norms = row_norms(a.value)
    out = a.value / norms
    return _record(
        out,
        (a,),
        lambda g: ((g - out * (g * out).sum(axis=1, keepdims=True)) / norms,),
    )


"""Linear algebra
"""


def cholesky_factor(m: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix

    Args:
        m (np.ndarray): Square matrix, only its lower triangle is read

    Raises:
        NumericalDomainError: A pivot is not positive, carries its index

    Returns:
        np.ndarray: Lower-triangular L with L @ L.T == m
    """
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        pivot = failing_pivot(m)
        logger.error("Cholesky pivot %d is not positive", pivot)
        raise NumericalDomainError(
            f"matrix is not positive definite: pivot {pivot} fails",
            pivot=pivot,
        ) from None


def failing_pivot(m: np.ndarray) -> int:
    """Index of the first leading principal block of a symmetric matrix that
    is not positive definite

    Positive definiteness of the leading k x k block carries over to every
    smaller one, so the index is found by bisection on the block size.
    """

    def factorizes(size: int) -> bool:
        try:
            np.linalg.cholesky(m[:size, :size])
        except np.linalg.LinAlgError:
            return False
        return True

    good, bad = 0, m.shape[0]
    while bad - good > 1:
        middle = (good + bad) // 2
        if factorizes(middle):
            good = middle
        else:
            bad = middle
    return bad - 1


def cholesky_logdet(m) -> Node:
    """log det of a symmetric positive definite matrix, 1x1

    The adjoint is m^{-1} times the upstream gradient. The symmetric part of
    m is factored so the adjoint is exact for symmetric inputs.

    Raises:
        ShapeError: m is not square
        NumericalDomainError: m is not positive definite
    """
    m = to_node(m)
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"cholesky_logdet needs a square matrix: {m.shape}")
    symmetric = 0.5 * (m.value + m.value.T)
    factor = cholesky_factor(symmetric)
    value = 2.0 * np.log(np.diag(factor)).sum()

    def backward_fn(g: np.ndarray):
        inv_factor = np.linalg.solve(factor, np.eye(m.shape[0]))
        inverse = inv_factor.T @ inv_factor
        return (g[0, 0] * inverse,)

    return _record(np.array([[value]]), (m,), backward_fn)


def solve(a, b) -> Node:
    """X with a @ X = b, differentiable in both arguments

    Raises:
        ShapeError: a not square or b has the wrong row count
        NumericalDomainError: a is singular within tolerance
    """
    a, b = to_node(a), to_node(b)
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"solve needs a square system matrix: {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ShapeError(f"solve: {a.shape} system, {b.shape} right side")
    condition = np.linalg.cond(a.value)
    if not condition < SOLVE_MAX_CONDITION:
        logger.error("Singular system, condition number %g", condition)
        raise NumericalDomainError(
            f"system matrix is singular (condition number {condition:g})"
        )
    out = np.linalg.solve(a.value, b.value)

    def backward_fn(g: np.ndarray):
        grad_b = np.linalg.solve(a.value.T, g)
        return (-grad_b @ out.T, grad_b)

    return _record(out, (a, b), backward_fn)


"""Tape traversal
"""


def _topological_order(root: Node) -> list[Node]:
    order: list[Node] = []
    visited: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(output: Node) -> tuple[Node, ...]:
    """Propagate d(output)/d(node) to every node reachable from a 1x1 output

    Leaf gradients accumulate into `.grad`; intermediate nodes have theirs
    overwritten.

    Args:
        output (Node): Scalar-valued result of the tape

    Raises:
        ShapeError: Output is not 1x1

    Returns:
        tuple[Node, ...]: Trainable leaves reached, in tape order
    """
    if output.shape != (1, 1):
        raise ShapeError(f"backward needs a 1x1 output, got {output.shape}")
    order = _topological_order(output)
    adjoints: dict[int, np.ndarray] = {id(output): np.ones((1, 1))}

    for node in reversed(order):
        adjoint = adjoints.get(id(node))
        if adjoint is None:
            continue
        if node.is_leaf:
            node.grad = node.grad + adjoint
            continue
        node.grad = adjoint
        if node.backward_fn is None:
            continue
        for parent, grad in zip(node.parents, node.backward_fn(adjoint)):
            if grad is None or not parent.requires_grad:
                continue
            previous = adjoints.get(id(parent))
            adjoints[id(parent)] = grad if previous is None else previous + grad

    return tuple(
        node for node in order if node.is_leaf and node.requires_grad
    )


def zero_grad(params: Iterable[Node]) -> None:
    """Reset accumulated leaf gradients"""
    for param in params:
        param.grad = np.zeros_like(param.value)
