"""Small reverse-mode autodiff over float64 numpy arrays.

Tensors are plain ``np.ndarray`` values (float64, treated as immutable). A
:class:`Node` wraps a value plus the closure that pushes its gradient back to
its parents. There is no broadcasting except between a tensor and a Python
scalar; anything else must be reshaped explicitly.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an op."""

    def __init__(self, op: str, a: tuple, b: tuple):
        super().__init__(f"{op}: incompatible shapes {a} and {b}")
        self.op = op
        self.shapes = (a, b)


def as_tensor(x) -> np.ndarray:
    return np.array(x, dtype=np.float64)


class Node:
    __slots__ = ("value", "grad", "parents", "requires_grad", "_backward", "op")

    def __init__(self, value, parents=(), backward=None, requires_grad=False, op=""):
        self.value = value if isinstance(value, np.ndarray) and value.dtype == np.float64 else as_tensor(value)
        self.grad = None
        self.parents = parents
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._backward = backward
        self.op = op

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def backward(self):
        backward(self)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul_elementwise(self, other)

    def __rmul__(self, other):
        return mul_elementwise(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scalar_mul(-1.0, self)

    def __repr__(self):
        return f"Node(op={self.op or 'leaf'}, shape={self.shape})"


def leaf(value, requires_grad=False) -> Node:
    return Node(as_tensor(value), requires_grad=requires_grad)


def constant(value) -> Node:
    return leaf(value, requires_grad=False)


def variable(value) -> Node:
    return leaf(value, requires_grad=True)


def _lift(x):
    if isinstance(x, Node):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        return float(x)
    return constant(x)


def _accumulate(node: Node, g: np.ndarray):
    if not node.requires_grad:
        return
    if node.grad is None:
        node.grad = np.array(g, dtype=np.float64).reshape(node.value.shape)
    else:
        node.grad = node.grad + g


def _binary(op, a, b, fwd, grad_a, grad_b):
    a, b = _lift(a), _lift(b)
    a_scalar, b_scalar = not isinstance(a, Node), not isinstance(b, Node)
    if a_scalar and b_scalar:
        raise TypeError(f"{op}: at least one operand must be a Node")
    if not a_scalar and not b_scalar and a.shape != b.shape:
        raise ShapeError(op, a.shape, b.shape)
    av = a if a_scalar else a.value
    bv = b if b_scalar else b.value
    parents = tuple(n for n in (a, b) if isinstance(n, Node))
    out = Node(fwd(av, bv), parents, op=op)

    def _back():
        g = out.grad
        if not a_scalar and a.requires_grad:
            _accumulate(a, grad_a(g, av, bv))
        if not b_scalar and b.requires_grad:
            _accumulate(b, grad_b(g, av, bv))

    out._backward = _back
    return out


def add(a, b) -> Node:
    return _binary("add", a, b, lambda x, y: x + y, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b) -> Node:
    return _binary("sub", a, b, lambda x, y: x - y, lambda g, x, y: g, lambda g, x, y: -g)


def mul_elementwise(a, b) -> Node:
    return _binary("mul", a, b, lambda x, y: x * y, lambda g, x, y: g * y, lambda g, x, y: g * x)


def scalar_mul(c: float, a: Node) -> Node:
    c = float(c)
    out = Node(c * a.value, (a,), op="scalar_mul")
    out._backward = lambda: _accumulate(a, c * out.grad)
    return out


def matmul(a: Node, b: Node) -> Node:
    """Matrix product for 1-D/2-D operands (numpy ``@`` semantics)."""
    a, b = _lift(a), _lift(b)
    if a.value.ndim not in (1, 2) or b.value.ndim not in (1, 2):
        raise ShapeError("matmul", a.shape, b.shape)
    if a.shape[-1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    av, bv = a.value, b.value
    out = Node(av @ bv, (a, b), op="matmul")

    def _back():
        g = out.grad
        if a.requires_grad:
            if bv.ndim == 2:
                ga = g @ bv.T if av.ndim == 2 else bv @ g
            else:
                ga = np.outer(g, bv) if av.ndim == 2 else g * bv
            _accumulate(a, ga)
        if b.requires_grad:
            if av.ndim == 2:
                gb = av.T @ g
            else:
                gb = np.outer(av, g) if bv.ndim == 2 else g * av
            _accumulate(b, gb)

    out._backward = _back
    return out


def tanh(a: Node) -> Node:
    y = np.tanh(a.value)
    out = Node(y, (a,), op="tanh")
    out._backward = lambda: _accumulate(a, out.grad * (1.0 - y * y))
    return out


def leaky_relu(a: Node, slope: float = 0.2) -> Node:
    pos = a.value > 0
    out = Node(np.where(pos, a.value, slope * a.value), (a,), op="leaky_relu")
    out._backward = lambda: _accumulate(a, np.where(pos, out.grad, slope * out.grad))
    return out


def identity(a: Node) -> Node:
    return a


def sum(a: Node) -> Node:  # noqa: A001 - mirrors the op name
    out = Node(np.sum(a.value), (a,), op="sum")
    out._backward = lambda: _accumulate(a, np.full(a.shape, float(out.grad)))
    return out


def sum_squares(a: Node) -> Node:
    out = Node(np.sum(a.value * a.value), (a,), op="sum_squares")
    out._backward = lambda: _accumulate(a, 2.0 * float(out.grad) * a.value)
    return out


def abs_sum(a: Node) -> Node:
    # subgradient sign(0) = 0
    out = Node(np.sum(np.abs(a.value)), (a,), op="abs_sum")
    out._backward = lambda: _accumulate(a, float(out.grad) * np.sign(a.value))
    return out


def reshape(a: Node, shape) -> Node:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.value.size:
        raise ShapeError("reshape", a.shape, shape)
    out = Node(a.value.reshape(shape), (a,), op="reshape")
    out._backward = lambda: _accumulate(a, out.grad.reshape(a.shape))
    return out


def clamp(a: Node, lo: float, hi: float) -> Node:
    if lo > hi:
        raise ValueError(f"clamp: lo={lo} > hi={hi}")
    inside = (a.value >= lo) & (a.value <= hi)
    out = Node(np.clip(a.value, lo, hi), (a,), op="clamp")
    out._backward = lambda: _accumulate(a, np.where(inside, out.grad, 0.0))
    return out


def _topo_order(root: Node) -> list[Node]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Node) -> None:
    """Populate ``grad`` on every node reachable from a scalar ``root``.

    Gradients are reset first, so calling this twice does not double-count.
    Leaves not flagged ``requires_grad`` end with an all-zero gradient.
    """
    if root.value.size != 1:
        raise ValueError(f"backward: root must be scalar, got shape {root.shape}")
    order = _topo_order(root)
    for node in order:
        node.grad = None
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward()
    for node in order:
        if node.grad is None:
            node.zero_grad()


def finite_difference_gradient(f, at, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of one array."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = as_tensor(at)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = float(f(x.copy()))
        flat[i] = orig - step
        fm = float(f(x.copy()))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


def relative_error(g: np.ndarray, ref: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """Elementwise |g - ref| / max(|g|, floor)."""
    g, ref = np.asarray(g, dtype=np.float64), np.asarray(ref, dtype=np.float64)
    return np.abs(g - ref) / np.maximum(np.abs(g), floor)
