"""Dense float64 tensors with a per-forward-pass reverse-mode graph."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

_GRAD_ENABLED = True
DEBUG = False


class ShapeError(ValueError):
    """Raised when a primitive receives operands of incompatible shapes."""


class ContractError(ValueError):
    """Raised when a documented precondition is violated."""


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


@dataclass(eq=False)
class Node:
    """One recorded primitive application."""

    kind: str
    inputs: tuple
    attrs: dict
    ctx: Any
    output: Any = field(default=None, repr=False)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_node", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._node: Node | None = None
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return apply_primitive("add", [self, other])

    def __radd__(self, other):
        return apply_primitive("add", [other, self])

    def __sub__(self, other):
        return apply_primitive("sub", [self, other])

    def __rsub__(self, other):
        return apply_primitive("sub", [other, self])

    def __mul__(self, other):
        return apply_primitive("mul", [self, other])

    def __rmul__(self, other):
        return apply_primitive("mul", [other, self])

    def __truediv__(self, other):
        return apply_primitive("div", [self, other])

    def __rtruediv__(self, other):
        return apply_primitive("div", [other, self])

    def __neg__(self):
        return apply_primitive("neg", [self])

    def __matmul__(self, other):
        return apply_primitive("matmul", [self, other])

    def __getitem__(self, index):
        return apply_primitive("slice", [self], {"index": index})

    def sum(self, axis=None, keepdims=False):
        return apply_primitive("sum", [self], {"axis": axis, "keepdims": keepdims})

    def mean(self, axis=None, keepdims=False):
        return apply_primitive("mean", [self], {"axis": axis, "keepdims": keepdims})

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return apply_primitive("reshape", [self], {"shape": shape})

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return apply_primitive("transpose", [self], {"axes": axes or None})

    @property
    def T(self):
        return self.transpose()

    def exp(self):
        return apply_primitive("exp", [self])

    def log(self):
        return apply_primitive("log", [self])

    def abs(self):
        return apply_primitive("abs", [self])

    def sqrt(self):
        return apply_primitive("sqrt", [self])

    def backward(self) -> None:
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def apply_primitive(kind: str, inputs: Sequence, attrs: dict | None = None) -> Tensor:
    """Run primitive ``kind`` forward and record a graph node when needed."""
    from .primitives import PRIMITIVES

    try:
        prim = PRIMITIVES[kind]
    except KeyError:
        raise ContractError(f"unknown primitive {kind!r}") from None
    attrs = attrs or {}
    tensors = tuple(as_tensor(x) for x in inputs)
    out_data, ctx = prim.forward([t.data for t in tensors], attrs)
    if DEBUG and all(np.isfinite(t.data).all() for t in tensors):
        if not np.isfinite(out_data).all():
            raise FloatingPointError(f"{kind}: non-finite output on finite inputs")
    out = Tensor(out_data)
    if _GRAD_ENABLED and any(t.requires_grad for t in tensors):
        out.requires_grad = True
        out._node = Node(kind, tensors, attrs, ctx)
    return out


def trace(root: Tensor) -> list[Tensor]:
    """Tensors reachable from ``root`` that carry a node, in topological order."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen or t._node is None:
            continue
        seen.add(id(t))
        stack.append((t, True))
        for parent in t._node.inputs:
            if parent._node is not None and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root: Tensor, keep_graph: bool = False) -> None:
    """Accumulate d(root)/d(leaf) into ``.grad`` of every grad-requiring leaf.

    The graph is dropped afterwards unless ``keep_graph`` is set.
    """
    from .primitives import PRIMITIVES

    if root.data.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    if root._node is None:
        if root.requires_grad:
            root.grad = np.ones_like(root.data) if root.grad is None else root.grad + 1.0
        return
    order = trace(root)
    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for t in reversed(order):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        node = t._node
        in_grads = PRIMITIVES[node.kind].backward(node.ctx, g, [x.data for x in node.inputs], node.attrs)
        for x, gx in zip(node.inputs, in_grads):
            if gx is None or not x.requires_grad:
                continue
            if x._node is None:
                x.grad = gx.copy() if x.grad is None else x.grad + gx
            else:
                prev = grads.get(id(x))
                grads[id(x)] = gx if prev is None else prev + gx
    if not keep_graph:
        for t in order:
            t._node = None
