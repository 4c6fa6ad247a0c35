"""Reverse-mode autodiff over numpy arrays.

Every differentiable op returns a :class:`Tensor` holding references to its
parents and a closure that maps the output gradient onto parent gradients.
Graphs are only recorded while gradient tracking is enabled (see
:func:`no_grad`).
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np

DTYPE = np.float64
FLOAT_DTYPES = (np.dtype(np.float64), np.dtype(np.float32))

_grad_enabled = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """n-dimensional float64 array with a lazily allocated gradient slot."""

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        arr = np.asarray(data)
        self.data = arr if arr.dtype in FLOAT_DTYPES else arr.astype(DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self.op = "leaf"
        self.parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, op={self.op})"

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Propagate gradients from this tensor to every ancestor that needs one."""
        if grad is None:
            if self.size != 1:
                raise ValueError("backward() without a seed gradient requires a scalar output")
            grad = np.ones_like(self.data)
        order = topological_order(self)
        self.accumulate(np.asarray(grad, dtype=self.data.dtype).reshape(self.shape))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # arithmetic sugar; the heavy ops live in ``functional``
    def __add__(self, other):
        from . import functional as F

        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F

        return F.add(self, F.neg(as_tensor(other)))

    def __rsub__(self, other):
        from . import functional as F

        return F.add(as_tensor(other), F.neg(self))

    def __mul__(self, other):
        from . import functional as F

        return F.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import functional as F

        return F.neg(self)

    def __matmul__(self, other):
        from . import functional as F

        return F.matmul(self, other)

    def sum(self):
        from . import functional as F

        return F.total(self)

    def mean(self):
        from . import functional as F

        return F.mean(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_node(
    data: np.ndarray,
    parents: Sequence[Tensor],
    op: str,
    backward: Callable[[np.ndarray], None],
) -> Tensor:
    """Wrap an op result, recording the graph edge only when someone needs it."""
    out = Tensor(data)
    out.op = op
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out._backward = backward
    return out


def topological_order(root: Tensor) -> list[Tensor]:
    """Ancestors of ``root`` (inclusive) with every node after its parents."""
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
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def ancestors(root: Tensor) -> list[Tensor]:
    return topological_order(root)
