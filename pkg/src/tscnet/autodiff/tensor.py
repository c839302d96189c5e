"""Dense tensor type with reverse-mode automatic differentiation.

A Tensor wraps a numpy array plus an optional gradient accumulator. Ops
(see ops.py) produce new tensors and attach a backward closure referencing
their inputs, so the executed program forms an implicit DAG. backward() on
a scalar walks that DAG once in reverse topological order (each op visited
exactly once) and accumulates gradients into every tensor that requires
them. Calling backward twice without resetting grads accumulates, which is
what gradient accumulation over a batch relies on.

Two precisions are supported: float32 (training default) and float64
(gradient-check mode). The dtype is fixed per tensor at creation and ops
preserve it.

Every op output is checked for NaN/Inf; a non-finite value raises
NumericsError because the network contract guarantees finite activations.
"""
from __future__ import annotations

import contextlib

import numpy as np

from ..errors import ContractError, NumericsError

FLOAT_DTYPES = (np.float32, np.float64)

_grad_enabled: bool = True
_alloc_trackers: list["AllocationTracker"] = []


class no_grad(contextlib.ContextDecorator):
    """Disable graph recording inside the block (forward-only evaluation)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def grad_enabled() -> bool:
    return _grad_enabled


class AllocationTracker:
    """Records the element count of every tensor created while active.

    Used to verify memory claims of attention variants: .peak is the
    largest single intermediate allocated inside the tracked region.
    """

    def __init__(self):
        self.events: list[int] = []

    @property
    def peak(self) -> int:
        return max(self.events, default=0)

    @property
    def total(self) -> int:
        return sum(self.events)


@contextlib.contextmanager
def track_allocations():
    tracker = AllocationTracker()
    _alloc_trackers.append(tracker)
    try:
        yield tracker
    finally:
        _alloc_trackers.remove(tracker)


def _record_alloc(nelems: int) -> None:
    for tracker in _alloc_trackers:
        tracker.events.append(nelems)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- autodiff -----------------------------------------------------------

    def backward(self) -> None:
        """Populate .grad of every reachable tensor that requires it.

        The seed gradient is 1; the loss must be a scalar. Each call walks
        the graph once with a fresh propagation buffer and then adds the
        per-pass result into .grad, so repeated calls without a reset
        accumulate (two identical passes double every gradient).
        """
        global _backward_ctx
        if self.data.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")

        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))

        _backward_ctx = {id(self): np.ones_like(self.data)}
        try:
            for node in reversed(topo):
                g = _backward_ctx.pop(id(node), None)
                if g is None:
                    continue
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                if node._backward is not None:
                    node._backward(g)
        finally:
            _backward_ctx = None


_backward_ctx: dict[int, np.ndarray] | None = None


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    """Route an op's input gradient into the active backward pass."""
    if _backward_ctx is not None:
        key = id(t)
        current = _backward_ctx.get(key)
        _backward_ctx[key] = g if current is None else current + g
    elif t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def make_result(data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    """Wrap an op result, enforcing finiteness and recording the graph edge."""
    if not np.all(np.isfinite(data)):
        raise NumericsError(f"non-finite values produced by op '{op}'")
    _record_alloc(data.size)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out
