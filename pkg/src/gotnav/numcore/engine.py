"""Reverse-mode autodiff over dense numpy arrays.

A :class:`Tape` records every primitive application in execution order while
it is active (``with Tape() as t: ...``).  :func:`backward` replays the tape
in reverse, accumulating gradients into leaf tensors.  Tapes are rebuilt per
forward pass; nothing here is thread-shared except the per-thread tape stack.
"""
from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

_ALLOWED_DTYPES = (np.float32, np.float64)

_local = threading.local()


class NumericError(ArithmeticError):
    """A primitive produced or received non-finite values."""


class TapeError(RuntimeError):
    """The tape is malformed (non-topological ordering / corruption)."""


def _stack() -> list:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def active_tape() -> "Tape | None":
    s = _stack()
    return s[-1] if s else None


_validate = True


def set_validation(on: bool) -> bool:
    """Toggle per-primitive finiteness checks; returns the previous setting."""
    global _validate
    prev = _validate
    _validate = bool(on)
    return prev


def validation_enabled() -> bool:
    return _validate


class DiffTensor:
    """Dense array participating in a recorded computation graph.

    ``values`` is always a numpy float32/float64 array.  ``grad`` is allocated
    lazily by :func:`backward` for leaves with ``requires_grad``.  ``node_id``
    indexes into the tape that created this tensor (None for leaves).
    """

    __slots__ = ("values", "grad", "node_id", "requires_grad")

    def __init__(self, values, requires_grad: bool = True, dtype=None):
        arr = np.asarray(values, dtype=dtype)
        if arr.dtype not in _ALLOWED_DTYPES:
            arr = arr.astype(np.float64)
        self.values = arr
        self.grad = None
        self.node_id = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    @property
    def is_leaf(self) -> bool:
        return self.node_id is None

    def item(self) -> float:
        return float(self.values)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "DiffTensor":
        """Constant view of the current values (no grad, not on any tape)."""
        return DiffTensor(self.values, requires_grad=False)

    def __repr__(self) -> str:
        return f"DiffTensor(shape={self.shape}, dtype={self.dtype.name}, leaf={self.is_leaf})"

    # operator sugar; the heavy lifting lives in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


def param(values, dtype=np.float64) -> DiffTensor:
    """Trainable leaf tensor (copies its input)."""
    return DiffTensor(np.array(values, dtype=dtype), requires_grad=True)


def constant(values, dtype=None) -> DiffTensor:
    """Non-trainable leaf; gradients are never accumulated into it."""
    return DiffTensor(values, requires_grad=False, dtype=dtype)


class _Node:
    __slots__ = ("out", "parents", "bwd", "name")

    def __init__(self, out: DiffTensor, parents: tuple, bwd: Callable, name: str):
        self.out = out
        self.parents = parents
        self.bwd = bwd
        self.name = name


class Tape:
    """Ordered record of primitive applications (inputs precede outputs)."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, out: DiffTensor, parents: Sequence[DiffTensor], bwd: Callable, name: str) -> None:
        out.node_id = len(self.nodes)
        self.nodes.append(_Node(out, tuple(parents), bwd, name))

    def clear(self) -> None:
        self.nodes.clear()

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _stack().pop()
        if popped is not self:
            raise TapeError("tape stack corrupted: mismatched push/pop")


def _all_finite(arr: np.ndarray) -> bool:
    # cheap screen: a finite sum implies finite entries except for rare
    # overflow, which the full check below then resolves
    s = arr.sum()
    if np.isfinite(s):
        return True
    return bool(np.all(np.isfinite(arr)))


def record_op(out_values: np.ndarray, parents: Sequence[DiffTensor], bwd: Callable, name: str) -> DiffTensor:
    """Wrap a primitive's result; records on the active tape when grads are needed.

    ``bwd(upstream)`` must return one gradient array (or None) per parent.
    """
    if _validate and not _all_finite(out_values):
        raise NumericError(f"non-finite values produced by '{name}'")
    tape = active_tape()
    needs = tape is not None and any(p.requires_grad for p in parents)
    out = DiffTensor(out_values, requires_grad=needs)
    if needs:
        tape.record(out, parents, bwd, name)
    return out


def backward(tape: Tape, loss: DiffTensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``.grad``.

    Repeated calls without clearing grads accumulate additively.  Intermediate
    tensors never retain gradients; each call uses its own scratch table.
    """
    if loss.values.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.shape}")
    if loss.node_id is None:
        return  # loss is itself a leaf: no parameters influence it
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    for node_id in range(loss.node_id, -1, -1):
        node = tape.nodes[node_id]
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        parent_grads = node.bwd(g)
        for p, pg in zip(node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            if p.node_id is not None:
                if p.node_id >= node_id:
                    raise TapeError(
                        f"tape is not topological: node {node_id} ('{node.name}') "
                        f"consumes node {p.node_id}"
                    )
                key = id(p)
                prev = grads.get(key)
                # out-of-place accumulate: stored arrays may alias upstream
                # gradients or read-only broadcast views, so never mutate them
                grads[key] = pg if prev is None else prev + pg
            else:
                if p.grad is None:
                    p.grad = np.zeros_like(p.values)
                p.grad += pg


def zero_grads(params) -> None:
    """Clear ``.grad`` on an iterable or dict of tensors."""
    it = params.values() if isinstance(params, dict) else params
    for p in it:
        p.grad = None
