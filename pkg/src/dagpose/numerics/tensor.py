"""Dense tensors with a define-by-run gradient tape.

A :class:`Tape` is opened with ``with Tape() as tape:``; every differentiable op
executed while it is active and touching a tensor with ``requires_grad`` is
appended to it. ``tape.backward(loss)`` (or the module level :func:`backward`)
walks the recorded ops in exact reverse order, accumulates gradients into the
leaf tensors' ``.grad`` buffers and then retires the tape.
"""

from __future__ import annotations

import threading

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an op."""


class TapeError(RuntimeError):
    """Raised on misuse of the gradient tape (double backward, empty tape, ...)."""


_local = threading.local()


def _stack():
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def current_tape():
    """Return the innermost active tape on this thread, or None."""
    stack = _stack()
    return stack[-1] if stack else None


class Tensor:
    """N-dimensional array plus an optional gradient slot.

    ``data`` is a numpy array (float64 unless a dtype is given). Tensors are
    treated as immutable after creation; parameter updates write ``data``
    in place between forward passes.
    """

    __array_priority__ = 1000

    __slots__ = ("data", "requires_grad", "grad", "name", "_tape")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype.kind not in "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag}{label})"


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


class Tape:
    """Ordered record of executed ops, sufficient to run reverse mode once."""

    def __init__(self):
        self.nodes = []
        self._consumed = False

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    @property
    def consumed(self):
        return self._consumed

    def record(self, out, parents, backward_fn):
        if self._consumed:
            raise TapeError("cannot record on a tape that already ran backward; call reset()")
        out._tape = self
        self.nodes.append((out, parents, backward_fn))

    def reset(self):
        self.nodes = []
        self._consumed = False

    def backward(self, loss):
        if self._consumed:
            raise TapeError("backward called twice on the same tape without a new forward pass")
        if not isinstance(loss, Tensor):
            raise TypeError("loss must be a Tensor")
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not self.nodes or loss._tape is not self:
            raise TapeError("loss was not produced on this tape (tape empty or foreign loss)")

        grads = {id(loss): np.ones_like(loss.data)}
        for out, parents, fn in reversed(self.nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for p, gp in zip(parents, fn(g)):
                if gp is None or not p.requires_grad:
                    continue
                if p._tape is self:
                    key = id(p)
                    prev = grads.get(key)
                    grads[key] = gp if prev is None else prev + gp
                else:
                    p.grad = np.array(gp, dtype=p.data.dtype) if p.grad is None else p.grad + gp
        self.nodes = []
        self._consumed = True


def backward(loss):
    """Populate ``.grad`` of every leaf that ``loss`` depends on."""
    tape = loss._tape if isinstance(loss, Tensor) else None
    if tape is None:
        raise TapeError("loss has no recording tape; run the forward pass inside `with Tape():`")
    tape.backward(loss)


def make_result(data, parents, backward_fn):
    """Wrap ``data`` as an op output, recording it when a tape is live."""
    tape = current_tape()
    needs = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape.record(out, parents, backward_fn)
    return out
