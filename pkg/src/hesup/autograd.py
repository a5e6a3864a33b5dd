"""Dense tensors and a reverse-mode tape.

A :class:`Tensor` wraps a numpy array. Operations in :mod:`hesup.ops` build
new tensors and attach a :class:`Record` describing how to push gradients
back to their operands. ``backward`` walks those records in reverse
topological order, either from an explicit :class:`Tape` or by discovering
the graph from the loss.

Training runs in float32. :func:`precision` switches the default dtype so the
finite-difference oracle can re-run the same code in float64.
"""
from __future__ import annotations

import threading
import weakref
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

_state = threading.local()


def _get(name, default):
    return getattr(_state, name, default)


def default_dtype():
    return _get("dtype", np.float32)


def grad_enabled():
    return _get("grad_enabled", True)


@contextmanager
def precision(dtype):
    """Temporarily change the dtype new tensors are created with."""
    prev = default_dtype()
    _state.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _state.dtype = prev


@contextmanager
def no_grad():
    """Disable graph construction inside the block."""
    prev = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Tensor:
    """A dense array, optionally tracked for gradients.

    ``grad`` exists iff ``requires_grad``; it is allocated lazily as zeros.
    """

    __slots__ = ("data", "requires_grad", "_grad", "_record", "name", "__weakref__")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.array(data, dtype=dtype or default_dtype(), copy=True)
        self.requires_grad = bool(requires_grad)
        self._grad = None
        self._record = None
        self.name = name

    @classmethod
    def _wrap(cls, array, requires_grad=False):
        # No copy, no cast: op outputs keep the dtype they were computed in.
        t = cls.__new__(cls)
        t.data = array
        t.requires_grad = requires_grad
        t._grad = None
        t._record = None
        t.name = None
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def grad(self):
        if not self.requires_grad:
            return None
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value):
        if not self.requires_grad:
            raise ValueError("tensor does not require grad")
        value = np.asarray(value, dtype=self.data.dtype)
        if value.shape != self.data.shape:
            raise ShapeError(
                f"grad shape {value.shape} does not match data shape {self.data.shape}",
                value.shape,
                self.data.shape,
            )
        self._grad = value

    @property
    def is_leaf(self):
        return self._record is None

    def zero_grad(self):
        if self.requires_grad:
            self._grad = np.zeros_like(self.data)

    def detach(self):
        return Tensor._wrap(self.data)

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def backward(self, tape=None):
        backward(self, tape)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}{flag})"

    def __add__(self, other):
        from .ops import add

        return add(self, other)

    def __mul__(self, other):
        from .ops import mul

        return mul(self, other)


class Record:
    """One executed operation on the tape.

    ``backward_fn`` maps the output gradient to a tuple of operand gradients,
    with ``None`` for operands that do not need one. The output is held
    weakly: it already points at its record, and a strong link back would
    make every graph a reference cycle that only the cyclic collector frees.
    """

    __slots__ = ("op", "inputs", "_output", "output_id", "backward_fn")

    def __init__(self, op, inputs, output, backward_fn):
        self.op = op
        self.inputs = inputs
        self._output = weakref.ref(output)
        self.output_id = id(output)
        self.backward_fn = backward_fn

    @property
    def output(self):
        """The output tensor, or None once nothing else references it."""
        return self._output()

    def __repr__(self):
        return f"Record({self.op!r}, {len(self.inputs)} inputs)"


@dataclass(eq=False)
class Tape:
    """Ordered log of operations executed while the tape is active.

    Use as a context manager; operations run inside the block are appended in
    execution order, which is already a topological order.
    """

    records: list = field(default_factory=list)

    def __enter__(self):
        stack = _get("tapes", None)
        if stack is None:
            stack = _state.tapes = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _state.tapes.pop()
        return False

    def __len__(self):
        return len(self.records)

    def backward(self, loss):
        backward(loss, self)


def record(op, inputs, output, backward_fn):
    """Attach a backward rule to ``output`` if any input needs a gradient."""
    if not grad_enabled() or not any(t.requires_grad for t in inputs):
        return output
    output.requires_grad = True
    rec = Record(op, tuple(inputs), output, backward_fn)
    output._record = rec
    stack = _get("tapes", None)
    if stack:
        stack[-1].records.append(rec)
    return output


def _topological_records(loss):
    order = []
    seen = set()
    stack = [(loss._record, False)] if loss._record is not None else []
    while stack:
        rec, expanded = stack.pop()
        if expanded:
            order.append(rec)
            continue
        if id(rec) in seen:
            continue
        seen.add(id(rec))
        stack.append((rec, True))
        for t in rec.inputs:
            if t._record is not None and id(t._record) not in seen:
                stack.append((t._record, False))
    return order


def backward(loss, tape=None):
    """Populate ``.grad`` on every leaf reachable from ``loss``.

    Gradients accumulate into existing leaf buffers, so call
    :meth:`Tensor.zero_grad` between steps.
    """
    if loss.size != 1:
        raise ShapeError(
            f"backward needs a scalar loss, got shape {loss.shape}", loss.shape
        )
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any tensor that requires grad")
    records = tape.records if tape is not None else _topological_records(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for rec in reversed(records):
        g = grads.pop(rec.output_id, None)
        if g is None:
            continue
        for t, gi in zip(rec.inputs, rec.backward_fn(g)):
            if gi is None or not t.requires_grad:
                continue
            if t._record is None:
                if t._grad is None:
                    t._grad = np.array(gi, dtype=t.data.dtype)
                else:
                    t._grad += gi
            elif id(t) in grads:
                grads[id(t)] = grads[id(t)] + gi
            else:
                grads[id(t)] = gi
    if loss._record is None:
        loss.grad = loss.grad + 1
