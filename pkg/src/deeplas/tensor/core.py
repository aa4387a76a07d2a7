"""Tensor value type, the per-thread computation tape, and reverse-mode backward."""
from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

_state = threading.local()


def _st():
    if not hasattr(_state, "tape"):
        _state.tape = Tape()
        _state.grad_enabled = True
        _state.dtype = np.float32
    return _state


def default_dtype():
    return _st().dtype


@contextlib.contextmanager
def precision(dtype):
    """Create new tensors in ``dtype`` (float32 for training, float64 for gradient checks)."""
    st = _st()
    old = st.dtype
    st.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        st.dtype = old


@contextlib.contextmanager
def no_grad():
    st = _st()
    old = st.grad_enabled
    st.grad_enabled = False
    try:
        yield
    finally:
        st.grad_enabled = old


def grad_enabled() -> bool:
    return _st().grad_enabled


@dataclass
class Record:
    op: str
    inputs: tuple
    outputs: tuple
    backward: Callable  # list of output grads -> list of input grads (None = no contribution)


class Tape:
    """Ordered op records for one training step; consumed and cleared by ``backward``."""

    def __init__(self):
        self.records: list[Record] = []

    def __len__(self):
        return len(self.records)

    def append(self, rec: Record):
        self.records.append(rec)

    def clear(self):
        self.records.clear()


def current_tape() -> Tape:
    return _st().tape


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype.kind != "f":
            arr = arr.astype(default_dtype())
        if arr.ndim and 0 in arr.shape:
            raise ValueError(f"tensor extents must be positive, got {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __len__(self):
        return self.data.shape[0]

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    # operator sugar; implementations live in ops.py
    def __add__(self, o):
        return _ops.add(self, o)

    def __radd__(self, o):
        return _ops.add(o, self)

    def __sub__(self, o):
        return _ops.sub(self, o)

    def __rsub__(self, o):
        return _ops.sub(o, self)

    def __mul__(self, o):
        return _ops.mul(self, o)

    def __rmul__(self, o):
        return _ops.mul(o, self)

    def __truediv__(self, o):
        return _ops.div(self, o)

    def __rtruediv__(self, o):
        return _ops.div(o, self)

    def __neg__(self):
        return _ops.neg(self)

    def __matmul__(self, o):
        return _ops.matmul(self, o)

    def __getitem__(self, idx):
        return _ops.getitem(self, idx)

    def __pow__(self, p):
        return _ops.power(self, p)

    def sum(self, axis=None, keepdims=False):
        return _ops.sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return _ops.mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _ops.reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return _ops.transpose(self, axes or None)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=default_dtype()))


def record(op: str, inputs: Sequence[Tensor], out_data, backward, n_out: int = 1):
    """Wrap forward results and append one tape record when any input needs gradients."""
    needs = grad_enabled() and any(t.requires_grad for t in inputs)
    if n_out == 1:
        outs = (Tensor(out_data, requires_grad=needs),)
    else:
        outs = tuple(Tensor(d, requires_grad=needs) for d in out_data)
    if needs:
        _st().tape.append(Record(op, tuple(inputs), outs, backward))
    return outs[0] if n_out == 1 else outs


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every requires-grad tensor reachable from ``loss``.

    Gradients accumulate into existing ``.grad`` arrays of leaf tensors, so callers
    reset parameter grads between steps. The tape is cleared afterwards.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    tape = _st().tape
    if not loss.requires_grad or not len(tape):
        raise RuntimeError("backward: empty tape; loss does not depend on any requires_grad tensor")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    produced = set()
    touched: dict[int, Tensor] = {id(loss): loss}
    try:
        for rec in reversed(tape.records):
            gouts = [grads.pop(id(o), None) for o in rec.outputs]
            for o in rec.outputs:
                produced.add(id(o))
            if all(g is None for g in gouts):
                continue
            gouts = [np.zeros_like(o.data) if g is None else g for g, o in zip(gouts, rec.outputs)]
            gins = rec.backward(gouts)
            for t, g in zip(rec.inputs, gins):
                if g is None or not t.requires_grad:
                    continue
                k = id(t)
                touched[k] = t
                if k in grads:
                    grads[k] = grads[k] + g
                else:
                    grads[k] = g
            # intermediates keep their grad for inspection
            for o, g in zip(rec.outputs, gouts):
                o.grad = g
        for k, g in grads.items():
            t = touched[k]
            if k in produced:
                continue
            g = g.astype(t.data.dtype, copy=False)
            t.grad = g if t.grad is None else t.grad + g
    finally:
        tape.clear()


from . import ops as _ops  # noqa: E402  (circular: ops needs Tensor)
