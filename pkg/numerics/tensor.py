"""
numerics/tensor.py — DTensor, the Tape, and reverse-mode backward

Purpose
===============================================================================
A deliberately small autodiff engine: numpy arrays wrapped in DTensor, every
differentiable op recorded on the active Tape together with a backward rule,
and one reverse traversal that turns d(root)/d(output) into gradients of every
requires_grad leaf.

How recording works
- `with Tape() as tape:` makes `tape` the active tape of the current thread.
- Ops call `apply_op(name, data, inputs, backward)`. The op is recorded only
  when a tape is active and at least one input requires grad; the output then
  requires grad too. Outside a tape (or under `no_grad()`) ops are plain numpy.
- Because entries are appended as ops execute, the tape is topologically
  ordered by construction; backward walks it once in reverse.

Precision
- New tensors are created in the dtype selected by the global precision flag:
  float32 for training, float64 for gradient checks (`precision("float64")`).
  The default comes from settings.MARRPROBE["PRECISION"].

Selection trace
- Ops that make hard decisions (hardmax, depth competition, Z-buffer) call
  `record_selection(name, indices)`. Inside `selection_trace()` these decisions
  are collected so a gradient check can tell whether a perturbation changed them.
"""

from __future__ import annotations

import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from marrprobe.exceptions import ConfigurationError, ContractError

logger = logging.getLogger(__name__)

_PRECISIONS = {"float32": np.float32, "float64": np.float64}
_precision: str | None = None
_local = threading.local()


# ----------------------------------------------------------------------------- #
# Precision flag                                                                #
# ----------------------------------------------------------------------------- #
def _default_precision() -> str:
    try:
        from django.conf import settings
        return settings.MARRPROBE.get("PRECISION", "float32")
    except Exception:
        return "float32"


def get_precision() -> str:
    return _precision or _default_precision()


def get_dtype() -> type:
    return _PRECISIONS[get_precision()]


def set_precision(name: str) -> None:
    global _precision
    if name not in _PRECISIONS:
        raise ConfigurationError(f"unknown precision {name!r}; expected one of {sorted(_PRECISIONS)}")
    _precision = name


@contextmanager
def precision(name: str):
    """Temporarily switch the dtype of newly created tensors."""
    global _precision
    previous = _precision
    set_precision(name)
    try:
        yield
    finally:
        _precision = previous


# ----------------------------------------------------------------------------- #
# DTensor                                                                       #
# ----------------------------------------------------------------------------- #
class DTensor:
    """A dense array that can take part in reverse-mode differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "name", "__weakref__")
    __array_ufunc__ = None  # numpy operands defer to the reflected DTensor operators

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        if isinstance(data, DTensor):
            data = data.data
        self.data: np.ndarray = np.array(data, dtype=dtype or get_dtype(), copy=True)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name

    @classmethod
    def _wrap(cls, array: np.ndarray) -> "DTensor":
        t = cls.__new__(cls)
        t.data = array
        t.requires_grad = False
        t.grad = None
        t.name = None
        return t

    # ---- array facts ----
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
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "DTensor":
        return DTensor._wrap(self.data)

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"DTensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    # ---- operator sugar (implemented in numerics.ops) ----
    def __add__(self, other):
        from numerics import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from numerics import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from numerics import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from numerics import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from numerics import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from numerics import ops
        return ops.div(other, self)

    def __neg__(self):
        from numerics import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from numerics import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from numerics import ops
        return ops.getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        from numerics import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from numerics import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from numerics import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from numerics import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)


def as_tensor(value) -> DTensor:
    """Wrap constants (python scalars, numpy arrays) as non-differentiable tensors."""
    if isinstance(value, DTensor):
        return value
    arr = np.asarray(value)
    if arr.dtype.kind in "fc":
        arr = arr.astype(get_dtype(), copy=False)
    elif arr.dtype.kind in "iub":
        arr = arr.astype(get_dtype())
    return DTensor._wrap(arr)


# ----------------------------------------------------------------------------- #
# Tape                                                                          #
# ----------------------------------------------------------------------------- #
@dataclass
class TapeEntry:
    op: str
    inputs: tuple[DTensor, ...]
    output: DTensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered record of differentiable ops executed while the tape is active."""

    def __init__(self):
        self.entries: list[TapeEntry] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, entry: TapeEntry) -> None:
        self.entries.append(entry)

    def leaves(self) -> list[DTensor]:
        """requires_grad inputs that no entry produced, in first-use order."""
        produced = {id(e.output) for e in self.entries}
        seen: dict[int, DTensor] = {}
        for entry in self.entries:
            for t in entry.inputs:
                if t.requires_grad and id(t) not in produced and id(t) not in seen:
                    seen[id(t)] = t
        return list(seen.values())

    def first_nonfinite(self) -> TapeEntry | None:
        for entry in self.entries:
            if not np.all(np.isfinite(entry.output.data)):
                return entry
        return None


def _stack() -> list:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def active_tape() -> Tape | None:
    stack = _stack()
    return stack[-1] if stack else None


@contextmanager
def no_grad():
    """Run ops without recording them, even inside an active tape."""
    stack = _stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


def apply_op(
    name: str,
    data: np.ndarray,
    inputs: Iterable[DTensor],
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]],
) -> DTensor:
    """Wrap an op result and record it on the active tape when gradients are needed.

    `backward(g)` receives d(root)/d(output) with the output's shape and returns one
    gradient per input (None for inputs that get none). Gradients may have a
    broadcast shape; they are summed back to the input shape during backward.
    """
    inputs = tuple(inputs)
    out = DTensor._wrap(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(TapeEntry(name, inputs, out, backward))
    return out


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ----------------------------------------------------------------------------- #
# Backward                                                                      #
# ----------------------------------------------------------------------------- #
def backward(root: DTensor, tape: Tape, params: Iterable[DTensor] = ()) -> dict[DTensor, np.ndarray]:
    """Populate `.grad` of every requires_grad leaf with d(root)/d(leaf).

    Leaves listed in `params` that the root does not depend on get zero gradients.
    Returns the gradient map {leaf: grad}. Gradients overwrite, they do not accumulate.
    """
    if root.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")

    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for entry in reversed(tape.entries):
        g = grads.pop(id(entry.output), None)
        if g is None:
            continue
        in_grads = entry.backward(g)
        for inp, ig in zip(entry.inputs, in_grads):
            if ig is None or not inp.requires_grad:
                continue
            ig = unbroadcast(np.asarray(ig, dtype=inp.data.dtype), inp.shape)
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + ig
            else:
                grads[key] = ig

    result: dict[DTensor, np.ndarray] = {}
    leaves = tape.leaves()
    extra = [p for p in params if all(p is not leaf for leaf in leaves)]
    for leaf in list(leaves) + extra:
        g = grads.get(id(leaf))
        if g is None:
            g = np.zeros_like(leaf.data)
        leaf.grad = g
        result[leaf] = g
    return result


# ----------------------------------------------------------------------------- #
# Selection trace                                                               #
# ----------------------------------------------------------------------------- #
class SelectionTrace:
    """Integer decisions made by hard-selection ops during one forward pass."""

    def __init__(self):
        self.records: list[tuple[str, np.ndarray]] = []

    def add(self, name: str, indices: np.ndarray) -> None:
        self.records.append((name, np.array(indices, copy=True)))

    def differs(self, other: "SelectionTrace") -> bool:
        if len(self.records) != len(other.records):
            return True
        for (na, a), (nb, b) in zip(self.records, other.records):
            if na != nb or a.shape != b.shape or not np.array_equal(a, b):
                return True
        return False


def _traces() -> list:
    if not hasattr(_local, "traces"):
        _local.traces = []
    return _local.traces


@contextmanager
def selection_trace():
    trace = SelectionTrace()
    _traces().append(trace)
    try:
        yield trace
    finally:
        _traces().pop()


def record_selection(name: str, indices: np.ndarray) -> None:
    traces = _traces()
    if traces:
        traces[-1].add(name, indices)
