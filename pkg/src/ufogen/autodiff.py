"""Minimal reverse-mode automatic differentiation over dense float64 tensors.

A dynamic tape records every differentiable operation as it executes; calling
:func:`backward` on a scalar loss walks the tape once in reverse execution
order, accumulates gradients into every ``requires_grad`` ancestor, and frees
the tape.  The tape is thread-local: tensors may move between threads, a tape
may not.

All storage is 64-bit floating point.  Broadcasting follows numpy's trailing
alignment rules (missing or singleton leading dimensions), which is all an MLP
needs; gradient contributions are summed back over broadcast axes.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class Tensor:
    """Dense float64 array with an optional gradient buffer.

    ``data`` is always C-contiguous float64.  ``grad`` is either ``None`` or
    an ndarray of the same shape.  Constructing a tensor from non-finite
    values raises immediately: NaN/Inf is an error state in this library,
    never a value to propagate.
    """

    __slots__ = ("data", "requires_grad", "grad", "_grad_owned")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 0 and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor initialized with non-finite values")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._grad_owned = True

    @classmethod
    def _result(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        # Internal fast path for op outputs: skips the finiteness scan.
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = requires_grad
        out.grad = None
        out._grad_owned = True
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor._result(self.data.copy(), False)

    def zero_grad(self) -> None:
        self.grad = None
        self._grad_owned = True

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # Operator sugar; constants are wrapped as non-grad tensors.
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(np.asarray(value, dtype=np.float64))


class Tape:
    """Ordered record of executed operations for one backward pass."""

    __slots__ = ("_entries",)

    def __init__(self):
        self._entries: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []

    def __len__(self) -> int:
        return len(self._entries)

    def clear(self) -> None:
        self._entries.clear()


_tls = threading.local()


def current_tape() -> Tape:
    """The calling thread's tape, created on first use."""
    tape = getattr(_tls, "tape", None)
    if tape is None:
        tape = _tls.tape = Tape()
    return tape


def _recording() -> bool:
    return getattr(_tls, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable tape recording; outputs inside are constant tensors."""
    prev = getattr(_tls, "grad_enabled", True)
    _tls.grad_enabled = False
    try:
        yield
    finally:
        _tls.grad_enabled = prev


@contextmanager
def fresh_tape():
    """Record onto a fresh tape, restoring the previous one on exit.

    Lets an inner backward pass (say, a discriminator update) run without
    consuming an outer graph that is still being built.
    """
    prev = getattr(_tls, "tape", None)
    _tls.tape = Tape()
    try:
        yield _tls.tape
    finally:
        _tls.tape = prev


def _record(out: Tensor, backward_fn: Callable[[np.ndarray], None]) -> None:
    current_tape()._entries.append((out, backward_fn))


def _track(*inputs: Tensor) -> bool:
    return _recording() and any(t.requires_grad for t in inputs)


def _accum(t: Tensor, g: np.ndarray, owned: bool = True) -> None:
    # ``owned`` promises g is a fresh array this tensor may keep.  A shared
    # buffer (pass-through gradient of add/sub, broadcast view of a reduce)
    # is adopted as-is and only copied if a second contribution arrives, so
    # an aliased upstream buffer is never mutated.
    if t.grad is None:
        t.grad = g
        t._grad_owned = owned
    else:
        if not t._grad_owned:
            t.grad = t.grad.copy()
            t._grad_owned = True
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_check(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} do not broadcast") from None


# ----------------------------------------------------------------------
# binary elementwise
# ----------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check(a, b, "add")
    out = Tensor._result(a.data + b.data, _track(a, b))
    if out.requires_grad:
        def bwd(g):
            if a.requires_grad:
                ga = _unbroadcast(g, a.data.shape)
                _accum(a, ga, owned=ga is not g)
            if b.requires_grad:
                gb = _unbroadcast(g, b.data.shape)
                _accum(b, gb, owned=gb is not g)
        _record(out, bwd)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check(a, b, "sub")
    out = Tensor._result(a.data - b.data, _track(a, b))
    if out.requires_grad:
        def bwd(g):
            if a.requires_grad:
                ga = _unbroadcast(g, a.data.shape)
                _accum(a, ga, owned=ga is not g)
            if b.requires_grad:
                _accum(b, _unbroadcast(-g, b.data.shape))
        _record(out, bwd)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check(a, b, "mul")
    av, bv = a.data, b.data
    out = Tensor._result(av * bv, _track(a, b))
    if out.requires_grad:
        def bwd(g):
            if a.requires_grad:
                _accum(a, _unbroadcast(g * bv, a.data.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(g * av, b.data.shape))
        _record(out, bwd)
    return out


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor._result(x.data * c, _track(x))
    if out.requires_grad:
        def bwd(g):
            _accum(x, g * c)
        _record(out, bwd)
    return out


# ----------------------------------------------------------------------
# unary elementwise
# ----------------------------------------------------------------------

def square(x: Tensor) -> Tensor:
    xv = x.data
    out = Tensor._result(xv * xv, _track(x))
    if out.requires_grad:
        def bwd(g):
            _accum(x, 2.0 * xv * g)
        _record(out, bwd)
    return out


def sigmoid(x: Tensor) -> Tensor:
    y = expit(x.data)
    out = Tensor._result(y, _track(x))
    if out.requires_grad:
        def bwd(g):
            _accum(x, y * (1.0 - y) * g)
        _record(out, bwd)
    return out


def softplus(x: Tensor) -> Tensor:
    # log(1 + e^x) in the overflow-safe form; derivative is sigmoid(x).
    out = Tensor._result(np.logaddexp(0.0, x.data), _track(x))
    if out.requires_grad:
        s = expit(x.data)

        def bwd(g):
            _accum(x, s * g)
        _record(out, bwd)
    return out


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = Tensor._result(y, _track(x))
    if out.requires_grad:
        def bwd(g):
            _accum(x, (1.0 - y * y) * g)
        _record(out, bwd)
    return out


def sin(x: Tensor) -> Tensor:
    xv = x.data
    out = Tensor._result(np.sin(xv), _track(x))
    if out.requires_grad:
        def bwd(g):
            _accum(x, np.cos(xv) * g)
        _record(out, bwd)
    return out


def cos(x: Tensor) -> Tensor:
    xv = x.data
    out = Tensor._result(np.cos(xv), _track(x))
    if out.requires_grad:
        def bwd(g):
            _accum(x, -np.sin(xv) * g)
        _record(out, bwd)
    return out


def silu(x: Tensor) -> Tensor:
    xv = x.data
    s = expit(xv)
    out = Tensor._result(xv * s, _track(x))
    if out.requires_grad:
        def bwd(g):
            _accum(x, s * (1.0 + xv * (1.0 - s)) * g)
        _record(out, bwd)
    return out


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    xv = x.data
    mask = xv >= 0.0
    out = Tensor._result(np.where(mask, xv, slope * xv), _track(x))
    if out.requires_grad:
        def bwd(g):
            _accum(x, np.where(mask, 1.0, slope) * g)
        _record(out, bwd)
    return out


# ----------------------------------------------------------------------
# matmul and reductions
# ----------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.data.shape} @ {b.data.shape}")
    av, bv = a.data, b.data
    out = Tensor._result(av @ bv, _track(a, b))
    if out.requires_grad:
        def bwd(g):
            if a.requires_grad:
                _accum(a, g @ bv.T)
            if b.requires_grad:
                _accum(b, av.T @ g)
        _record(out, bwd)
    return out


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 2-D tensors along columns; backward splits the gradient."""
    if not parts:
        raise ShapeError("concat_cols needs at least one tensor")
    shapes = [p.data.shape for p in parts]
    if any(len(s) != 2 for s in shapes) or len({s[0] for s in shapes}) != 1:
        raise ShapeError(f"concat_cols needs 2-D tensors with equal row counts, got {shapes}")
    out = Tensor._result(np.concatenate([p.data for p in parts], axis=1), _track(*parts))
    if out.requires_grad:
        offsets = np.cumsum([0] + [s[1] for s in shapes])

        def bwd(g):
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                if p.requires_grad:
                    _accum(p, g[:, lo:hi].copy())
        _record(out, bwd)
    return out


def rows(x: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous row slice of a 2-D tensor (a view; inputs are never mutated)."""
    if x.data.ndim != 2:
        raise ShapeError(f"rows expects a 2-D tensor, got {x.data.shape}")
    if not 0 <= start < stop <= x.data.shape[0]:
        raise ShapeError(f"row range [{start}, {stop}) invalid for {x.data.shape}")
    out = Tensor._result(x.data[start:stop], _track(x))
    if out.requires_grad:
        def bwd(g):
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
                x._grad_owned = True
            elif not x._grad_owned:
                x.grad = x.grad.copy()
                x._grad_owned = True
            x.grad[start:stop] += g
        _record(out, bwd)
    return out


def _check_axis(x: Tensor, axis) -> None:
    if axis is not None and not (-x.data.ndim <= axis < x.data.ndim):
        raise ShapeError(f"axis {axis} invalid for shape {x.data.shape}")


def _expand(g: np.ndarray, shape: tuple, axis) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    return np.broadcast_to(np.expand_dims(g, axis), shape)


def tensor_sum(x: Tensor, axis=None) -> Tensor:
    _check_axis(x, axis)
    out = Tensor._result(x.data.sum(axis=axis), _track(x))
    if out.requires_grad:
        def bwd(g):
            _accum(x, _expand(g, x.data.shape, axis), owned=False)
        _record(out, bwd)
    return out


def mean(x: Tensor, axis=None) -> Tensor:
    _check_axis(x, axis)
    n = x.data.size if axis is None else x.data.shape[axis]
    out = Tensor._result(x.data.mean(axis=axis), _track(x))
    if out.requires_grad:
        def bwd(g):
            _accum(x, _expand(g, x.data.shape, axis) / n)
        _record(out, bwd)
    return out


def squared_l2_norm(x: Tensor, axis=None) -> Tensor:
    """Sum of squared entries, in full or along one axis."""
    _check_axis(x, axis)
    xv = x.data
    out = Tensor._result((xv * xv).sum(axis=axis), _track(x))
    if out.requires_grad:
        def bwd(g):
            _accum(x, 2.0 * xv * _expand(g, x.data.shape, axis))
        _record(out, bwd)
    return out


# ----------------------------------------------------------------------
# backward pass and the finite-difference oracle
# ----------------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Run the reverse pass from a scalar loss and free the tape.

    Every operation recorded on the calling thread's tape is visited exactly
    once, in reverse execution order; gradients accumulate into the ``grad``
    buffers of all ``requires_grad`` ancestors of ``loss``.
    """
    if loss.data.ndim != 0:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    tape = current_tape()
    if not tape._entries:
        raise RuntimeError("backward called with an empty tape")
    try:
        loss.grad = np.ones((), dtype=np.float64)
        for out, bwd in reversed(tape._entries):
            if out.grad is not None:
                bwd(out.grad)
    finally:
        tape.clear()


def finite_difference_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-6) -> float:
    """Max relative error between the analytic gradient of ``f`` and central
    differences, taken over every coordinate of ``x``.

    ``f`` must be scalar-valued and deterministic.  The relative error per
    coordinate is |analytic - numeric| / max(1, |analytic|).  Consumes the
    calling thread's tape.
    """
    probe = Tensor(x.data.copy(), requires_grad=True)
    out = f(probe)
    if out.data.ndim != 0:
        raise ValueError("finite_difference_check requires a scalar-valued function")
    if current_tape()._entries:
        backward(out)
    analytic = probe.grad if probe.grad is not None else np.zeros_like(probe.data)

    numeric = np.empty_like(probe.data)
    with no_grad():
        for idx in np.ndindex(probe.data.shape):
            orig = probe.data[idx]
            probe.data[idx] = orig + h
            fp = float(f(probe).data)
            probe.data[idx] = orig - h
            fm = float(f(probe).data)
            probe.data[idx] = orig
            numeric[idx] = (fp - fm) / (2.0 * h)

    denom = np.maximum(1.0, np.abs(analytic))
    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / denom))


ELEMENTWISE_OPS = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "scale": scale,
    "square": square,
    "sigmoid": sigmoid,
    "softplus": softplus,
    "tanh": tanh,
    "silu": silu,
    "leaky_relu": leaky_relu,
    "sin": sin,
    "cos": cos,
}

REDUCE_OPS = {
    "sum": tensor_sum,
    "mean": mean,
    "squared_l2_norm": squared_l2_norm,
}
