"""Tape-based reverse-mode differentiation over float64 numpy arrays.

The engine is deliberately small: a `Tensor` wraps a contiguous float64
array, and while a `Tape` is active every primitive appends (output,
inputs, vjp) to an ordered record. Replaying the record in reverse
accumulates adjoints, which is all that is needed to differentiate an
unrolled flow plus its losses with respect to thousands of parameters.
Backward closures work on raw arrays, so nothing is recorded during the
backward sweep itself.
"""

from __future__ import annotations

import threading

import numpy as np

from ..exceptions import DimensionError, NotOnTapeError

_local = threading.local()


def _active_tape():
    return getattr(_local, "tape", None)


class Tensor:
    """Dense float64 value, recorded on the active tape when one exists."""

    __slots__ = ("data",)

    def __init__(self, data):
        self.data = np.ascontiguousarray(data, dtype=np.float64)

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
    def T(self):
        return transpose(self)

    def item(self):
        return float(self.data.reshape(()))

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return _add(self, other)

    def __sub__(self, other):
        return _sub(self, other)

    def __neg__(self):
        return _scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return _mul(self, other)
        return _scale(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not a recorded primitive")
        return _scale(self, 1.0 / float(other))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


class Tape:
    """Ordered record of primitive applications for one differentiation pass.

    Use as a context manager around the forward computation, then call
    :meth:`gradient` on the scalar loss. The record is cleared by
    ``gradient`` (and the tape may then be reused).
    """

    def __init__(self):
        self._entries = []
        self._produced = set()

    def __enter__(self):
        if _active_tape() is not None:
            raise RuntimeError("a tape is already recording on this thread")
        _local.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _local.tape = None
        return False

    def _record(self, out, inputs, vjp):
        self._entries.append((out, inputs, vjp))
        self._produced.add(id(out))

    def gradient(self, loss, leaves):
        """Return d(loss)/d(leaf) for every leaf, then clear the record.

        `loss` must be a scalar produced while this tape was recording.
        Leaves that do not lie on any path to the loss get an exact zero
        gradient of their own shape.
        """
        if loss.size != 1:
            raise DimensionError(f"loss must be scalar, got shape {loss.shape}")
        if id(loss) not in self._produced:
            raise NotOnTapeError("loss was not produced while this tape was recording")
        leaves = list(leaves)
        adjoint = {id(loss): np.ones_like(loss.data)}
        try:
            for out, inputs, vjp in reversed(self._entries):
                g = adjoint.pop(id(out), None)
                if g is None:
                    continue
                for tensor, piece in zip(inputs, vjp(g)):
                    if piece is None:
                        continue
                    held = adjoint.get(id(tensor))
                    adjoint[id(tensor)] = piece if held is None else held + piece
            return {
                leaf: Tensor(adjoint.get(id(leaf), np.zeros_like(leaf.data)))
                for leaf in leaves
            }
        finally:
            self._entries.clear()
            self._produced.clear()


def grad(loss, leaves):
    """Differentiate `loss` w.r.t. `leaves` using the currently active tape."""
    tape = _active_tape()
    if tape is None:
        raise NotOnTapeError("no tape is recording; wrap the computation in `with Tape():`")
    return tape.gradient(loss, leaves)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(out, inputs, vjp):
    tape = _active_tape()
    if tape is not None:
        tape._record(out, inputs, vjp)
    return out


def custom_op(value, inputs, vjp):
    """Record an externally computed primitive.

    `vjp(g)` must return one cotangent array (or None) per input, matching
    the order of `inputs`. Used by operations whose backward rule is coded
    by hand (kernel discrepancies, entropic-transport envelopes).
    """
    return _emit(Tensor(value), tuple(inputs), vjp)


def _unbroadcast(g, shape):
    """Sum `g` down to `shape`, undoing numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def matmul(a, b):
    """Matrix product of two rank-2 tensors."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    out = Tensor(ad @ bd)
    return _emit(out, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def transpose(a):
    a = _as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose needs a rank-2 tensor, got shape {a.shape}")
    out = Tensor(a.data.T)
    return _emit(out, (a,), lambda g: (np.ascontiguousarray(g.T),))


def _add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = Tensor(a.data + b.data)
    except ValueError as err:
        raise DimensionError(f"add: incompatible shapes {a.shape} and {b.shape}") from err
    ash, bsh = a.shape, b.shape
    return _emit(out, (a, b), lambda g: (_unbroadcast(g, ash), _unbroadcast(g, bsh)))


def _sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = Tensor(a.data - b.data)
    except ValueError as err:
        raise DimensionError(f"sub: incompatible shapes {a.shape} and {b.shape}") from err
    ash, bsh = a.shape, b.shape
    return _emit(out, (a, b), lambda g: (_unbroadcast(g, ash), _unbroadcast(-g, bsh)))


def _mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = Tensor(a.data * b.data)
    except ValueError as err:
        raise DimensionError(f"mul: incompatible shapes {a.shape} and {b.shape}") from err
    ad, bd = a.data, b.data
    ash, bsh = a.shape, b.shape
    return _emit(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ash), _unbroadcast(g * ad, bsh)),
    )


def _scale(a, s):
    a = _as_tensor(a)
    out = Tensor(a.data * s)
    return _emit(out, (a,), lambda g: (g * s,))


def tanh(a):
    a = _as_tensor(a)
    out = Tensor(np.tanh(a.data))
    od = out.data
    return _emit(out, (a,), lambda g: (g * (1.0 - od * od),))


def abs_power(a, p):
    """Elementwise |x|**p for p >= 1, with the p=1 subgradient 0 at 0."""
    a = _as_tensor(a)
    p = float(p)
    if p < 1.0:
        raise ValueError(f"abs_power requires p >= 1, got {p}")
    ad = a.data
    if p == 2.0:
        out = Tensor(ad * ad)
        return _emit(out, (a,), lambda g: (g * (2.0 * ad),))
    if p == 1.0:
        out = Tensor(np.abs(ad))
        return _emit(out, (a,), lambda g: (g * np.sign(ad),))
    out = Tensor(np.abs(ad) ** p)
    return _emit(
        out,
        (a,),
        lambda g: (g * (p * np.sign(ad) * np.abs(ad) ** (p - 1.0)),),
    )


def tensor_sum(a):
    """Sum of all entries, as a scalar tensor."""
    a = _as_tensor(a)
    shape = a.shape
    out = Tensor(np.sum(a.data))
    return _emit(out, (a,), lambda g: (np.broadcast_to(g, shape),))


def tensor_mean(a):
    a = _as_tensor(a)
    return _scale(tensor_sum(a), 1.0 / a.size)
