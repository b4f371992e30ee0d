# Tape-based reverse-mode differentiation over a numpy backend.
import contextlib

import numpy as np

from ..errors import NumericError

_state = {"dtype": np.float32, "tapes": []}


def default_dtype():
    return _state["dtype"]


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the dtype new tensors are built with."""
    prev = _state["dtype"]
    _state["dtype"] = np.dtype(dtype).type
    try:
        yield
    finally:
        _state["dtype"] = prev


def make_rng(seed=None):
    return np.random.default_rng(seed)


class Tensor:
    """Dense array plus an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype or default_dtype())
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __len__(self):
        return len(self.data)

    # operator sugar; implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis, keepdims)


class Parameter(Tensor):
    """A trainable leaf. Always requires grad."""

    __slots__ = ()

    def __init__(self, data, name=None, dtype=None):
        super().__init__(data, requires_grad=True, name=name, dtype=dtype)
        self.grad = np.zeros_like(self.data)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class _Record:
    __slots__ = ("out", "inputs", "vjp", "op")

    def __init__(self, out, inputs, vjp, op):
        self.out = out
        self.inputs = inputs
        self.vjp = vjp
        self.op = op


class Tape:
    """Ordered record of primitive operations executed while the tape is active.

    Ops are recorded only when at least one input requires grad. ``watch``
    registers parameters; after ``backward`` every watched parameter holds a
    gradient, exactly zero when the loss does not depend on it.
    """

    def __init__(self, params=()):
        self.records = []
        self.watched = {}
        self.watch(params)

    def watch(self, params):
        if isinstance(params, dict):
            params = params.values()
        for p in params:
            self.watched[id(p)] = p
        return self

    def __enter__(self):
        _state["tapes"].append(self)
        return self

    def __exit__(self, *exc):
        _state["tapes"].remove(self)

    def record(self, out, inputs, vjp, op=""):
        self.records.append(_Record(out, inputs, vjp, op))

    def backward(self, loss, seed=None):
        """Replay the tape in reverse and accumulate into ``.grad`` of leaves."""
        if not np.all(np.isfinite(loss.data)):
            raise NumericError(f"non-finite loss {loss.data!r}")
        grads = {id(loss): np.ones_like(loss.data) if seed is None else np.asarray(seed, loss.dtype)}
        produced = set()
        for rec in reversed(self.records):
            produced.add(id(rec.out))
            g = grads.pop(id(rec.out), None)
            if g is None:
                continue
            in_grads = rec.vjp(g)
            for t, gi in zip(rec.inputs, in_grads):
                if gi is None or not isinstance(t, Tensor) or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        leaves = {}
        for rec in self.records:
            for t in rec.inputs:
                if isinstance(t, Tensor) and t.requires_grad and id(t) not in produced:
                    leaves[id(t)] = t
        leaves.update(self.watched)
        for key, t in leaves.items():
            if t.grad is None or t.grad.shape != t.data.shape:
                t.grad = np.zeros_like(t.data)
            g = grads.get(key)
            if g is not None:
                t.grad = t.grad + g.astype(t.data.dtype, copy=False)
        return grads.get(id(loss))

    def gradient(self, loss, tensors):
        """Return d loss / d t for each t without touching ``.grad``."""
        saved = [t.grad for t in tensors]
        for t in tensors:
            t.grad = np.zeros_like(t.data)
        try:
            self.backward(loss)
            return [t.grad for t in tensors]
        finally:
            for t, s in zip(tensors, saved):
                t.grad = s


def active_tape():
    tapes = _state["tapes"]
    return tapes[-1] if tapes else None


@contextlib.contextmanager
def no_grad():
    saved = _state["tapes"]
    _state["tapes"] = []
    try:
        yield
    finally:
        _state["tapes"] = saved


def make_op(op, out_data, inputs, vjp):
    """Wrap a forward result and record it on the active tape if needed."""
    out = Tensor(out_data, dtype=out_data.dtype if isinstance(out_data, np.ndarray) else None)
    tape = active_tape()
    if tape is not None and any(isinstance(t, Tensor) and t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, inputs, vjp, op)
    return out
