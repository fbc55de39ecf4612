"""Define-by-run reverse-mode automatic differentiation over numpy arrays.

Every op on :class:`Tensor` returns a new tensor; when any input requires a
gradient the result carries a :class:`TapeNode` linking back to its inputs.
:func:`backward` walks that graph from a scalar root.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

_GRAD_ENABLED = True


class ShapeError(ValueError):
    """Raised when op inputs have incompatible shapes."""


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class TapeNode:
    __slots__ = ("op_kind", "inputs", "saved_ctx", "backward_rule")

    def __init__(self, op_kind, inputs, saved_ctx, backward_rule):
        self.op_kind = op_kind
        self.inputs = inputs
        self.saved_ctx = saved_ctx
        self.backward_rule = backward_rule

    def __repr__(self):
        return f"TapeNode({self.op_kind}, n_inputs={len(self.inputs)})"


class Tensor:
    """Dense float64 array that can take part in gradient computation."""

    __slots__ = ("data", "grad", "requires_grad", "node", "name", "__weakref__")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.node = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None if self.grad is None else np.zeros_like(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{tag}{flag})"

    def __len__(self):
        return self.data.shape[0]

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return index_select(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sigmoid(self):
        return sigmoid(self)

    def tanh(self):
        return tanh(self)

    def log(self):
        return log(self)

    def exp(self):
        return exp(self)

    def square(self):
        return square(self)

    def abs(self):
        return abs_(self)


class Parameter(Tensor):
    """A named leaf tensor that always accumulates gradients."""

    __slots__ = ()

    def __init__(self, data, name: str = ""):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True, name=name)
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(kind, out, inputs, rule, ctx=None, check=True) -> Tensor:
    if check and not np.isfinite(out).all():
        shapes = ", ".join(str(t.shape) for t in inputs)
        raise FloatingPointError(f"{kind} produced non-finite values (inputs {shapes})")
    t = Tensor.__new__(Tensor)
    t.data = out
    t.grad = None
    t.name = None
    t.node = None
    needs = _GRAD_ENABLED and any(i.requires_grad for i in inputs)
    t.requires_grad = needs
    if needs:
        t.node = TapeNode(kind, tuple(inputs), ctx if ctx is not None else {}, rule)
    return t


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_check(kind, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- binary ops

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)

    def rule(g, ctx, ins):
        return _unbroadcast(g, ins[0].shape), _unbroadcast(g, ins[1].shape)

    return _record("add", a.data + b.data, (a, b), rule)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("sub", a, b)

    def rule(g, ctx, ins):
        return _unbroadcast(g, ins[0].shape), _unbroadcast(-g, ins[1].shape)

    return _record("sub", a.data - b.data, (a, b), rule)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("mul", a, b)

    def rule(g, ctx, ins):
        x, y = ins
        return _unbroadcast(g * y.data, x.shape), _unbroadcast(g * x.data, y.shape)

    return _record("mul", a.data * b.data, (a, b), rule)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("div", a, b)

    def rule(g, ctx, ins):
        x, y = ins
        return (
            _unbroadcast(g / y.data, x.shape),
            _unbroadcast(-g * x.data / (y.data * y.data), y.shape),
        )

    return _record("div", a.data / b.data, (a, b), rule)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def rule(g, ctx, ins):
        x, y = ins
        gx = g @ y.data.T if x.requires_grad else None
        gy = x.data.T @ g if y.requires_grad else None
        return gx, gy

    return _record("matmul", a.data @ b.data, (a, b), rule)


# ---------------------------------------------------------------- unary ops

def neg(a) -> Tensor:
    a = as_tensor(a)
    return _record("neg", -a.data, (a,), lambda g, ctx, ins: (-g,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))

    def rule(g, ctx, ins):
        y = ctx["out"]
        return (g * y * (1.0 - y),)

    return _record("sigmoid", out, (a,), rule, {"out": out})


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)

    def rule(g, ctx, ins):
        y = ctx["out"]
        return (g * (1.0 - y * y),)

    return _record("tanh", out, (a,), rule, {"out": out})


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _record("exp", out, (a,), lambda g, ctx, ins: (g * ctx["out"],), {"out": out})


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _record("log", out, (a,), lambda g, ctx, ins: (g / ins[0].data,))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _record("square", a.data * a.data, (a,), lambda g, ctx, ins: (2.0 * g * ins[0].data,))


def abs_(a) -> Tensor:
    a = as_tensor(a)
    return _record("abs", np.abs(a.data), (a,), lambda g, ctx, ins: (g * np.sign(ins[0].data),))


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def rule(g, ctx, ins):
        y = ctx["out"]
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _record("softmax", out, (a,), rule, {"out": out})


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def rule(g, ctx, ins):
        p = np.exp(ctx["out"])
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _record("log_softmax", out, (a,), rule, {"out": out})


# ---------------------------------------------------------------- reductions

def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))

    def rule(g, ctx, ins):
        shape = ins[0].shape
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record("sum", out, (a,), rule)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = np.asarray(a.data.mean(axis=axis, keepdims=keepdims))
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[i] for i in axes]))

    def rule(g, ctx, ins):
        shape = ins[0].shape
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, shape).copy(),)

    return _record("mean", out, (a,), rule)


def max_(a, axis: int = -1) -> Tensor:
    """Maximum over one axis; the gradient goes to the first maximal entry."""
    a = as_tensor(a)
    idx = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def rule(g, ctx, ins):
        full = np.zeros_like(ins[0].data)
        np.put_along_axis(full, np.expand_dims(ctx["argmax"], axis), np.expand_dims(g, axis), axis=axis)
        return (full,)

    return _record("max", out, (a,), rule, {"argmax": idx})


# ---------------------------------------------------------------- structure

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {shape}") from None
    return _record("reshape", out, (a,), lambda g, ctx, ins: (g.reshape(ins[0].shape),), check=False)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        shapes = [t.shape for t in ts]
        raise ShapeError(f"concat: incompatible shapes {shapes} along axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def rule(g, ctx, ins):
        return tuple(np.split(g, bounds, axis=axis))

    return _record("concat", out, ts, rule, check=False)


def index_select(a, index) -> Tensor:
    """Basic slicing or fancy gather; backward scatters with accumulation."""
    a = as_tensor(a)
    try:
        out = a.data[index]
    except (IndexError, ValueError) as exc:
        raise ShapeError(f"slice/gather on shape {a.shape}: {exc}") from None
    kind = "gather" if _is_fancy(index) else "slice"
    out = np.array(out, dtype=np.float64, copy=kind == "slice")

    def rule(g, ctx, ins):
        full = np.zeros_like(ins[0].data)
        np.add.at(full, index, g)
        return (full,)

    return _record(kind, out, (a,), rule, check=False)


def gather(a, *index_arrays) -> Tensor:
    """Fancy-index gather, e.g. ``gather(t, rows, cols)`` for ``t[rows, cols]``."""
    return index_select(a, tuple(np.asarray(i) for i in index_arrays))


def _is_fancy(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (np.ndarray, list)) for i in items)


# ---------------------------------------------------------------- custom gradients

def straight_through(x, value: np.ndarray, local_grad: np.ndarray, kind: str = "custom_unary",
                     ctx: dict | None = None) -> Tensor:
    """Emit ``value`` forward while backprop multiplies by ``local_grad``.

    The caller computes both arrays from ``x``; ``ctx`` is stored verbatim
    on the tape node (noise draws live there).
    """
    x = as_tensor(x)
    value = np.asarray(value, dtype=np.float64)
    local_grad = np.asarray(local_grad, dtype=np.float64)
    if value.shape != x.shape or local_grad.shape != x.shape:
        raise ShapeError(f"{kind}: forward {value.shape} / grad {local_grad.shape} vs input {x.shape}")
    saved = dict(ctx or {})
    saved["local_grad"] = local_grad

    def rule(g, c, ins):
        return (g * c["local_grad"],)

    return _record(kind, value, (x,), rule, saved)


def custom_unary(x, forward_fn: Callable, surrogate_grad_fn: Callable, noise=None,
                 kind: str = "custom_unary") -> Tensor:
    """Elementwise op with a forward function and a separate surrogate derivative.

    ``forward_fn(x, noise)`` gives the output values, ``surrogate_grad_fn(x, noise)``
    the derivative of the surrogate used in backprop. Both see the same noise.
    """
    x = as_tensor(x)
    value = forward_fn(x.data, noise)
    local = surrogate_grad_fn(x.data, noise)
    return straight_through(x, value, local, kind, {"noise": noise})


FORWARD_OPS = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "matmul": matmul,
    "concat": lambda *ts, axis=-1: concat(ts, axis=axis),
    "slice": index_select,
    "sum": sum_,
    "mean": mean,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "softmax": softmax,
    "log_softmax": log_softmax,
    "log": log,
    "exp": exp,
    "square": square,
    "abs": abs_,
    "max": max_,
    "gather": gather,
    "neg": neg,
    "reshape": reshape,
}


def forward_op(kind: str, *inputs, **kwargs) -> Tensor:
    try:
        fn = FORWARD_OPS[kind]
    except KeyError:
        raise ValueError(f"unknown op kind {kind!r}") from None
    return fn(*inputs, **kwargs)


# ---------------------------------------------------------------- backward

def backward_order(root: Tensor, rng: np.random.Generator | None = None) -> list:
    """Tensors reachable from ``root`` in an order where consumers precede inputs.

    With ``rng`` a random valid order is drawn (used to check that gradient
    accumulation does not depend on traversal order).
    """
    consumers: dict = {}
    seen = {id(root): root}
    stack = [root]
    while stack:
        t = stack.pop()
        if t.node is None:
            continue
        for parent in t.node.inputs:
            if not parent.requires_grad:
                continue
            consumers[id(parent)] = consumers.get(id(parent), 0) + 1
            if id(parent) not in seen:
                seen[id(parent)] = parent
                stack.append(parent)

    order = []
    ready = [root]
    while ready:
        pick = int(rng.integers(len(ready))) if rng is not None else len(ready) - 1
        t = ready.pop(pick)
        order.append(t)
        if t.node is None:
            continue
        for parent in t.node.inputs:
            if not parent.requires_grad:
                continue
            consumers[id(parent)] -= 1
            if consumers[id(parent)] == 0:
                ready.append(parent)
    return order


def backward(root: Tensor, order: list | None = None):
    """Accumulate d(root)/d(leaf) into ``.grad`` of every reachable leaf."""
    if root.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    if order is None:
        order = backward_order(root)
    grads = {id(root): np.ones_like(root.data)}
    for t in order:
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t.node is None:
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            t.grad += g
            continue
        parent_grads = t.node.backward_rule(g, t.node.saved_ctx, t.node.inputs)
        for parent, pg in zip(t.node.inputs, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
