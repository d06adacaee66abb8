"""Dense tensors with reverse-mode automatic differentiation.

Every differentiable operation records itself on the implicit tape: the
output tensor keeps references to its inputs (``_prev``) and a closure
(``_backward``) that pushes the output gradient to them.  ``backward()``
replays the tape in reverse topological order, visiting each node once.

Two precision modes are supported: float64 (verification default) and
float32 (training default).  ``set_default_dtype`` switches the dtype used
for newly created tensors; existing tensors keep theirs.
"""

from __future__ import annotations

import numpy as np

from . import flops
from .errors import NonFiniteError, ShapeError

_DTYPES = {"f32": np.float32, "f64": np.float64}
_default_dtype = np.float64

# When False, elementwise finiteness validation of op outputs is skipped
# (creation-time checks still run).  Kept on by default: NaN/Inf must never
# propagate silently.
strict_finite = True


def set_default_dtype(dtype) -> None:
    """Set the dtype used for new tensors: "f32", "f64", or a numpy dtype."""
    global _default_dtype
    if isinstance(dtype, str):
        if dtype not in _DTYPES:
            raise ValueError(f"unknown precision {dtype!r}; expected 'f32' or 'f64'")
        _default_dtype = _DTYPES[dtype]
    elif np.dtype(dtype) in (np.dtype(np.float32), np.dtype(np.float64)):
        _default_dtype = np.dtype(dtype).type
    else:
        raise ValueError(f"unsupported dtype {dtype!r}")


def default_dtype():
    return _default_dtype


_grad_enabled = True


class no_grad:
    """Context manager that disables tape recording."""

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


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{what} contains non-finite values")


class Tensor:
    """Dense rank-N array with optional gradient tracking.

    Data is immutable after construction except through designated in-place
    parameter updates (optimizer steps); concurrent reads are safe.
    """

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev", "_op")

    def __init__(self, data, requires_grad: bool = False, _prev=(), _op: str = "leaf"):
        arr = np.asarray(data)
        if not isinstance(data, np.ndarray) or arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(_default_dtype)
        if _op == "leaf":
            _check_finite(arr, "tensor data")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._backward = None
        self._prev = _prev
        self._op = _op

    # ---------------------------------------------------------------- info
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
        return float(self.data)

    def __repr__(self):
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self._op!r}{grad})"

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    # -------------------------------------------------------------autograd
    def backward(self) -> None:
        """Accumulate gradients of this scalar into all requires_grad leaves."""
        if self.data.size != 1:
            raise ShapeError(
                f"backward requires a scalar root, got shape {self.shape}"
            )
        order = topo_order(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # ------------------------------------------------------------ operators
    def __add__(self, other):
        return _binary(self, other, "add")

    __radd__ = __add__

    def __mul__(self, other):
        return _binary(self, other, "mul")

    __rmul__ = __mul__

    def __sub__(self, other):
        return _binary(self, other, "sub")

    def __rsub__(self, other):
        return _binary(_wrap(other, self.dtype), self, "sub")

    def __truediv__(self, other):
        return _binary(self, other, "div")

    def __rtruediv__(self, other):
        return _binary(_wrap(other, self.dtype), self, "div")

    def __neg__(self):
        out = make_op(-self.data, (self,), "neg")
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(-g)
        return out

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("only scalar exponents are supported")
        out = make_op(self.data**p, (self,), f"pow{p}")
        if out.requires_grad:
            x = self.data

            def bw(g):
                self._accumulate(g * p * x ** (p - 1))

            out._backward = bw
        return out

    def exp(self):
        out = make_op(np.exp(self.data), (self,), "exp")
        if out.requires_grad:
            y = out.data
            out._backward = lambda g: self._accumulate(g * y)
        return out

    def log(self):
        out = make_op(np.log(self.data), (self,), "log")
        if out.requires_grad:
            x = self.data
            out._backward = lambda g: self._accumulate(g / x)
        return out

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        out = make_op(self.data.reshape(shape), (self,), "reshape")
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g.reshape(old))
        return out

    def sum(self, axis=None, keepdims: bool = False):
        out = make_op(self.data.sum(axis=axis, keepdims=keepdims), (self,), "sum")
        if out.requires_grad:
            shape = self.shape

            def bw(g):
                if axis is None:
                    self._accumulate(np.broadcast_to(g, shape).copy())
                    return
                axes = axis if isinstance(axis, tuple) else (axis,)
                if not keepdims:
                    g = np.expand_dims(g, axes)
                self._accumulate(np.broadcast_to(g, shape).copy())

            out._backward = bw
        return out

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            n = self.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            n = 1
            for a in axes:
                n *= self.shape[a]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)


def _wrap(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce gradient g of a broadcast result back to `shape` by summing
    over the stretched axes."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _binary(a: Tensor, b, kind: str) -> Tensor:
    b = _wrap(b, a.dtype)
    try:
        if kind == "add":
            data = a.data + b.data
        elif kind == "sub":
            data = a.data - b.data
        elif kind == "mul":
            data = a.data * b.data
        else:
            data = a.data / b.data
    except ValueError as e:
        raise ShapeError(
            f"cannot {kind} shapes {a.shape} and {b.shape}: {e}"
        ) from None
    flops.add("elementwise", data.size)
    out = make_op(data, (a, b), kind)
    if not out.requires_grad:
        return out

    if kind == "add":

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.shape))

    elif kind == "sub":

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g, b.shape))

    elif kind == "mul":

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.shape))

    else:

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g / b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    out._backward = bw
    return out


def make_op(data: np.ndarray, inputs: tuple, op: str) -> Tensor:
    """Create the output tensor of a differentiable op on the tape."""
    if strict_finite:
        if not np.all(np.isfinite(data)):
            raise NonFiniteError(f"op {op!r} produced non-finite values")
    req = _grad_enabled and any(t.requires_grad for t in inputs)
    prev = tuple(inputs) if req else ()
    return Tensor(data, requires_grad=req, _prev=prev, _op=op)


def topo_order(root: Tensor) -> list[Tensor]:
    """Tape order: every tensor appears after all producers of its inputs."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for child in node._prev:
            if id(child) not in visited:
                stack.append((child, False))
    return order


# --------------------------------------------------------------- creation
def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    arr = np.asarray(data, dtype=dtype if dtype is not None else _default_dtype)
    return Tensor(arr, requires_grad=requires_grad)


def zeros(*shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=_default_dtype), requires_grad=requires_grad)


def ones(*shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape, dtype=_default_dtype), requires_grad=requires_grad)


def full(shape, value, requires_grad: bool = False) -> Tensor:
    return Tensor(np.full(shape, value, dtype=_default_dtype), requires_grad=requires_grad)


def randn(*shape, rng: np.random.Generator, requires_grad: bool = False) -> Tensor:
    return Tensor(
        rng.standard_normal(shape).astype(_default_dtype), requires_grad=requires_grad
    )
