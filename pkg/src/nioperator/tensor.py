"""Dense float64 tensors with tape-based reverse-mode automatic differentiation."""

from __future__ import annotations

import itertools
from collections.abc import Callable, Iterator, Mapping
from contextvars import ContextVar, Token
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.special import expit

from .errors import DimensionError, NumericalOverflowError, UsageError


BackwardFn = Callable[[np.ndarray], tuple[np.ndarray | None, ...]]

_node_ids = itertools.count(1)
_active_tape: ContextVar[Tape | None] = ContextVar("nioperator_active_tape", default=None)


class Tensor:
    """Dense n-dimensional float64 array that can take part in a gradient tape.

    Tensors are immutable: every operation returns a new Tensor. Leaves created
    with ``requires_grad=True`` receive a node id; results of operations receive
    one only when they are recorded on the active tape.
    """

    __array_priority__ = 100

    def __init__(self, data: Any, requires_grad: bool = False) -> None:
        array = np.array(data, dtype=np.float64)
        array.flags.writeable = False
        self.data = array
        self.requires_grad = requires_grad
        self.node_id: int | None = next(_node_ids) if requires_grad else None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}, node_id={self.node_id})"

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
    def T(self) -> Tensor:
        return transpose(self)

    def numpy(self) -> np.ndarray:
        """Return a writable copy of the underlying data."""
        return np.array(self.data)

    def item(self) -> float:
        if self.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __add__(self, other: Any) -> Tensor:
        return add(self, other)

    def __radd__(self, other: Any) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Any) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: Any) -> Tensor:
        return sub(other, self)

    def __mul__(self, other: Any) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: Any) -> Tensor:
        return mul(other, self)

    def __truediv__(self, other: Any) -> Tensor:
        return div(self, other)

    def __neg__(self) -> Tensor:
        return neg(self)

    def __matmul__(self, other: Any) -> Tensor:
        return matmul(self, other)

    def reshape(self, *shape: int | tuple[int, ...]) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, tuple(shape))

    def sum(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def exp(self) -> Tensor:
        return exp(self)

    def log(self) -> Tensor:
        return log(self)

    def tanh(self) -> Tensor:
        return tanh(self)


@dataclass(frozen=True)
class TapeEntry:
    """One recorded operation: kind, input node ids, output node id and its backward rule."""

    kind: str
    input_ids: tuple[int | None, ...]
    output_id: int
    backward: BackwardFn


class Gradients(Mapping[int, Tensor]):
    """Gradient map keyed by node id; also accepts the Tensor itself as key."""

    def __init__(self, grads: dict[int, np.ndarray]):
        self._grads = grads

    def __getitem__(self, key: int | Tensor) -> Tensor:
        node_id = key.node_id if isinstance(key, Tensor) else key
        if node_id is None:
            raise KeyError("tensor does not require gradients")
        return Tensor(self._grads[node_id])

    def __iter__(self) -> Iterator[int]:
        return iter(self._grads)

    def __len__(self) -> int:
        return len(self._grads)

    def wrt(self, tensor: Tensor) -> np.ndarray:
        """Gradient with respect to ``tensor`` as an array; zeros when the loss does not depend on it."""
        if tensor.node_id is None or tensor.node_id not in self._grads:
            return np.zeros(tensor.shape)
        return np.array(self._grads[tensor.node_id])


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager: operations executed inside ``with Tape() as tape:``
    on tensors requiring gradients are recorded on it. The tape belongs to the
    thread (context) that entered it.
    """

    def __init__(self) -> None:
        self.entries: list[TapeEntry] = []
        self._outputs: set[int] = set()
        self._token: Token | None = None

    def __enter__(self) -> Tape:
        if self._token is not None:
            raise UsageError("tape is already active")
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc_info: object) -> None:
        _active_tape.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, entry: TapeEntry) -> None:
        self.entries.append(entry)
        self._outputs.add(entry.output_id)

    def clear(self) -> None:
        """Drop every recorded entry."""
        self.entries.clear()
        self._outputs.clear()

    def backward(self, loss: Tensor) -> Gradients:
        """Propagate d(loss)/d(node) through the tape in reverse order.

        Args:
            loss: Scalar tensor produced on this tape (or a leaf requiring gradients)

        Returns:
            Gradients for every node reached from the loss
        """
        if loss.size != 1:
            raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.node_id is None or not (loss.node_id in self._outputs or loss.requires_grad):
            raise UsageError("loss is not recorded on this tape")

        grads: dict[int, np.ndarray] = {loss.node_id: np.ones(loss.shape)}
        for entry in reversed(self.entries):
            grad_out = grads.get(entry.output_id)
            if grad_out is None:
                continue
            for node_id, grad_in in zip(entry.input_ids, entry.backward(grad_out)):
                if node_id is None or grad_in is None:
                    continue
                if node_id in grads:
                    grads[node_id] = grads[node_id] + grad_in
                else:
                    grads[node_id] = grad_in
        return Gradients(grads)


def active_tape() -> Tape | None:
    return _active_tape.get()


def backward(loss: Tensor) -> Gradients:
    """Backpropagate ``loss`` through the currently active tape."""
    tape = _active_tape.get()
    if tape is None:
        raise UsageError("backward called outside an active tape")
    return tape.backward(loss)


def as_tensor(value: Any) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _apply(kind: str, inputs: tuple[Tensor, ...], out: np.ndarray, backward_fn: BackwardFn) -> Tensor:
    if not np.all(np.isfinite(out)):
        raise NumericalOverflowError(f"{kind} produced non-finite values")
    tape = _active_tape.get()
    track = tape is not None and any(t.requires_grad for t in inputs)
    result = Tensor(out, requires_grad=track)
    if track:
        tape.record(TapeEntry(
            kind=kind,
            input_ids=tuple(t.node_id if t.requires_grad else None for t in inputs),
            output_id=result.node_id,
            backward=backward_fn,
        ))
    return result


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(kind: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise DimensionError(f"{kind}: cannot broadcast shapes {a.shape} and {b.shape}") from e


def add(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _apply(
        "add", (a, b), a.data + b.data,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return _apply(
        "sub", (a, b), a.data - b.data,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    return _apply(
        "mul", (a, b), a.data * b.data,
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data
    return _apply(
        "div", (a, b), out,
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def neg(a: Tensor) -> Tensor:
    return _apply("neg", (a,), -a.data, lambda g: (-g,))


def matmul(a: Any, b: Any) -> Tensor:
    """Matrix product of two 2-D tensors.

    Args:
        a: Tensor of shape [m x k]
        b: Tensor of shape [k x n]

    Returns:
        Tensor of shape [m x n]
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return _apply(
        "matmul", (a, b), a.data @ b.data,
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise DimensionError(f"transpose needs a 2-D tensor, got shape {a.shape}")
    return _apply("transpose", (a,), a.data.T, lambda g: (g.T,))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"cannot reshape {a.shape} into {shape}") from e
    return _apply("reshape", (a,), out, lambda g: (g.reshape(a.shape),))


def _expand_reduced(g: np.ndarray, shape: tuple[int, ...], axis: int | None, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def tensor_sum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    return _apply(
        "sum", (a,), a.data.sum(axis=axis, keepdims=keepdims),
        lambda g: (_expand_reduced(g, a.shape, axis, keepdims),),
    )


def tensor_mean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    return _apply(
        "mean", (a,), a.data.mean(axis=axis, keepdims=keepdims),
        lambda g: (_expand_reduced(g, a.shape, axis, keepdims) / count,),
    )


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _apply("exp", (a,), out, lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _apply("log", (a,), out, lambda g: (g / a.data,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _apply("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = expit(a.data)
    return _apply("sigmoid", (a,), out, lambda g: (g * out * (1.0 - out),))


def softplus(a: Tensor) -> Tensor:
    """log(1 + e^x), evaluated without overflow."""
    return _apply("softplus", (a,), np.logaddexp(0.0, a.data), lambda g: (g * expit(a.data),))


def tensor_abs(a: Tensor) -> Tensor:
    # subgradient +1 at the kink
    return _apply("abs", (a,), np.abs(a.data), lambda g: (g * np.where(a.data >= 0.0, 1.0, -1.0),))


def square(a: Tensor) -> Tensor:
    return _apply("square", (a,), a.data * a.data, lambda g: (2.0 * g * a.data,))


def _check_axis(a: Tensor, axis: int) -> None:
    if not -a.ndim <= axis < a.ndim:
        raise UsageError(f"axis {axis} out of range for shape {a.shape}")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis`` (max-subtracted)."""
    _check_axis(x, axis)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    return _apply(
        "softmax", (x,), out,
        lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),),
    )


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_axis(x, axis)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    probs = np.exp(out)
    return _apply(
        "log_softmax", (x,), out,
        lambda g: (g - probs * g.sum(axis=axis, keepdims=True),),
    )


def repeat_rows(x: Tensor, repeats: int) -> Tensor:
    """Repeat every row of a 2-D tensor ``repeats`` times consecutively."""
    if x.ndim != 2:
        raise DimensionError(f"repeat_rows needs a 2-D tensor, got shape {x.shape}")
    if repeats < 1:
        raise UsageError(f"repeats must be >= 1, got {repeats}")
    n, d = x.shape
    return _apply(
        "repeat_rows", (x,), np.repeat(x.data, repeats, axis=0),
        lambda g: (g.reshape(n, repeats, d).sum(axis=1),),
    )


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor | np.ndarray, eps: float = 1e-5) -> float:
    """Compare tape gradients of a scalar function with central differences.

    Args:
        f: Deterministic scalar function of one tensor
        x: Point at which to compare
        eps: Finite-difference step

    Returns:
        max over coordinates of |analytic - numeric| / (|analytic| + |numeric| + 1e-12)
    """
    if eps <= 0:
        raise UsageError(f"eps must be positive, got {eps}")
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)

    with Tape() as tape:
        leaf = Tensor(base, requires_grad=True)
        analytic = tape.backward(f(leaf)).wrt(leaf)

    numeric = np.empty_like(base)
    for index in np.ndindex(base.shape):
        plus = base.copy()
        plus[index] += eps
        minus = base.copy()
        minus[index] -= eps
        numeric[index] = (f(Tensor(plus)).item() - f(Tensor(minus)).item()) / (2.0 * eps)

    if base.size == 0:
        return 0.0
    rel = np.abs(analytic - numeric) / (np.abs(analytic) + np.abs(numeric) + 1e-12)
    return float(rel.max())
