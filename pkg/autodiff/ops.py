"""
Primitive differentiable operations.

Each primitive is a `Function` subclass with a shape check, a numpy forward
and a vector-Jacobian product. `Function.apply` validates shapes, runs the
forward and records a node on the active graph when an input requires grad.
Without an active graph the operations just compute (inference mode).
"""

from typing import Any, Optional, Sequence, Union

import numpy as np
from scipy.special import expit

from autodiff.graph import ShapeError, active_graph
from autodiff.tensor import Operand, Tensor

Axis = Union[None, int, tuple[int, ...]]
Grads = tuple[Optional[np.ndarray], ...]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _coerce(value: Operand, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype))


class Function:
    """Base class for primitive operations."""

    op_name = "function"

    def validate(self, *shapes: tuple[int, ...]) -> None:
        """Raise ShapeError if the input shapes are inconsistent."""

    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Grads:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: Tensor, **attrs: Any) -> Tensor:
        fn = cls(**attrs)
        graph = active_graph()
        label = graph.next_label(cls.op_name) if graph is not None else cls.op_name
        try:
            fn.validate(*(t.shape for t in inputs))
        except ShapeError as e:
            raise ShapeError(f"{label}: {e}") from None

        out = Tensor(fn.forward(*(t.data for t in inputs)))
        if graph is not None and any(t.requires_grad for t in inputs):
            out.requires_grad = True
            graph.record(cls.op_name, tuple(inputs), out, fn.backward)
        return out


class _Broadcasting(Function):
    def validate(self, *shapes: tuple[int, ...]) -> None:
        try:
            np.broadcast_shapes(*shapes)
        except ValueError:
            raise ShapeError(f"cannot broadcast shapes {shapes}") from None


class Add(_Broadcasting):
    op_name = "add"

    def forward(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        self.shapes = (x.shape, y.shape)
        return x + y

    def backward(self, grad: np.ndarray) -> Grads:
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(grad, self.shapes[1])


class Sub(_Broadcasting):
    op_name = "sub"

    def forward(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        self.shapes = (x.shape, y.shape)
        return x - y

    def backward(self, grad: np.ndarray) -> Grads:
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(-grad, self.shapes[1])


class Mul(_Broadcasting):
    op_name = "mul"

    def forward(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        self.x, self.y = x, y
        return x * y

    def backward(self, grad: np.ndarray) -> Grads:
        return _unbroadcast(grad * self.y, self.x.shape), _unbroadcast(grad * self.x, self.y.shape)


class Div(_Broadcasting):
    op_name = "div"

    def forward(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        self.x, self.y = x, y
        return x / y

    def backward(self, grad: np.ndarray) -> Grads:
        gx = grad / self.y
        gy = -grad * self.x / (self.y * self.y)
        return _unbroadcast(gx, self.x.shape), _unbroadcast(gy, self.y.shape)


class Neg(Function):
    op_name = "neg"

    def forward(self, x: np.ndarray) -> np.ndarray:
        return -x

    def backward(self, grad: np.ndarray) -> Grads:
        return (-grad,)


class Power(Function):
    op_name = "power"

    def __init__(self, exponent: float) -> None:
        self.exponent = exponent

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.x = x
        return x ** self.exponent

    def backward(self, grad: np.ndarray) -> Grads:
        return (grad * self.exponent * self.x ** (self.exponent - 1),)


class MatMul(Function):
    """x (..., K) @ w (K, N) or w (K,)."""

    op_name = "matmul"

    def validate(self, a: tuple[int, ...], b: tuple[int, ...]) -> None:
        if len(a) < 1 or len(b) not in (1, 2):
            raise ShapeError(f"unsupported operand ranks {a} @ {b}")
        if a[-1] != b[0]:
            raise ShapeError(f"inner dimensions differ: {a} @ {b}")

    def forward(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        self.x, self.w = x, w
        return x @ w

    def backward(self, grad: np.ndarray) -> Grads:
        k = self.x.shape[-1]
        flat_x = self.x.reshape(-1, k)
        if self.w.ndim == 1:
            gx = grad[..., None] * self.w
            gw = flat_x.T @ grad.reshape(-1)
        else:
            gx = grad @ self.w.T
            gw = flat_x.T @ grad.reshape(-1, self.w.shape[1])
        return gx.reshape(self.x.shape), gw


class Tanh(Function):
    op_name = "tanh"

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.y = np.tanh(x)
        return self.y

    def backward(self, grad: np.ndarray) -> Grads:
        return (grad * (1.0 - self.y * self.y),)


class Sigmoid(Function):
    op_name = "sigmoid"

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.y = expit(x)
        return self.y

    def backward(self, grad: np.ndarray) -> Grads:
        return (grad * self.y * (1.0 - self.y),)


class Exp(Function):
    op_name = "exp"

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.y = np.exp(x)
        return self.y

    def backward(self, grad: np.ndarray) -> Grads:
        return (grad * self.y,)


class Log(Function):
    op_name = "log"

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.x = x
        return np.log(x)

    def backward(self, grad: np.ndarray) -> Grads:
        return (grad / self.x,)


class Sqrt(Function):
    op_name = "sqrt"

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.y = np.sqrt(x)
        return self.y

    def backward(self, grad: np.ndarray) -> Grads:
        return (grad / (2.0 * self.y),)


class Concat(Function):
    op_name = "concat"

    def __init__(self, axis: int) -> None:
        self.axis = axis

    def validate(self, *shapes: tuple[int, ...]) -> None:
        if not shapes:
            raise ShapeError("nothing to concatenate")
        rank = len(shapes[0])
        axis = self.axis % rank if rank else 0
        for shape in shapes:
            if len(shape) != rank or any(s != r for i, (s, r) in enumerate(zip(shape, shapes[0])) if i != axis):
                raise ShapeError(f"incompatible shapes {shapes} along axis {self.axis}")

    def forward(self, *xs: np.ndarray) -> np.ndarray:
        self.splits = np.cumsum([x.shape[self.axis] for x in xs])[:-1]
        return np.concatenate(xs, axis=self.axis)

    def backward(self, grad: np.ndarray) -> Grads:
        return tuple(np.split(grad, self.splits, axis=self.axis))


class Stack(Function):
    op_name = "stack"

    def __init__(self, axis: int) -> None:
        self.axis = axis

    def validate(self, *shapes: tuple[int, ...]) -> None:
        if not shapes or any(s != shapes[0] for s in shapes):
            raise ShapeError(f"stack needs equal shapes, got {shapes}")

    def forward(self, *xs: np.ndarray) -> np.ndarray:
        self.count = len(xs)
        return np.stack(xs, axis=self.axis)

    def backward(self, grad: np.ndarray) -> Grads:
        return tuple(np.take(grad, i, axis=self.axis) for i in range(self.count))


class GetItem(Function):
    op_name = "slice"

    def __init__(self, index: Any) -> None:
        self.index = index

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.shape, self.dtype = x.shape, x.dtype
        return np.array(x[self.index], copy=True)

    def backward(self, grad: np.ndarray) -> Grads:
        full = np.zeros(self.shape, dtype=self.dtype)
        np.add.at(full, self.index, grad)
        return (full,)


class Take(Function):
    """Row lookup `table[indices]` (embeddings)."""

    op_name = "take"

    def __init__(self, indices: np.ndarray) -> None:
        self.indices = np.asarray(indices, dtype=np.int64)

    def validate(self, table: tuple[int, ...]) -> None:
        if len(table) != 2:
            raise ShapeError(f"lookup table must be 2-D, got {table}")
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= table[0]):
            raise ShapeError(f"index out of range for table with {table[0]} rows")

    def forward(self, table: np.ndarray) -> np.ndarray:
        self.shape, self.dtype = table.shape, table.dtype
        return table[self.indices]

    def backward(self, grad: np.ndarray) -> Grads:
        full = np.zeros(self.shape, dtype=self.dtype)
        np.add.at(full, self.indices, grad)
        return (full,)


class Reshape(Function):
    op_name = "reshape"

    def __init__(self, shape: tuple[int, ...]) -> None:
        self.shape = shape

    def validate(self, x: tuple[int, ...]) -> None:
        try:
            np.empty(x, dtype=np.int8).reshape(self.shape)
        except ValueError:
            raise ShapeError(f"cannot reshape {x} into {self.shape}") from None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.in_shape = x.shape
        return x.reshape(self.shape)

    def backward(self, grad: np.ndarray) -> Grads:
        return (grad.reshape(self.in_shape),)


class Transpose(Function):
    op_name = "transpose"

    def __init__(self, axes: tuple[int, ...]) -> None:
        self.axes = axes

    def validate(self, x: tuple[int, ...]) -> None:
        if sorted(a % len(x) for a in self.axes) != list(range(len(x))):
            raise ShapeError(f"axes {self.axes} do not permute a rank-{len(x)} tensor")

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.transpose(x, self.axes)

    def backward(self, grad: np.ndarray) -> Grads:
        return (np.transpose(grad, np.argsort(self.axes)),)


class Sum(Function):
    op_name = "sum"

    def __init__(self, axis: Axis = None, keepdims: bool = False) -> None:
        self.axis = axis
        self.keepdims = keepdims

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.shape = x.shape
        return np.asarray(x.sum(axis=self.axis, keepdims=self.keepdims))

    def backward(self, grad: np.ndarray) -> Grads:
        if not self.keepdims and self.axis is not None:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.shape).copy(),)


class Mean(Sum):
    op_name = "mean"

    def forward(self, x: np.ndarray) -> np.ndarray:
        total = super().forward(x)
        self.count = x.size // max(total.size, 1)
        return total / self.count

    def backward(self, grad: np.ndarray) -> Grads:
        (full,) = super().backward(grad)
        assert full is not None
        return (full / self.count,)


class Softmax(Function):
    op_name = "softmax"

    def __init__(self, axis: int = -1) -> None:
        self.axis = axis

    def forward(self, x: np.ndarray) -> np.ndarray:
        shifted = np.exp(x - x.max(axis=self.axis, keepdims=True))
        self.y = shifted / shifted.sum(axis=self.axis, keepdims=True)
        return self.y

    def backward(self, grad: np.ndarray) -> Grads:
        inner = (grad * self.y).sum(axis=self.axis, keepdims=True)
        return (self.y * (grad - inner),)


class LogSoftmax(Function):
    op_name = "log_softmax"

    def __init__(self, axis: int = -1) -> None:
        self.axis = axis

    def forward(self, x: np.ndarray) -> np.ndarray:
        shifted = x - x.max(axis=self.axis, keepdims=True)
        self.y = shifted - np.log(np.exp(shifted).sum(axis=self.axis, keepdims=True))
        return self.y

    def backward(self, grad: np.ndarray) -> Grads:
        return (grad - np.exp(self.y) * grad.sum(axis=self.axis, keepdims=True),)


class MaskedSoftmax(Function):
    """Softmax over the last axis restricted to `mask`; masked entries are exactly zero."""

    op_name = "masked_softmax"

    def __init__(self, mask: np.ndarray) -> None:
        self.mask = np.asarray(mask, dtype=bool)

    def validate(self, x: tuple[int, ...]) -> None:
        try:
            np.broadcast_to(self.mask, x)
        except ValueError:
            raise ShapeError(f"mask {self.mask.shape} does not fit scores {x}") from None
        if not np.all(np.broadcast_to(self.mask, x).any(axis=-1)):
            raise ShapeError("every position of a row is masked")

    def forward(self, x: np.ndarray) -> np.ndarray:
        mask = np.broadcast_to(self.mask, x.shape)
        peak = np.where(mask, x, -np.inf).max(axis=-1, keepdims=True)
        shifted = np.where(mask, np.exp(np.where(mask, x - peak, 0.0)), 0.0)
        self.y = shifted / shifted.sum(axis=-1, keepdims=True)
        return self.y

    def backward(self, grad: np.ndarray) -> Grads:
        inner = (grad * self.y).sum(axis=-1, keepdims=True)
        return (self.y * (grad - inner),)


class Conv1dTime(Function):
    """Same-length convolution along time: x (B, T, C), w (W, C, K) → (B, T, K)."""

    op_name = "conv1d"

    def validate(self, x: tuple[int, ...], w: tuple[int, ...]) -> None:
        if len(x) != 3 or len(w) != 3:
            raise ShapeError(f"expected x (B,T,C) and w (W,C,K), got {x} and {w}")
        if w[0] % 2 == 0:
            raise ShapeError(f"kernel width must be odd, got {w[0]}")
        if x[2] != w[1]:
            raise ShapeError(f"channel mismatch: input {x[2]} vs kernel {w[1]}")

    def forward(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        width = w.shape[0]
        self.pad = width // 2
        self.steps = x.shape[1]
        self.xp = np.pad(x, ((0, 0), (self.pad, self.pad), (0, 0)))
        self.w = w
        out = np.zeros((x.shape[0], self.steps, w.shape[2]), dtype=np.result_type(x, w))
        for j in range(width):
            out += self.xp[:, j:j + self.steps, :] @ w[j]
        return out

    def backward(self, grad: np.ndarray) -> Grads:
        width, channels, kernels = self.w.shape
        gxp = np.zeros_like(self.xp)
        gw = np.zeros_like(self.w)
        flat_grad = grad.reshape(-1, kernels)
        for j in range(width):
            window = self.xp[:, j:j + self.steps, :]
            gw[j] = window.reshape(-1, channels).T @ flat_grad
            gxp[:, j:j + self.steps, :] += grad @ self.w[j].T
        return gxp[:, self.pad:self.pad + self.steps, :], gw


def add(a: Operand, b: Operand) -> Tensor:
    ta = _coerce(a, b if isinstance(b, Tensor) else None)
    return Add.apply(ta, _coerce(b, ta))


def sub(a: Operand, b: Operand) -> Tensor:
    ta = _coerce(a, b if isinstance(b, Tensor) else None)
    return Sub.apply(ta, _coerce(b, ta))


def mul(a: Operand, b: Operand) -> Tensor:
    ta = _coerce(a, b if isinstance(b, Tensor) else None)
    return Mul.apply(ta, _coerce(b, ta))


def div(a: Operand, b: Operand) -> Tensor:
    ta = _coerce(a, b if isinstance(b, Tensor) else None)
    return Div.apply(ta, _coerce(b, ta))


def neg(x: Tensor) -> Tensor:
    return Neg.apply(x)


def power(x: Tensor, exponent: float) -> Tensor:
    return Power.apply(x, exponent=float(exponent))


def matmul(x: Operand, w: Operand) -> Tensor:
    tw = _coerce(w, x if isinstance(x, Tensor) else None)
    return MatMul.apply(_coerce(x, tw), tw)


def tanh(x: Tensor) -> Tensor:
    return Tanh.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def exp(x: Tensor) -> Tensor:
    return Exp.apply(x)


def log(x: Tensor) -> Tensor:
    return Log.apply(x)


def sqrt(x: Tensor) -> Tensor:
    return Sqrt.apply(x)


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    if len(xs) == 1:
        return xs[0]
    return Concat.apply(*xs, axis=axis)


def stack(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    return Stack.apply(*xs, axis=axis)


def getitem(x: Tensor, index: Any) -> Tensor:
    return GetItem.apply(x, index=index)


def take(table: Tensor, indices: np.ndarray) -> Tensor:
    return Take.apply(table, indices=indices)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    return Transpose.apply(x, axes=tuple(axes))


def reduce_sum(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def reduce_mean(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    return Mean.apply(x, axis=axis, keepdims=keepdims)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return Softmax.apply(x, axis=axis)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    return LogSoftmax.apply(x, axis=axis)


def masked_softmax(x: Tensor, mask: np.ndarray) -> Tensor:
    return MaskedSoftmax.apply(x, mask=mask)


def conv1d_time(x: Tensor, w: Tensor) -> Tensor:
    return Conv1dTime.apply(x, w)
