"""Dense tensor type used by every layer of the recognizer."""

from typing import Any, Optional, Union

import numpy as np
from numpy.typing import ArrayLike, DTypeLike

Operand = Union["Tensor", float, int, np.ndarray]


class Tensor:
    """
    A dense real tensor that can take part in a recorded computation.

    Operations on tensors are recorded on the active `Graph` (if any) so that
    gradients can be propagated back to every input that requires them.

    Attributes:
        data: Row-major numpy array holding the values
        requires_grad: Whether gradients flow back into this tensor
        name: Optional name used in diagnostics and gradient dictionaries
    """

    __slots__ = ("data", "requires_grad", "name")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
        dtype: Optional[DTypeLike] = None,
    ) -> None:
        array = np.asarray(data, dtype=dtype)
        if array.dtype.kind not in "fiub":
            raise TypeError(f"Tensor data must be numeric, got {array.dtype}")
        if array.dtype.kind != "f":
            array = array.astype(np.float64)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        """Return the underlying array (not a copy)."""
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"<Tensor shape={self.shape} dtype={self.dtype}{label}>"

    def __add__(self, other: Operand) -> "Tensor":
        from autodiff import ops
        return ops.add(self, other)

    def __radd__(self, other: Operand) -> "Tensor":
        from autodiff import ops
        return ops.add(other, self)

    def __sub__(self, other: Operand) -> "Tensor":
        from autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other: Operand) -> "Tensor":
        from autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other: Operand) -> "Tensor":
        from autodiff import ops
        return ops.mul(self, other)

    def __rmul__(self, other: Operand) -> "Tensor":
        from autodiff import ops
        return ops.mul(other, self)

    def __truediv__(self, other: Operand) -> "Tensor":
        from autodiff import ops
        return ops.div(self, other)

    def __neg__(self) -> "Tensor":
        from autodiff import ops
        return ops.neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from autodiff import ops
        return ops.matmul(self, other)

    def __pow__(self, exponent: float) -> "Tensor":
        from autodiff import ops
        return ops.power(self, exponent)

    def __getitem__(self, index: Any) -> "Tensor":
        from autodiff import ops
        return ops.getitem(self, index)


class Parameter(Tensor):
    """
    A named trainable tensor.

    Attributes:
        decay: Whether weight decay and weight noise apply to this parameter
            (False for biases and batch-norm scale/shift)
    """

    __slots__ = ("decay",)

    def __init__(self, data: ArrayLike, name: str, decay: bool = True, dtype: Optional[DTypeLike] = None) -> None:
        super().__init__(data, requires_grad=True, name=name, dtype=dtype)
        self.decay = decay

    def __repr__(self) -> str:
        return f"<Parameter {self.name!r} shape={self.shape}>"


def as_tensor(value: Operand, dtype: Optional[DTypeLike] = None) -> Tensor:
    """Wrap a constant as a Tensor; tensors pass through unchanged."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)
