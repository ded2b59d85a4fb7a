"""
Differentiable primitives
Every layer in the toolkit is composed from these operations
"""

from abc import abstractmethod
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import DimensionError
from .tensor import Tensor, as_tensor, current_tape, grad_enabled

Operand = Union[Tensor, np.ndarray, float, int]
Grads = Tuple[Optional[np.ndarray], ...]


class Function:
    """Base class for a primitive with an explicit backward rule

    Subclasses keep whatever they need from the forward pass on `self`
    and return one gradient per input from `backward`.
    """

    op = "function"

    @abstractmethod
    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    @abstractmethod
    def backward(self, grad: np.ndarray) -> Grads:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs: Any) -> Tensor:
        function = cls()
        out = Tensor(function.forward(*(t.data for t in inputs), **kwargs))
        if grad_enabled() and any(t.requires_grad for t in inputs):
            out.requires_grad = True
            current_tape().record(cls.op, function, inputs, out)
        return out


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`"""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _check_elementwise(op: str, a: Tensor, b: Tensor) -> None:
    # exact shapes, or one side a single value
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return
    raise DimensionError(
        f"{op}: incompatible shapes {a.shape} and {b.shape}"
    )


# Linear algebra


class MatMul(Function):
    op = "matmul"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.a, self.b = a, b
        return np.matmul(a, b)

    def backward(self, grad: np.ndarray) -> Grads:
        grad_a = unbroadcast(np.matmul(grad, np.swapaxes(self.b, -1, -2)), self.a.shape)
        grad_b = unbroadcast(np.matmul(np.swapaxes(self.a, -1, -2), grad), self.b.shape)
        return grad_a, grad_b


def matmul(a: Operand, b: Operand) -> Tensor:
    """Matrix product over the last two axes, leading axes broadcast"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul: cannot multiply shapes {a.shape} and {b.shape}"
        )
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError as exc:
        raise DimensionError(
            f"matmul: batch axes of {a.shape} and {b.shape} do not broadcast"
        ) from exc
    return MatMul.apply(a, b)


# Elementwise


class Add(Function):
    op = "add"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad: np.ndarray) -> Grads:
        return unbroadcast(grad, self.shapes[0]), unbroadcast(grad, self.shapes[1])


class Sub(Function):
    op = "sub"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad: np.ndarray) -> Grads:
        return unbroadcast(grad, self.shapes[0]), unbroadcast(-grad, self.shapes[1])


class Hadamard(Function):
    op = "hadamard"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.a, self.b = a, b
        return a * b

    def backward(self, grad: np.ndarray) -> Grads:
        return (
            unbroadcast(grad * self.b, self.a.shape),
            unbroadcast(grad * self.a, self.b.shape),
        )


class Scale(Function):
    op = "scale"

    def forward(self, x: np.ndarray, factor: float = 1.0) -> np.ndarray:
        self.factor = factor
        return x * factor

    def backward(self, grad: np.ndarray) -> Grads:
        return (grad * self.factor,)


class ReLU(Function):
    op = "relu"

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.mask = x > 0
        # NaN passes through unchanged
        return np.maximum(x, 0).astype(x.dtype)

    def backward(self, grad: np.ndarray) -> Grads:
        return (grad * self.mask,)


class Tanh(Function):
    op = "tanh"

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.out = np.tanh(x)
        return self.out

    def backward(self, grad: np.ndarray) -> Grads:
        return (grad * (1.0 - self.out * self.out),)


class Sigmoid(Function):
    op = "sigmoid"

    def forward(self, x: np.ndarray) -> np.ndarray:
        # split by sign so large magnitudes never overflow exp
        positive = x >= 0
        z = np.exp(-np.abs(x))
        self.out = np.where(positive, 1.0 / (1.0 + z), z / (1.0 + z)).astype(x.dtype)
        return self.out

    def backward(self, grad: np.ndarray) -> Grads:
        return (grad * self.out * (1.0 - self.out),)


class Abs(Function):
    op = "abs"

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.sign = np.sign(x)
        return np.abs(x)

    def backward(self, grad: np.ndarray) -> Grads:
        return (grad * self.sign,)


class SafeRsqrt(Function):
    """x^(-1/2) where x > floor, exactly 0 elsewhere"""

    op = "safe_rsqrt"

    def forward(self, x: np.ndarray, floor: float = 0.0) -> np.ndarray:
        self.live = x > floor
        safe = np.where(self.live, x, 1.0)
        self.out = np.where(self.live, safe ** -0.5, 0.0).astype(x.dtype)
        return self.out

    def backward(self, grad: np.ndarray) -> Grads:
        return (grad * np.where(self.live, -0.5 * self.out ** 3, 0.0),)


class SafeReciprocal(Function):
    """1/x where x > floor, exactly 0 elsewhere"""

    op = "safe_reciprocal"

    def forward(self, x: np.ndarray, floor: float = 0.0) -> np.ndarray:
        self.live = x > floor
        safe = np.where(self.live, x, 1.0)
        self.out = np.where(self.live, 1.0 / safe, 0.0).astype(x.dtype)
        return self.out

    def backward(self, grad: np.ndarray) -> Grads:
        return (grad * np.where(self.live, -self.out * self.out, 0.0),)


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("add", a, b)
    return Add.apply(a, b)


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("sub", a, b)
    return Sub.apply(a, b)


def hadamard(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("hadamard", a, b)
    return Hadamard.apply(a, b)


def scale(x: Operand, factor: float) -> Tensor:
    return Scale.apply(as_tensor(x), factor=float(factor))


def relu(x: Operand) -> Tensor:
    return ReLU.apply(as_tensor(x))


def tanh(x: Operand) -> Tensor:
    return Tanh.apply(as_tensor(x))


def sigmoid(x: Operand) -> Tensor:
    return Sigmoid.apply(as_tensor(x))


def abs(x: Operand) -> Tensor:  # noqa: A001
    return Abs.apply(as_tensor(x))


def safe_rsqrt(x: Operand, floor: float = 0.0) -> Tensor:
    return SafeRsqrt.apply(as_tensor(x), floor=floor)


def safe_reciprocal(x: Operand, floor: float = 0.0) -> Tensor:
    return SafeReciprocal.apply(as_tensor(x), floor=floor)


_ELEMENTWISE: Dict[str, Callable[..., Tensor]] = {
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "abs": abs,
    "add": add,
    "sub": sub,
    "hadamard": hadamard,
}


def elementwise(op: str, *args: Operand) -> Tensor:
    """Dispatch a pointwise primitive by name"""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError as exc:
        raise ValueError(
            f"Unknown elementwise op '{op}', expected one of {sorted(_ELEMENTWISE)}"
        ) from exc
    return fn(*args)


# Reductions and structure


class Sum(Function):
    op = "sum"

    def forward(
        self, x: np.ndarray, axis: Any = None, keepdims: bool = False
    ) -> np.ndarray:
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        return np.asarray(np.sum(x, axis=axis, keepdims=keepdims))

    def backward(self, grad: np.ndarray) -> Grads:
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.shape).copy(),)


class Reshape(Function):
    op = "reshape"

    def forward(self, x: np.ndarray, shape: Tuple[int, ...] = ()) -> np.ndarray:
        self.shape = x.shape
        return x.reshape(shape)

    def backward(self, grad: np.ndarray) -> Grads:
        return (grad.reshape(self.shape),)


class Transpose(Function):
    op = "transpose"

    def forward(self, x: np.ndarray, axes: Optional[Sequence[int]] = None) -> np.ndarray:
        self.axes = tuple(axes) if axes is not None else tuple(reversed(range(x.ndim)))
        return np.ascontiguousarray(np.transpose(x, self.axes))

    def backward(self, grad: np.ndarray) -> Grads:
        return (np.transpose(grad, np.argsort(self.axes)),)


class GetItem(Function):
    op = "getitem"

    def forward(self, x: np.ndarray, index: Any = None) -> np.ndarray:
        self.shape, self.dtype, self.index = x.shape, x.dtype, index
        return np.array(x[index])

    def backward(self, grad: np.ndarray) -> Grads:
        full = np.zeros(self.shape, dtype=self.dtype)
        parts = self.index if isinstance(self.index, tuple) else (self.index,)
        if all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis for p in parts):
            # basic indexing never repeats an element
            full[self.index] = grad
        else:
            np.add.at(full, self.index, grad)
        return (full,)


class Pad(Function):
    op = "pad"

    def forward(
        self, x: np.ndarray, pad_width: Sequence[Tuple[int, int]] = ()
    ) -> np.ndarray:
        self.slices = tuple(
            slice(before, before + size) for (before, _), size in zip(pad_width, x.shape)
        )
        return np.pad(x, pad_width)

    def backward(self, grad: np.ndarray) -> Grads:
        return (grad[self.slices].copy(),)


class BroadcastTo(Function):
    op = "broadcast_to"

    def forward(self, x: np.ndarray, shape: Tuple[int, ...] = ()) -> np.ndarray:
        self.shape = x.shape
        return np.broadcast_to(x, shape).copy()

    def backward(self, grad: np.ndarray) -> Grads:
        return (unbroadcast(grad, self.shape),)


def sum(x: Operand, axis: Any = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(as_tensor(x), axis=axis, keepdims=keepdims)


def mean(x: Operand, axis: Any = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([x.shape[a] for a in axes]))
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Operand, shape: Tuple[int, ...]) -> Tensor:
    return Reshape.apply(as_tensor(x), shape=tuple(shape))


def transpose(x: Operand, axes: Optional[Sequence[int]] = None) -> Tensor:
    return Transpose.apply(as_tensor(x), axes=axes)


def getitem(x: Operand, index: Any) -> Tensor:
    return GetItem.apply(as_tensor(x), index=index)


def pad(x: Operand, pad_width: Sequence[Tuple[int, int]]) -> Tensor:
    x = as_tensor(x)
    if len(pad_width) != x.ndim:
        raise DimensionError(
            f"pad: {len(pad_width)} pad pairs for a {x.ndim}-d tensor"
        )
    return Pad.apply(x, pad_width=tuple(tuple(p) for p in pad_width))


def broadcast_to(x: Operand, shape: Tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    try:
        np.broadcast_shapes(x.shape, tuple(shape))
    except ValueError as exc:
        raise DimensionError(
            f"broadcast_to: cannot broadcast {x.shape} to {tuple(shape)}"
        ) from exc
    return BroadcastTo.apply(x, shape=tuple(shape))
