"""
Dense tensors with a define-by-run tape
Reverse-mode differentiation over numpy arrays, precision set globally
"""

import itertools
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from ..config import settings
from ..errors import AutodiffError, ConfigError, DimensionError

logger = structlog.get_logger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[Any]]

_PRECISIONS = {"float32": np.float32, "float64": np.float64}
_uids = itertools.count(1)
_state = threading.local()


def _validated_dtype(name: str) -> type:
    if name not in _PRECISIONS:
        raise ConfigError(
            f"Unknown precision '{name}', expected one of {sorted(_PRECISIONS)}"
        )
    return _PRECISIONS[name]


_dtype = _validated_dtype(settings.PRECISION)


def get_precision() -> type:
    """Current numpy dtype for new tensors"""
    return _dtype


def set_precision(name: str) -> None:
    """Set the global tensor precision ('float32' or 'float64')"""
    global _dtype
    _dtype = _validated_dtype(name)


@contextmanager
def precision(name: str) -> Iterator[None]:
    """Temporarily switch the global precision"""
    previous = _dtype
    set_precision(name)
    try:
        yield
    finally:
        set_precision("float64" if previous is np.float64 else "float32")


class Tensor:
    """Dense n-dimensional array that can take part in differentiation"""

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
    ):
        self.data = np.ascontiguousarray(data, dtype=_dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.uid = next(_uids)
        self._record: Optional["TapeRecord"] = None

    # Shape helpers

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._record is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise DimensionError(
                f"item() needs a single value, tensor has shape {self.shape}"
            )
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return (
            f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}"
            f"{label})"
        )

    # Operator sugar, resolved lazily to avoid an import cycle

    def __add__(self, other: Any) -> "Tensor":
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other: Any) -> "Tensor":
        from . import ops

        return ops.sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        from . import ops

        return ops.sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        from . import ops

        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.hadamard(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        from . import ops

        return ops.scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from . import ops

        return ops.matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        from . import ops

        return ops.getitem(self, index)

    @property
    def T(self) -> "Tensor":
        from . import ops

        return ops.transpose(self)

    def sum(self, axis: Any = None, keepdims: bool = False) -> "Tensor":
        from . import ops

        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Any = None, keepdims: bool = False) -> "Tensor":
        from . import ops

        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> "Tensor":
        from . import ops

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    """Wrap constants; tensors pass through untouched"""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False)


def parameter(data: ArrayLike, name: Optional[str] = None) -> Tensor:
    """Leaf tensor that receives gradients"""
    return Tensor(data, requires_grad=True, name=name)


def zeros(shape: Tuple[int, ...], requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(shape: Tuple[int, ...], requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=requires_grad)


@dataclass
class TapeRecord:
    """One primitive application recorded during a forward pass"""

    index: int
    op: str
    function: Any
    inputs: Tuple[Tensor, ...]
    output: Tensor


@dataclass
class Tape:
    """Ordered record of primitive applications for one forward pass"""

    records: List[TapeRecord] = field(default_factory=list)

    def record(
        self, op: str, function: Any, inputs: Tuple[Tensor, ...], output: Tensor
    ) -> TapeRecord:
        entry = TapeRecord(len(self.records), op, function, inputs, output)
        self.records.append(entry)
        output._record = entry
        return entry

    def owns(self, entry: Optional[TapeRecord]) -> bool:
        return (
            entry is not None
            and entry.index < len(self.records)
            and self.records[entry.index] is entry
        )

    def reset(self) -> None:
        for entry in self.records:
            entry.output._record = None
        self.records.clear()

    def __len__(self) -> int:
        return len(self.records)


def current_tape() -> Tape:
    """Tape of the calling thread"""
    tape = getattr(_state, "tape", None)
    if tape is None:
        tape = Tape()
        _state.tape = tape
    return tape


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording, e.g. for evaluation"""
    previous = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def backward(loss: Tensor) -> Dict[int, Tensor]:
    """Propagate d(loss) back through the tape

    Leaf gradients accumulate into `.grad`; the returned map is keyed by
    leaf uid. The tape is cleared afterwards.
    """
    if loss.size != 1:
        raise AutodiffError(
            f"backward needs a scalar loss, got shape {loss.shape}"
        )
    if not loss.requires_grad:
        raise AutodiffError("loss is detached: nothing requires grad")

    tape = current_tape()
    grads: Dict[int, np.ndarray] = {loss.uid: np.ones_like(loss.data)}
    leaves: Dict[int, Tensor] = {}

    if loss.is_leaf:
        leaves[loss.uid] = loss
    else:
        if not tape.owns(loss._record):
            raise AutodiffError("loss was not recorded on the active tape")
        assert loss._record is not None
        for entry in reversed(tape.records[: loss._record.index + 1]):
            upstream = grads.pop(entry.output.uid, None)
            if upstream is None:
                continue
            input_grads = entry.function.backward(upstream)
            for tensor, grad in zip(entry.inputs, input_grads):
                if grad is None or not tensor.requires_grad:
                    continue
                if tensor.shape != grad.shape:
                    raise DimensionError(
                        f"{entry.op} produced gradient of shape {grad.shape} "
                        f"for input of shape {tensor.shape}"
                    )
                if tensor.uid in grads:
                    grads[tensor.uid] = grads[tensor.uid] + grad
                else:
                    grads[tensor.uid] = grad
                if tensor.is_leaf:
                    leaves[tensor.uid] = tensor

    result: Dict[int, Tensor] = {}
    for uid, leaf in leaves.items():
        grad = np.asarray(grads.get(uid, np.zeros_like(leaf.data)), dtype=_dtype)
        leaf.grad = grad if leaf.grad is None else leaf.grad + grad
        result[uid] = Tensor(grad)

    tape.reset()
    return result
