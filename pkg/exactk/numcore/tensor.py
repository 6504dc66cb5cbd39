"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations run eagerly on numpy arrays. While a :class:`ComputationTape` is
active, every operation that touches a tensor with ``requires_grad`` appends a
record holding its inputs, its output and a closure mapping the output
gradient to input gradients. :meth:`ComputationTape.backward` replays those
records once each, newest first.
"""

import contextlib
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from exactk.core.errors import ContractViolation


MASK_VALUE = -1e9
LAYER_NORM_EPS = 1e-6

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None) -> None:
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractViolation(f"item: tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def __len__(self) -> int:
        return self.data.shape[0]

    def __add__(self, other: Any) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return elementwise_mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        return self.__mul__(other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other: Any) -> "Tensor":
        return matmul(self, other)

    def __rmatmul__(self, other: Any) -> "Tensor":
        return matmul(other, self)

    def __getitem__(self, index: Any) -> "Tensor":
        return take(self, index)

    def sum(self, axis: Optional[int] = None) -> "Tensor":
        return tensor_sum(self, axis=axis)

    def mean(self, axis: Optional[int] = None) -> "Tensor":
        return mean(self, axis=axis)


def as_tensor(value: Any) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


@dataclass
class TapeRecord:
    kind: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class ComputationTape:
    """Ordered log of differentiable operations executed while it is active."""

    def __init__(self) -> None:
        self.records: List[TapeRecord] = []
        self.consumed = False

    def __enter__(self) -> "ComputationTape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc: Any) -> None:
        _ACTIVE.pop()

    def __len__(self) -> int:
        return len(self.records)

    def record(self, kind: str, inputs: Tuple[Tensor, ...], output: Tensor, fn: BackwardFn) -> None:
        if self.consumed:
            raise ContractViolation(f"{kind}: tape was already consumed by backward")
        self.records.append(TapeRecord(kind, inputs, output, fn))

    def backward(self, loss: Tensor) -> None:
        if self.consumed:
            raise ContractViolation("backward: tape was already consumed")
        if loss.data.size != 1:
            raise ContractViolation(f"backward: loss must be a scalar, got shape {loss.shape}")

        produced = {id(rec.output) for rec in self.records}
        if id(loss) not in produced:
            raise ContractViolation("backward: loss was not produced on this tape")

        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: Dict[int, Tensor] = {}
        for rec in reversed(self.records):
            out_grad = grads.pop(id(rec.output), None)
            if out_grad is None:
                continue
            for tensor, in_grad in zip(rec.inputs, rec.backward(out_grad)):
                if in_grad is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                grads[key] = grads[key] + in_grad if key in grads else in_grad
                if key not in produced:
                    leaves[key] = tensor

        for key, tensor in leaves.items():
            g = grads[key]
            tensor.grad = np.array(g, dtype=np.float64) if tensor.grad is None else tensor.grad + g

        self.records.clear()
        self.consumed = True


_ACTIVE: List[Optional[ComputationTape]] = []


def current_tape() -> Optional[ComputationTape]:
    return _ACTIVE[-1] if _ACTIVE else None


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Suspend recording; operations inside produce plain values."""
    _ACTIVE.append(None)
    try:
        yield
    finally:
        _ACTIVE.pop()


def backward(tape: ComputationTape, loss: Tensor) -> None:
    tape.backward(loss)


def _result(kind: str, inputs: Sequence[Tensor], data: np.ndarray, fn: BackwardFn) -> Tensor:
    out = Tensor(data)
    tape = current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(kind, tuple(inputs), out, fn)
    return out


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast(kind: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ContractViolation(f"{kind}: shapes {a.shape} and {b.shape} do not broadcast") from None


# --- primitives -----------------------------------------------------------


def matmul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0:
        raise ContractViolation(f"matmul: scalar operand in shapes {a.shape} and {b.shape}")
    inner_b = b.shape[-2] if b.ndim > 1 else b.shape[0]
    if a.shape[-1] != inner_b:
        raise ContractViolation(f"matmul: inner dimensions differ for shapes {a.shape} and {b.shape}")

    def fn(g: np.ndarray) -> Sequence[np.ndarray]:
        a2 = a.data if a.ndim > 1 else a.data[None, :]
        b2 = b.data if b.ndim > 1 else b.data[:, None]
        lead = np.broadcast_shapes(a2.shape[:-2], b2.shape[:-2])
        g2 = g.reshape(lead + (a2.shape[-2], b2.shape[-1]))
        ga = unbroadcast(g2 @ np.swapaxes(b2, -1, -2), a2.shape).reshape(a.shape)
        gb = unbroadcast(np.swapaxes(a2, -1, -2) @ g2, b2.shape).reshape(b.shape)
        return ga, gb

    return _result("matmul", (a, b), np.matmul(a.data, b.data), fn)


def add(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast("add", a, b)
    return _result(
        "add", (a, b), a.data + b.data,
        lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)),
    )


def sub(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast("sub", a, b)
    return _result(
        "sub", (a, b), a.data - b.data,
        lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)),
    )


def elementwise_mul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast("elementwise_mul", a, b)
    return _result(
        "elementwise_mul", (a, b), a.data * b.data,
        lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)),
    )


def scale(x: Any, factor: float) -> Tensor:
    x = as_tensor(x)
    return _result("scale", (x,), x.data * factor, lambda g: (g * factor,))


def concat(tensors: Sequence[Any], axis: int = -1) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ContractViolation("concat: no inputs")
    ndim = parts[0].ndim
    shapes = [p.shape for p in parts]
    if ndim == 0 or any(p.ndim != ndim for p in parts):
        raise ContractViolation(f"concat: rank mismatch in shapes {shapes}")
    ax = axis % ndim
    ref = tuple(s for i, s in enumerate(parts[0].shape) if i != ax)
    if any(tuple(s for i, s in enumerate(p.shape) if i != ax) != ref for p in parts):
        raise ContractViolation(f"concat: shapes {shapes} differ outside axis {axis}")
    bounds = np.cumsum([p.shape[ax] for p in parts])[:-1]

    def fn(g: np.ndarray) -> Sequence[np.ndarray]:
        return np.split(g, bounds, axis=ax)

    return _result("concat", parts, np.concatenate([p.data for p in parts], axis=ax), fn)


def stack(tensors: Sequence[Any], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ContractViolation("stack: no inputs")
    if any(p.shape != parts[0].shape for p in parts):
        raise ContractViolation(f"stack: shapes {[p.shape for p in parts]} differ")

    def fn(g: np.ndarray) -> Sequence[np.ndarray]:
        return [np.take(g, i, axis=axis) for i in range(len(parts))]

    return _result("stack", parts, np.stack([p.data for p in parts], axis=axis), fn)


def relu(x: Any) -> Tensor:
    x = as_tensor(x)
    return _result("relu", (x,), np.maximum(x.data, 0.0), lambda g: (g * (x.data > 0),))


def tanh(x: Any) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return _result("tanh", (x,), out, lambda g: (g * (1.0 - out * out),))


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x: Any) -> Tensor:
    x = as_tensor(x)
    out = _stable_sigmoid(x.data)
    return _result("sigmoid", (x,), out, lambda g: (g * out * (1.0 - out),))


def log(x: Any) -> Tensor:
    x = as_tensor(x)
    with np.errstate(divide="ignore"):
        out = np.log(x.data)
    return _result("log", (x,), out, lambda g: (g / x.data,))


def softmax_lastdim(x: Any) -> Tensor:
    x = as_tensor(x)
    if x.ndim == 0:
        raise ContractViolation("softmax_lastdim: scalar input")
    z = np.exp(x.data - x.data.max(axis=-1, keepdims=True))
    out = z / z.sum(axis=-1, keepdims=True)

    def fn(g: np.ndarray) -> Sequence[np.ndarray]:
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _result("softmax_lastdim", (x,), out, fn)


def log_softmax_lastdim(x: Any) -> Tensor:
    x = as_tensor(x)
    if x.ndim == 0:
        raise ContractViolation("log_softmax_lastdim: scalar input")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))

    def fn(g: np.ndarray) -> Sequence[np.ndarray]:
        return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)

    return _result("log_softmax_lastdim", (x,), out, fn)


def masked_fill(x: Any, keep: np.ndarray, value: float = MASK_VALUE) -> Tensor:
    """Replace entries where ``keep`` is false by ``value``; no gradient flows there."""
    x = as_tensor(x)
    keep = np.asarray(keep, dtype=bool)
    try:
        np.broadcast_shapes(keep.shape, x.shape)
    except ValueError:
        raise ContractViolation(f"masked_fill: mask shape {keep.shape} does not fit {x.shape}") from None
    return _result(
        "masked_fill", (x,), np.where(keep, x.data, value),
        lambda g: (unbroadcast(g * keep, x.shape),),
    )


def layer_norm(x: Any, gain: Optional[Tensor] = None, bias: Optional[Tensor] = None,
               eps: float = LAYER_NORM_EPS) -> Tensor:
    x = as_tensor(x)
    width = x.shape[-1] if x.ndim else 0
    for label, param in (("gain", gain), ("bias", bias)):
        if param is not None and param.shape != (width,):
            raise ContractViolation(f"layer_norm: {label} shape {param.shape} does not match features {x.shape}")

    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv
    out = xhat
    if gain is not None:
        out = out * gain.data
    if bias is not None:
        out = out + bias.data

    inputs = [x] + [p for p in (gain, bias) if p is not None]

    def fn(g: np.ndarray) -> Sequence[np.ndarray]:
        ghat = g * gain.data if gain is not None else g
        gx = inv * (ghat - ghat.mean(axis=-1, keepdims=True)
                    - xhat * (ghat * xhat).mean(axis=-1, keepdims=True))
        grads = [gx]
        if gain is not None:
            grads.append(unbroadcast(g * xhat, gain.shape))
        if bias is not None:
            grads.append(unbroadcast(g, bias.shape))
        return grads

    return _result("layer_norm", inputs, out, fn)


def tensor_sum(x: Any, axis: Optional[int] = None) -> Tensor:
    x = as_tensor(x)

    def fn(g: np.ndarray) -> Sequence[np.ndarray]:
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result("sum", (x,), np.asarray(x.data.sum(axis=axis)), fn)


def mean(x: Any, axis: Optional[int] = None) -> Tensor:
    x = as_tensor(x)
    count = x.data.size if axis is None else x.shape[axis]

    def fn(g: np.ndarray) -> Sequence[np.ndarray]:
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return _result("mean", (x,), np.asarray(x.data.mean(axis=axis)), fn)


def take(x: Any, index: Any) -> Tensor:
    x = as_tensor(x)
    try:
        out = np.array(x.data[index], dtype=np.float64)
    except IndexError as exc:
        raise ContractViolation(f"take: index {index!r} invalid for shape {x.shape}: {exc}") from None

    def fn(g: np.ndarray) -> Sequence[np.ndarray]:
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g)
        return (gx,)

    return _result("take", (x,), out, fn)


def reshape(x: Any, shape: Tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ContractViolation(f"reshape: cannot view {x.shape} as {shape}") from None
    return _result("reshape", (x,), out, lambda g: (g.reshape(x.shape),))


def transpose(x: Any) -> Tensor:
    x = as_tensor(x)
    if x.ndim < 2:
        raise ContractViolation(f"transpose: needs rank >= 2, got {x.shape}")
    return _result("transpose", (x,), np.swapaxes(x.data, -1, -2), lambda g: (np.swapaxes(g, -1, -2),))


PRIMITIVES: Dict[str, Callable[..., Tensor]] = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "concat": concat,
    "stack": stack,
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softmax_lastdim": softmax_lastdim,
    "log_softmax_lastdim": log_softmax_lastdim,
    "layer_norm": layer_norm,
    "elementwise_mul": elementwise_mul,
    "sum": tensor_sum,
    "mean": mean,
    "log": log,
    "scale": scale,
    "masked_fill": masked_fill,
    "take": take,
    "reshape": reshape,
    "transpose": transpose,
}

_SEQUENCE_INPUT = {"concat", "stack"}


def forward_op(kind: str, inputs: Sequence[Any], **params: Any) -> Tensor:
    """Run primitive ``kind`` by name; ``concat``/``stack`` take the whole input list."""
    fn = PRIMITIVES.get(kind)
    if fn is None:
        raise ContractViolation(f"forward_op: unknown operation {kind!r}; known: {', '.join(sorted(PRIMITIVES))}")
    if kind in _SEQUENCE_INPUT:
        return fn(list(inputs), **params)
    return fn(*inputs, **params)
