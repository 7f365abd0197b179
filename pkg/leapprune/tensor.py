"""
Minimal reverse-mode automatic differentiation over dense float64 numpy arrays.

Operations executed inside an active `Tape` are recorded in execution order,
together with a backward rule; `backward(loss)` walks the tape once in reverse.
Outside a tape the same functions just compute values.

Example:
    >>> w = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
    >>> with Tape():
    ...     loss = tensor_sum(mul(w, w))
    ...     backward(loss)
    >>> w.grad
    array([[2., 4.],
           [6., 8.]])
"""

from contextvars import ContextVar
from dataclasses import dataclass
from typing import (
    Any, Callable,
    Sequence
)

import numpy as np
from numpy.typing import NDArray

from . import errors

__all__ = (
    "Array",
    "Tensor",
    "Operation",
    "Tape",
    "as_tensor",
    "init_uniform",
    "record_operation",
    "backward",
    "matmul",
    "batched_matmul",
    "elementwise",
    "add",
    "sub",
    "mul",
    "scale",
    "sigmoid",
    "relu",
    "transpose",
    "reshape",
    "tensor_sum",
    "mean",
    "take",
    "add_bias",
    "embedding",
    "softmax",
    "layer_norm",
    "softmax_cross_entropy",
    "kl_divergence",
    "stable_sigmoid"
)

Array = NDArray[np.float64]
BackwardRule = Callable[[Array], Sequence[Array | None]]

_active_tape: ContextVar["Tape | None"] = ContextVar("leapprune_active_tape", default=None)


class Tensor:
    """
    A dense float64 array with an optional gradient.

    Attributes:
        values (Array): The data, always float64 and owned by this tensor.
        grad (Array | None): Accumulated gradient; allocated for leaves with `requires_grad`.
        requires_grad (bool): Whether gradients flow into (or through) this tensor.
        name (str | None): Optional label used in error messages and checkpoints.
    """

    def __init__(self, values: Any, *, requires_grad: bool = False, name: str | None = None) -> None:
        self.values: Array = np.array(values, dtype=np.float64)
        if any(dim <= 0 for dim in self.values.shape):
            raise errors.DimensionError(f"tensor shape {self.values.shape} has a non-positive dimension")
        self.requires_grad = requires_grad
        self.grad: Array | None = np.zeros_like(self.values) if requires_grad else None
        self.name = name
        self._tape: "Tape | None" = None
        self._index = -1

    @classmethod
    def _wrap(cls, values: Array, requires_grad: bool) -> "Tensor":
        out = cls.__new__(cls)
        out.values = values
        out.requires_grad = requires_grad
        out.grad = None
        out.name = None
        out._tape = None
        out._index = -1
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.values.shape)

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def is_leaf(self) -> bool:
        return self._tape is None

    def item(self) -> float:
        if self.values.size != 1:
            raise errors.UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def zero_grad(self) -> None:
        if self.requires_grad and self.is_leaf:
            self.grad = np.zeros_like(self.values)

    def detach(self) -> "Tensor":
        return Tensor(self.values, name=self.name)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"<Tensor shape={self.shape} requires_grad={self.requires_grad}{label}>"

    def __add__(self, other: Any) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        return mul(other, self)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


@dataclass
class Operation:
    """One recorded step: `output = name(*inputs)`, plus its backward rule."""

    name: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardRule


class Tape:
    """
    Ordered record of the operations of one forward pass.

    Entering the tape makes it the active recorder for the current context;
    operations whose inputs require gradients are appended in execution order,
    so every operation's inputs precede it.

    Example:
        >>> with Tape() as tape:
        ...     loss = softmax_cross_entropy(logits, labels)
        ...     backward(loss)
        >>> len(tape)
        1
    """

    def __init__(self) -> None:
        self.operations: list[Operation] = []
        self._tokens: list[Any] = []

    def __enter__(self) -> "Tape":
        self._tokens.append(_active_tape.set(self))
        return self

    def __exit__(self, *args: Any) -> None:
        _active_tape.reset(self._tokens.pop())

    def __len__(self) -> int:
        return len(self.operations)

    def __repr__(self) -> str:
        return f"<Tape operations={len(self.operations)}>"

    def record(self, name: str, inputs: Sequence[Tensor], output: Tensor, rule: BackwardRule) -> Tensor:
        for tensor in inputs:
            if tensor._tape is not None and tensor._tape is not self:
                raise errors.UsageError(f"{name}: input was recorded on a different tape")
        output._tape = self
        output._index = len(self.operations)
        self.operations.append(Operation(name, tuple(inputs), output, rule))
        return output


def as_tensor(value: Any) -> Tensor:
    """Return `value` unchanged if it is a Tensor, otherwise wrap it as a constant."""
    return value if isinstance(value, Tensor) else Tensor(value)

def init_uniform(
    shape: tuple[int, ...],
    rng: np.random.Generator,
    *,
    fan_in: int,
    name: str | None = None
) -> Tensor:
    """Trainable tensor drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)

def _check_finite(name: str, values: Array) -> None:
    if not np.all(np.isfinite(values)):
        raise errors.NonFiniteError(f"{name} produced non-finite values")

def record_operation(name: str, values: Array, inputs: Sequence[Tensor], rule: BackwardRule) -> Tensor:
    """
    Wrap freshly computed `values` as the output of operation `name`.

    The operation is recorded on the active tape when one exists and at least one
    input requires gradients; `rule(upstream)` must return one gradient (or None)
    per input, in order.

    Raises:
        NonFiniteError: If `values` contains NaN or Inf.
    """
    values = np.asarray(values, dtype=np.float64)
    _check_finite(name, values)
    tape = _active_tape.get()
    tracked = tape is not None and any(tensor.requires_grad for tensor in inputs)
    output = Tensor._wrap(values, requires_grad=tracked)
    if tracked:
        tape.record(name, inputs, output, rule)  # type: ignore[union-attr]
    return output

def backward(loss: Tensor) -> None:
    """
    Populate `.grad` of every trainable leaf that `loss` depends on.

    Gradients accumulate: calling backward twice without `zero_grad` doubles them.

    Raises:
        UsageError: If `loss` is not a single-element tensor, or was not recorded.
        NonFiniteError: If a gradient becomes NaN or Inf.
    """
    if loss.values.size != 1:
        raise errors.UsageError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if loss.is_leaf:
        if not loss.requires_grad:
            raise errors.UsageError("loss was not produced by recorded operations")
        loss.grad = (loss.grad if loss.grad is not None else np.zeros_like(loss.values)) + 1.0
        return

    tape = loss._tape
    assert tape is not None
    pending: dict[int, Array] = {id(loss): np.ones_like(loss.values)}
    for operation in reversed(tape.operations[: loss._index + 1]):
        upstream = pending.pop(id(operation.output), None)
        if upstream is None:
            continue
        gradients = operation.backward(upstream)
        for tensor, gradient in zip(operation.inputs, gradients):
            if gradient is None or not tensor.requires_grad:
                continue
            _check_finite(f"backward of {operation.name}", gradient)
            if tensor.is_leaf:
                if tensor.grad is None:
                    tensor.grad = np.zeros_like(tensor.values)
                tensor.grad += gradient.reshape(tensor.values.shape)
            elif id(tensor) in pending:
                pending[id(tensor)] = pending[id(tensor)] + gradient
            else:
                pending[id(tensor)] = np.array(gradient, dtype=np.float64)


# ---- dense products -------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """[m×k] · [k×n] → [m×n]."""
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise errors.DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.values, b.values
    return record_operation(
        "matmul", av @ bv, (a, b),
        lambda g: (g @ bv.T, av.T @ g)
    )

def batched_matmul(a: Tensor, b: Tensor) -> Tensor:
    """[..., m×k] · [..., k×n] → [..., m×n] with identical leading dimensions."""
    if (
        a.values.ndim < 3 or a.values.ndim != b.values.ndim
        or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]
    ):
        raise errors.DimensionError(f"batched_matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.values, b.values
    return record_operation(
        "batched_matmul", np.matmul(av, bv), (a, b),
        lambda g: (np.matmul(g, np.swapaxes(bv, -1, -2)), np.matmul(np.swapaxes(av, -1, -2), g))
    )


# ---- elementwise ----------------------------------------------------------

def _is_scalar(t: Tensor) -> bool:
    return t.values.ndim == 0

def _pair(op: str, a: Any, b: Any) -> tuple[Tensor, Tensor]:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
        raise errors.DimensionError(f"{op}: shapes {a.shape} and {b.shape} are not broadcast-compatible")
    return a, b

def _reduce_to(gradient: Array, shape: tuple[int, ...]) -> Array:
    if gradient.shape == shape:
        return gradient
    return np.asarray(gradient.sum(), dtype=np.float64).reshape(shape)

def stable_sigmoid(x: Array | float) -> Array:
    """Logistic function without overflow for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(-1)
    out = np.empty_like(flat)
    positive = flat >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-flat[positive]))
    exp_x = np.exp(flat[~positive])
    out[~positive] = exp_x / (1.0 + exp_x)
    return out.reshape(x.shape)

def add(a: Any, b: Any) -> Tensor:
    a, b = _pair("add", a, b)
    sa, sb = a.shape, b.shape
    return record_operation(
        "add", a.values + b.values, (a, b),
        lambda g: (_reduce_to(g, sa), _reduce_to(g, sb))
    )

def sub(a: Any, b: Any) -> Tensor:
    a, b = _pair("sub", a, b)
    sa, sb = a.shape, b.shape
    return record_operation(
        "sub", a.values - b.values, (a, b),
        lambda g: (_reduce_to(g, sa), _reduce_to(-g, sb))
    )

def mul(a: Any, b: Any) -> Tensor:
    a, b = _pair("mul", a, b)
    av, bv = a.values, b.values
    return record_operation(
        "mul", av * bv, (a, b),
        lambda g: (_reduce_to(g * bv, a.shape), _reduce_to(g * av, b.shape))
    )

def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return record_operation("scale", a.values * factor, (a,), lambda g: (g * factor,))

def sigmoid(a: Tensor) -> Tensor:
    y = stable_sigmoid(a.values)
    return record_operation("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))

def relu(a: Tensor) -> Tensor:
    active = (a.values > 0).astype(np.float64)
    return record_operation("relu", a.values * active, (a,), lambda g: (g * active,))

_BINARY: dict[str, Callable[[Any, Any], Tensor]] = {"add": add, "sub": sub, "mul": mul}
_UNARY: dict[str, Callable[[Tensor], Tensor]] = {"sigmoid": sigmoid, "relu": relu}

def elementwise(op: str, a: Any, b: Any = None) -> Tensor:
    """
    Apply one of `add`, `sub`, `mul`, `scale`, `sigmoid`, `relu`.

    For `scale`, `b` is the (non-differentiable) float factor.

    Raises:
        UsageError: If `op` is unknown or an operand is missing.
        DimensionError: If the operand shapes are incompatible.
    """
    if op in _BINARY:
        if b is None:
            raise errors.UsageError(f"elementwise {op} needs two operands")
        return _BINARY[op](a, b)
    if op in _UNARY:
        return _UNARY[op](as_tensor(a))
    if op == "scale":
        if b is None:
            raise errors.UsageError("elementwise scale needs a factor")
        return scale(as_tensor(a), float(b))
    raise errors.UsageError(f"unknown elementwise operation '{op}'")


# ---- shape and reductions -------------------------------------------------

def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    perm = tuple(axes) if axes is not None else tuple(reversed(range(a.values.ndim)))
    inverse = tuple(np.argsort(perm))
    return record_operation(
        "transpose", np.ascontiguousarray(np.transpose(a.values, perm)), (a,),
        lambda g: (np.transpose(g, inverse),)
    )

def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    original = a.shape
    try:
        values = a.values.reshape(tuple(shape)).copy()
    except ValueError as e:
        raise errors.DimensionError(f"reshape: cannot reshape {original} to {tuple(shape)}") from e
    return record_operation("reshape", values, (a,), lambda g: (g.reshape(original),))

def tensor_sum(a: Tensor) -> Tensor:
    """Sum of all entries as a scalar tensor."""
    shape = a.shape
    return record_operation(
        "sum", np.asarray(a.values.sum(), dtype=np.float64), (a,),
        lambda g: (np.full(shape, float(g), dtype=np.float64),)
    )

def mean(a: Tensor, axis: int | None = None) -> Tensor:
    """Mean over one axis, or over every entry when `axis` is None."""
    shape = a.shape
    if axis is None:
        count = a.size
        return record_operation(
            "mean", np.asarray(a.values.mean(), dtype=np.float64), (a,),
            lambda g: (np.full(shape, float(g) / count, dtype=np.float64),)
        )
    axis = axis % a.values.ndim
    count = shape[axis]
    return record_operation(
        "mean", a.values.mean(axis=axis), (a,),
        lambda g: (np.broadcast_to(np.expand_dims(g, axis) / count, shape).copy(),)
    )

def take(a: Tensor, index: int) -> Tensor:
    """Select entry `index` of a vector as a scalar tensor."""
    if a.values.ndim != 1 or not 0 <= index < a.shape[0]:
        raise errors.DimensionError(f"take: index {index} invalid for shape {a.shape}")
    shape = a.shape

    def rule(g: Array) -> tuple[Array]:
        out = np.zeros(shape, dtype=np.float64)
        out[index] = float(g)
        return (out,)

    return record_operation("take", np.asarray(a.values[index], dtype=np.float64), (a,), rule)

def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a length-n bias vector to every row of an [..., n] tensor."""
    if bias.values.ndim != 1 or x.shape[-1] != bias.shape[0]:
        raise errors.DimensionError(f"add_bias: bias {bias.shape} does not match {x.shape}")
    lead = tuple(range(x.values.ndim - 1))
    return record_operation(
        "add_bias", x.values + bias.values, (x, bias),
        lambda g: (g, g.sum(axis=lead))
    )

def embedding(table: Tensor, indices: NDArray[np.integer[Any]]) -> Tensor:
    """
    Gather rows of a [vocab×h] table for an integer index array.

    Raises:
        InputError: If an index is outside the vocabulary.
    """
    indices = np.asarray(indices)
    vocab = table.shape[0]
    if not np.issubdtype(indices.dtype, np.integer):
        raise errors.InputError("embedding indices must be integers")
    if indices.size and (indices.min() < 0 or indices.max() >= vocab):
        raise errors.InputError(f"token index outside vocabulary of size {vocab}")
    shape = table.shape

    def rule(g: Array) -> tuple[Array]:
        out = np.zeros(shape, dtype=np.float64)
        np.add.at(out, indices.reshape(-1), g.reshape(-1, shape[1]))
        return (out,)

    return record_operation("embedding", table.values[indices], (table,), rule)


# ---- normalisation --------------------------------------------------------

def _softmax(values: Array, axis: int = -1) -> Array:
    shifted = values - values.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)

def _log_softmax(values: Array) -> Array:
    shifted = values - values.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))

def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis."""
    y = _softmax(a.values)
    return record_operation(
        "softmax", y, (a,),
        lambda g: (y * (g - (g * y).sum(axis=-1, keepdims=True)),)
    )

def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis to zero mean / unit variance, then apply `gamma`, `beta`."""
    width = x.shape[-1]
    if gamma.shape != (width,) or beta.shape != (width,):
        raise errors.DimensionError(f"layer_norm: parameters must have shape ({width},)")
    centered = x.values - x.values.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    normed = centered * inv_std
    gv = gamma.values
    lead = tuple(range(x.values.ndim - 1))

    def rule(g: Array) -> tuple[Array, Array, Array]:
        d_normed = g * gv
        dx = inv_std * (
            d_normed
            - d_normed.mean(axis=-1, keepdims=True)
            - normed * (d_normed * normed).mean(axis=-1, keepdims=True)
        )
        return dx, (g * normed).sum(axis=lead), g.sum(axis=lead)

    return record_operation("layer_norm", normed * gv + beta.values, (x, gamma, beta), rule)


# ---- losses ---------------------------------------------------------------

def softmax_cross_entropy(logits: Tensor, labels: NDArray[np.integer[Any]] | Sequence[int]) -> Tensor:
    """
    Mean negative log-likelihood of integer `labels` under softmax(`logits`).

    Raises:
        DimensionError: If logits are not [batch×classes] or labels have the wrong length.
        InputError: If a label is outside [0, classes).
    """
    labels = np.asarray(labels)
    if logits.values.ndim != 2 or labels.shape != (logits.shape[0],):
        raise errors.DimensionError(f"softmax_cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    batch, classes = logits.shape
    if not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= classes:
        raise errors.InputError(f"labels must be integers in [0, {classes})")
    rows = np.arange(batch)
    log_probs = _log_softmax(logits.values)
    loss = -log_probs[rows, labels].mean()

    def rule(g: Array) -> tuple[Array]:
        grad = np.exp(log_probs)
        grad[rows, labels] -= 1.0
        return (grad * (float(g) / batch),)

    return record_operation("softmax_cross_entropy", np.asarray(loss, dtype=np.float64), (logits,), rule)

def kl_divergence(student_logits: Tensor, teacher_logits: Tensor, distill_temperature: float) -> Tensor:
    """
    KL(teacher ‖ student) between softmax(logits / temperature), averaged over the batch.

    Raises:
        DimensionError: If the two logit tensors differ in shape or are not 2-D.
        ConfigurationError: If `distill_temperature` is not positive.
    """
    if student_logits.shape != teacher_logits.shape or student_logits.values.ndim != 2:
        raise errors.DimensionError(
            f"kl_divergence: student {student_logits.shape} vs teacher {teacher_logits.shape}"
        )
    if not distill_temperature > 0:
        raise errors.ConfigurationError("must be positive", field="distill_temperature")
    t = float(distill_temperature)
    batch = student_logits.shape[0]
    log_p_student = _log_softmax(student_logits.values / t)
    log_p_teacher = _log_softmax(teacher_logits.values / t)
    p_teacher = np.exp(log_p_teacher)
    gap = log_p_teacher - log_p_student
    per_row = (p_teacher * gap).sum(axis=-1)

    def rule(g: Array) -> tuple[Array, Array]:
        factor = float(g) / (batch * t)
        d_student = (np.exp(log_p_student) - p_teacher) * factor
        d_teacher = p_teacher * (gap - per_row[:, None]) * factor
        return d_student, d_teacher

    return record_operation(
        "kl_divergence", np.asarray(per_row.mean(), dtype=np.float64),
        (student_logits, teacher_logits), rule
    )
