"""
Reverse-mode automatic differentiation over numpy arrays.

Every primitive builds an output Tensor holding references to its parents and
a closure that pushes the output gradient back to them. ``Tensor.backward``
visits the recorded graph once in reverse topological order. Gradients of
leaves accumulate across uses and across backward calls until cleared.
"""

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np
from loguru import logger

IGNORE_LABEL = -1
ATTENTION_MASK_VALUE = -1e9

_grad_enabled = True


@contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate without recording the graph."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A float64 array with an optional gradient and the op that produced it."""

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _op: str = "",
        name: str = "",
    ):
        self.data = np.array(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._op = _op
        self._backward: Callable[[], None] = lambda: None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def _accumulate(self, grad: np.ndarray) -> None:
        grad = _unbroadcast(np.asarray(grad, dtype=np.float64), self.shape)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """
        Propagate gradients from this scalar to every leaf that requires them.

        Raises:
            ValueError: If this tensor is not a scalar
        """
        if self.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {self.shape}")

        order = _topological_order(self)
        self.grad = np.ones_like(self.data) if self.grad is None else self.grad + 1.0
        for node in reversed(order):
            if node.grad is not None:
                node._backward()

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(other, scale(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, op={self._op or 'leaf'})"


def tensor(data, requires_grad: bool = False, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data, parents: Sequence[Tensor], op: str) -> Tensor:
    """Build an output node; records parents only while grad mode is on."""
    track = _grad_enabled and any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=track, _parents=tuple(parents) if track else (), _op=op)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]

    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))

    return order


# Arithmetic


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = _result(a.data + b.data, (a, b), "add")

    def _backward():
        if a.requires_grad:
            a._accumulate(out.grad)
        if b.requires_grad:
            b._accumulate(out.grad)

    out._backward = _backward
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = _result(a.data * b.data, (a, b), "mul")

    def _backward():
        if a.requires_grad:
            a._accumulate(out.grad * b.data)
        if b.requires_grad:
            b._accumulate(out.grad * a.data)

    out._backward = _backward
    return out


def scale(a: Tensor, factor: float) -> Tensor:
    out = _result(a.data * factor, (a,), "scale")

    def _backward():
        if a.requires_grad:
            a._accumulate(out.grad * factor)

    out._backward = _backward
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Batched matrix product with numpy broadcasting over leading axes.

    Both operands need at least two dimensions.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs operands with >= 2 dims, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    out = _result(a.data @ b.data, (a, b), "matmul")

    def _backward():
        if a.requires_grad:
            a._accumulate(out.grad @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            b._accumulate(np.swapaxes(a.data, -1, -2) @ out.grad)

    out._backward = _backward
    return out


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = _result(a.data.sum(axis=axis, keepdims=keepdims), (a,), "sum")

    def _backward():
        if not a.requires_grad:
            return
        grad = out.grad
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        a._accumulate(np.broadcast_to(grad, a.shape))

    out._backward = _backward
    return out


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


# Elementwise


def _elementwise(a: Tensor, value: np.ndarray, derivative: np.ndarray, op: str) -> Tensor:
    out = _result(value, (a,), op)

    def _backward():
        if a.requires_grad:
            a._accumulate(out.grad * derivative)

    out._backward = _backward
    return out


def exp(a: Tensor) -> Tensor:
    value = np.exp(a.data)
    return _elementwise(a, value, value, "exp")


def tanh(a: Tensor) -> Tensor:
    value = np.tanh(a.data)
    return _elementwise(a, value, 1.0 - value**2, "tanh")


def sigmoid(a: Tensor) -> Tensor:
    value = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _elementwise(a, value, value * (1.0 - value), "sigmoid")


def softplus(a: Tensor) -> Tensor:
    value = np.logaddexp(0.0, a.data)
    derivative = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _elementwise(a, value, derivative, "softplus")


def relu(a: Tensor) -> Tensor:
    return _elementwise(a, np.maximum(a.data, 0.0), (a.data > 0).astype(np.float64), "relu")


def identity(a: Tensor) -> Tensor:
    return a


ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "identity": identity,
}


# Normalization


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    value = e / e.sum(axis=axis, keepdims=True)
    out = _result(value, (a,), "softmax")

    def _backward():
        if a.requires_grad:
            g = out.grad
            a._accumulate(value * (g - (g * value).sum(axis=axis, keepdims=True)))

    out._backward = _backward
    return out


def layer_norm(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean and unit variance (no affine part)."""
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    inv_std = 1.0 / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)
    normalized = centered * inv_std
    out = _result(normalized, (a,), "layer_norm")

    def _backward():
        if not a.requires_grad:
            return
        g = out.grad
        n = a.shape[-1]
        grad = inv_std / n * (
            n * g - g.sum(axis=-1, keepdims=True) - normalized * (g * normalized).sum(axis=-1, keepdims=True)
        )
        a._accumulate(grad)

    out._backward = _backward
    return out


# Indexing and shape


def embedding_lookup(table: Tensor, indices) -> Tensor:
    """Rows of ``table`` at integer ``indices``; output shape ``indices.shape + (d,)``."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= table.shape[0]):
        raise IndexError(f"Embedding index out of range for table of {table.shape[0]} rows")
    out = _result(table.data[indices], (table,), "embedding")

    def _backward():
        if table.requires_grad:
            grad = np.zeros_like(table.data)
            np.add.at(grad, indices, out.grad)
            table._accumulate(grad)

    out._backward = _backward
    return out


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, "concat")
    boundaries = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward():
        for t, grad in zip(tensors, np.split(out.grad, boundaries, axis=axis)):
            if t.requires_grad:
                t._accumulate(grad)

    out._backward = _backward
    return out


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = _result(np.stack([t.data for t in tensors], axis=axis), tensors, "stack")

    def _backward():
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accumulate(np.take(out.grad, i, axis=axis))

    out._backward = _backward
    return out


def select(a: Tensor, index: int, axis: int = 0) -> Tensor:
    """Take one index along an axis, dropping that axis."""
    out = _result(np.take(a.data, index, axis=axis), (a,), "select")

    def _backward():
        if a.requires_grad:
            grad = np.zeros_like(a.data)
            slicer = [slice(None)] * a.ndim
            slicer[axis] = index
            grad[tuple(slicer)] = out.grad
            a._accumulate(grad)

    out._backward = _backward
    return out


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    out = _result(a.data.reshape(shape), (a,), "reshape")

    def _backward():
        if a.requires_grad:
            a._accumulate(out.grad.reshape(a.shape))

    out._backward = _backward
    return out


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    """Permute axes; the default swaps the last two."""
    if axes is None:
        axes = list(range(a.ndim))
        axes[-2], axes[-1] = axes[-1], axes[-2]
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = _result(np.transpose(a.data, axes), (a,), "transpose")

    def _backward():
        if a.requires_grad:
            a._accumulate(np.transpose(out.grad, inverse))

    out._backward = _backward
    return out


# Losses and attention


def cross_entropy_tagging_loss(logits: Tensor, labels, ignore_label: int = IGNORE_LABEL) -> Tensor:
    """
    Mean token-level cross entropy over positions whose label is not ignored.

    Args:
        logits: Shape (..., V)
        labels: Integer array with the leading shape of ``logits``
        ignore_label: Label value that contributes nothing

    Returns:
        Scalar loss
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != logits.shape[:-1]:
        raise ValueError(f"Labels {labels.shape} do not match logits {logits.shape}")

    mask = labels != ignore_label
    count = max(int(mask.sum()), 1)
    safe_labels = np.where(mask, labels, 0)

    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_probs = shifted - log_norm
    picked = np.take_along_axis(log_probs, safe_labels[..., None], axis=-1)[..., 0]
    loss = -(picked * mask).sum() / count

    out = _result(loss, (logits,), "cross_entropy")

    def _backward():
        if logits.requires_grad:
            grad = np.exp(log_probs)
            np.put_along_axis(
                grad,
                safe_labels[..., None],
                np.take_along_axis(grad, safe_labels[..., None], axis=-1) - 1.0,
                axis=-1,
            )
            grad *= (mask / count)[..., None]
            logits._accumulate(out.grad * grad)

    out._backward = _backward
    return out


def causal_single_head_attention(x: Tensor, w_query: Tensor, w_key: Tensor, w_value: Tensor) -> Tensor:
    """
    Single-head attention where position i attends to positions j <= i.

    Args:
        x: Shape (batch, n, d)
        w_query, w_key, w_value: Shape (d, d_head)

    Returns:
        Shape (batch, n, d_head)
    """
    if x.ndim != 3:
        raise ValueError(f"Attention input must be (batch, n, d), got {x.shape}")

    queries = matmul(x, w_query)
    keys = matmul(x, w_key)
    values = matmul(x, w_value)

    n = x.shape[1]
    scores = scale(matmul(queries, transpose(keys)), 1.0 / math.sqrt(w_key.shape[-1]))
    mask = np.triu(np.full((n, n), ATTENTION_MASK_VALUE), k=1)
    weights = softmax(add(scores, mask), axis=-1)
    return matmul(weights, values)


# Optimization


@dataclass
class OptimizerState:
    """Adam moments and hyperparameters."""

    first_moments: list[np.ndarray]
    second_moments: list[np.ndarray]
    step: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_parameters(cls, params: Sequence[Tensor], **hyperparameters) -> "OptimizerState":
        return cls(
            first_moments=[np.zeros_like(p.data) for p in params],
            second_moments=[np.zeros_like(p.data) for p in params],
            **hyperparameters,
        )


def adam_step(params: Sequence[Tensor], grads: Sequence[Optional[np.ndarray]], state: OptimizerState) -> OptimizerState:
    """
    Apply one Adam update in place.

    Args:
        params: Parameters to update
        grads: Gradients matching ``params``; None counts as zero
        state: Moment buffers, updated in place

    Returns:
        The same state object
    """
    if len(params) != len(grads) or len(params) != len(state.first_moments):
        raise ValueError("Parameters, gradients and optimizer buffers differ in count")

    state.step += 1
    bias1 = 1.0 - state.beta1**state.step
    bias2 = 1.0 - state.beta2**state.step

    for p, g, m, v in zip(params, grads, state.first_moments, state.second_moments):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape:
            raise ValueError(f"Gradient shape {g.shape} does not match parameter {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.eps)

    return state


@dataclass
class Adam:
    params: list[Tensor]
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    state: OptimizerState = field(init=False)

    def __post_init__(self):
        self.state = OptimizerState.for_parameters(
            self.params,
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
        )

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state)


def gradient_check(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
) -> float:
    """
    Largest relative error between backward gradients and central differences.

    Args:
        fn: Builds a scalar loss from ``params``
        params: Leaves to check (perturbed in place and restored)
        h: Finite-difference step

    Returns:
        max |analytic − numeric| / max(1, |analytic|, |numeric|)
    """
    for p in params:
        p.zero_grad()
    fn().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    with no_grad():
        for p, grad in zip(params, analytic):
            for index in np.ndindex(p.shape):
                original = p.data[index]
                p.data[index] = original + h
                upper = fn().item()
                p.data[index] = original - h
                lower = fn().item()
                p.data[index] = original

                numeric = (upper - lower) / (2 * h)
                error = abs(grad[index] - numeric) / max(1.0, abs(grad[index]), abs(numeric))
                worst = max(worst, error)

    logger.debug(f"Gradient check over {len(params)} tensors: max relative error {worst:.2e}")
    return worst
