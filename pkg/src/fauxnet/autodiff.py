"""Reverse-mode automatic differentiation over float64 matrices.

A ``Tensor`` wraps a numpy array and remembers how it was produced; calling
:func:`backward` on a scalar result sweeps the recorded tape in reverse
topological order and accumulates gradients into every node. The op set is
deliberately small: exactly what a graph-convolutional classifier with soft
cluster pooling needs. Kernels run through numpy; gradients are per-op
closures checked against central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .comment_graph import SparseAdjacency

__all__ = [
    "Tensor",
    "backward",
    "matmul",
    "spmm",
    "relu",
    "row_softmax",
    "mean_rows",
    "add_bias",
    "transpose",
    "slice_rows",
    "slice_cols",
    "concat_rows",
    "block_diag",
    "sum_all",
    "cross_entropy_loss",
    "AdamState",
    "adam_step",
    "PROB_CLAMP",
]

PROB_CLAMP = 1e-12


class Tensor:
    """A node of the computation tape: value, gradient slot, provenance."""

    __slots__ = ("value", "grad", "_parents", "_backprop")

    def __init__(
        self,
        value: np.ndarray,
        parents: tuple["Tensor", ...] = (),
        backprop: Optional[Callable[[], None]] = None,
    ) -> None:
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self._parents = parents
        self._backprop = backprop

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Tensor(shape={self.value.shape}, leaf={not self._parents})"


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every tensor that ``loss`` depends on.

    ``loss`` must be scalar-valued. Gradients are fresh arrays per call;
    running backward twice overwrites, it does not accumulate across calls.
    """
    if loss.value.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.value.shape}")

    order: list[Tensor] = []
    seen: set[int] = {id(loss)}
    stack: list[tuple[Tensor, int]] = [(loss, 0)]
    while stack:
        node, cursor = stack.pop()
        if cursor < len(node._parents):
            stack.append((node, cursor + 1))
            parent = node._parents[cursor]
            if id(parent) not in seen:
                seen.add(id(parent))
                stack.append((parent, 0))
        else:
            order.append(node)

    for node in order:
        node.grad = np.zeros_like(node.value)
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node._backprop is not None:
            node._backprop()


def _require_2d(x: Tensor, op: str) -> None:
    if x.value.ndim != 2:
        raise ValueError(f"{op} expects a 2-D matrix, got shape {x.value.shape}")


def matmul(x: Tensor, y: Tensor) -> Tensor:
    """Dense matrix product."""
    _require_2d(x, "matmul")
    _require_2d(y, "matmul")
    if x.value.shape[1] != y.value.shape[0]:
        raise ValueError(
            f"matmul shape mismatch: {x.value.shape} @ {y.value.shape}"
        )
    out = Tensor(x.value @ y.value, (x, y))

    def backprop() -> None:
        x.grad += out.grad @ y.value.T
        y.grad += x.value.T @ out.grad

    out._backprop = backprop
    return out


def spmm(adj: SparseAdjacency, x: Tensor) -> Tensor:
    """Sparse-dense product ``adj @ x``; the sparse factor is a constant."""
    _require_2d(x, "spmm")
    if adj.dim != x.value.shape[0]:
        raise ValueError(
            f"spmm shape mismatch: sparse ({adj.dim}, {adj.dim}) @ dense {x.value.shape}"
        )
    result = np.zeros((adj.dim, x.value.shape[1]), dtype=np.float64)
    if adj.nnz:
        np.add.at(result, adj.rows, adj.vals[:, None] * x.value[adj.cols])
    out = Tensor(result, (x,))

    def backprop() -> None:
        # gradient w.r.t. the dense factor is adj.T @ upstream
        if adj.nnz:
            np.add.at(x.grad, adj.cols, adj.vals[:, None] * out.grad[adj.rows])

    out._backprop = backprop
    return out


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x); the subgradient at 0 is 0."""
    out = Tensor(np.maximum(x.value, 0.0), (x,))

    def backprop() -> None:
        x.grad += out.grad * (x.value > 0.0)

    out._backprop = backprop
    return out


def row_softmax(x: Tensor) -> Tensor:
    """Per-row softmax with max subtraction for overflow safety."""
    _require_2d(x, "row_softmax")
    shifted = x.value - x.value.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    soft = exp / exp.sum(axis=1, keepdims=True)
    out = Tensor(soft, (x,))

    def backprop() -> None:
        g = out.grad
        x.grad += (g - (g * soft).sum(axis=1, keepdims=True)) * soft

    out._backprop = backprop
    return out


def mean_rows(x: Tensor) -> Tensor:
    """Arithmetic mean of the rows, as a 1 x cols matrix."""
    _require_2d(x, "mean_rows")
    n = x.value.shape[0]
    if n < 1:
        raise ValueError("mean_rows requires at least one row")
    out = Tensor(x.value.mean(axis=0, keepdims=True), (x,))

    def backprop() -> None:
        x.grad += out.grad / n

    out._backprop = backprop
    return out


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a 1 x cols bias row to every row of ``x``."""
    _require_2d(x, "add_bias")
    if bias.value.shape != (1, x.value.shape[1]):
        raise ValueError(
            f"add_bias shape mismatch: {x.value.shape} + {bias.value.shape}"
        )
    out = Tensor(x.value + bias.value, (x, bias))

    def backprop() -> None:
        x.grad += out.grad
        bias.grad += out.grad.sum(axis=0, keepdims=True)

    out._backprop = backprop
    return out


def transpose(x: Tensor) -> Tensor:
    _require_2d(x, "transpose")
    out = Tensor(x.value.T.copy(), (x,))

    def backprop() -> None:
        x.grad += out.grad.T

    out._backprop = backprop
    return out


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    _require_2d(x, "slice_rows")
    if not 0 <= start <= stop <= x.value.shape[0]:
        raise ValueError(f"row slice [{start}:{stop}] invalid for shape {x.value.shape}")
    out = Tensor(x.value[start:stop].copy(), (x,))

    def backprop() -> None:
        x.grad[start:stop] += out.grad

    out._backprop = backprop
    return out


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    _require_2d(x, "slice_cols")
    if not 0 <= start <= stop <= x.value.shape[1]:
        raise ValueError(f"column slice [{start}:{stop}] invalid for shape {x.value.shape}")
    out = Tensor(x.value[:, start:stop].copy(), (x,))

    def backprop() -> None:
        x.grad[:, start:stop] += out.grad

    out._backprop = backprop
    return out


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack matrices with equal column counts on top of each other."""
    if not parts:
        raise ValueError("concat_rows requires at least one part")
    for p in parts:
        _require_2d(p, "concat_rows")
    cols = {p.value.shape[1] for p in parts}
    if len(cols) != 1:
        raise ValueError(f"concat_rows column mismatch: {sorted(cols)}")
    out = Tensor(np.concatenate([p.value for p in parts], axis=0), tuple(parts))

    def backprop() -> None:
        offset = 0
        for p in parts:
            n = p.value.shape[0]
            p.grad += out.grad[offset : offset + n]
            offset += n

    out._backprop = backprop
    return out


def block_diag(parts: Sequence[Tensor]) -> Tensor:
    """Place square matrices as diagonal blocks of one big matrix."""
    if not parts:
        raise ValueError("block_diag requires at least one part")
    sizes = []
    for p in parts:
        _require_2d(p, "block_diag")
        n, m = p.value.shape
        if n != m:
            raise ValueError(f"block_diag expects square blocks, got {p.value.shape}")
        sizes.append(n)
    total = sum(sizes)
    value = np.zeros((total, total), dtype=np.float64)
    offset = 0
    for p, n in zip(parts, sizes):
        value[offset : offset + n, offset : offset + n] = p.value
        offset += n
    out = Tensor(value, tuple(parts))

    def backprop() -> None:
        off = 0
        for p, n in zip(parts, sizes):
            p.grad += out.grad[off : off + n, off : off + n]
            off += n

    out._backprop = backprop
    return out


def sum_all(x: Tensor) -> Tensor:
    """Sum of all entries, as a scalar tensor."""
    out = Tensor(x.value.sum(), (x,))

    def backprop() -> None:
        x.grad += out.grad

    out._backprop = backprop
    return out


def cross_entropy_loss(probabilities: Tensor, labels: np.ndarray) -> Tensor:
    """Mean binary cross-entropy of predicted positive-class probabilities.

    Probabilities are clamped to [1e-12, 1 - 1e-12] before the logs, so the
    loss and its gradient stay finite at 0 and 1. The gradient w.r.t. each
    probability is (p - y) / (N * p * (1 - p)), evaluated at the clamped
    values.
    """
    flat = probabilities.value.reshape(-1)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if flat.shape != y.shape:
        raise ValueError(
            f"cross_entropy_loss length mismatch: {flat.shape[0]} probabilities, "
            f"{y.shape[0]} labels"
        )
    n = flat.shape[0]
    clamped = np.clip(flat, PROB_CLAMP, 1.0 - PROB_CLAMP)
    value = -(y * np.log(clamped) + (1.0 - y) * np.log(1.0 - clamped)).mean()
    out = Tensor(np.asarray(value), (probabilities,))

    def backprop() -> None:
        dp = (clamped - y) / (n * clamped * (1.0 - clamped))
        probabilities.grad += (out.grad * dp).reshape(probabilities.value.shape)

    out._backprop = backprop
    return out


@dataclass
class AdamState:
    """Optimizer state: step count plus per-parameter moment estimates."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    @staticmethod
    def for_params(
        params: Mapping[str, np.ndarray],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> "AdamState":
        return AdamState(
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
            step=0,
            first_moment={k: np.zeros_like(v) for k, v in params.items()},
            second_moment={k: np.zeros_like(v) for k, v in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One Adam update, in place; returns the same objects for chaining.

    m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;  with bias-corrected
    m_hat, v_hat the parameter moves by -lr * m_hat / (sqrt(v_hat) + eps).
    """
    state.step += 1
    t = state.step
    for name, value in params.items():
        grad = grads[name]
        if grad.shape != value.shape:
            raise ValueError(
                f"adam_step shape mismatch for {name!r}: "
                f"param {value.shape}, grad {grad.shape}"
            )
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        value -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state
