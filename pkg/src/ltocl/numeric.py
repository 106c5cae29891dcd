"""Dense float64 primitives with manual analytic gradients.

Matrices are plain 2-D ``numpy.ndarray`` of dtype float64 (row-major). Parameters
live in :class:`ParamTensor`, which pairs a value with an accumulating gradient
buffer: backward passes ADD into ``grad``; :func:`sgd_step` consumes and clears it.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

EPSILON = 1e-12  # guard for zero-row normalization


def as_matrix(x) -> np.ndarray:
    """Coerce to a 2-D float64 array (1-D input becomes a single row)."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim == 1:
        m = m[np.newaxis, :]
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got ndim={m.ndim}")
    return m


@dataclass
class ParamTensor:
    """A trainable value with its gradient accumulator.

    ``grad`` always has the same shape as ``value``. When ``trainable`` is False,
    :func:`sgd_step` leaves both value and gradient untouched.
    """

    value: np.ndarray
    trainable: bool = True
    grad: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = as_matrix(self.value)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = 0.1
    weight_decay: float = 1e-4

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be non-negative, got {self.weight_decay}")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit inner-dimension check."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def l2_normalize_rows(m: np.ndarray, epsilon: float = EPSILON) -> np.ndarray:
    """Divide each row by max(||row||, epsilon); zero rows stay zero."""
    m = as_matrix(m)
    norms = np.maximum(np.linalg.norm(m, axis=1, keepdims=True), epsilon)
    return m / norms


def l2_normalize_rows_backward(
    grad_out: np.ndarray, m: np.ndarray, epsilon: float = EPSILON
) -> np.ndarray:
    """Gradient of l2_normalize_rows w.r.t. its input.

    For rows above the epsilon guard: d/dx (x/||x||) applied to grad_out, i.e.
    (g - y (y.g)) / ||x|| with y = x/||x||. Guarded rows scale by 1/epsilon.
    """
    m = as_matrix(m)
    grad_out = as_matrix(grad_out)
    raw = np.linalg.norm(m, axis=1, keepdims=True)
    norms = np.maximum(raw, epsilon)
    y = m / norms
    inner = np.sum(y * grad_out, axis=1, keepdims=True)
    grad_in = (grad_out - y * inner) / norms
    # below the guard the map is linear: y = x / epsilon
    clipped = (raw < epsilon).ravel()
    if clipped.any():
        grad_in[clipped] = grad_out[clipped] / epsilon
    return grad_in


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for overflow safety."""
    m = as_matrix(m)
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def relu(m: np.ndarray) -> np.ndarray:
    return np.maximum(m, 0.0)


def relu_backward(grad_out: np.ndarray, pre_activation: np.ndarray) -> np.ndarray:
    return np.where(pre_activation > 0.0, grad_out, 0.0)


def sgd_step(params: Iterable[ParamTensor], cfg: SgdConfig) -> None:
    """value <- value - lr * (grad + wd * value) for trainable tensors, then clear grads.

    Non-trainable tensors are left untouched (value and gradient alike).
    """
    for p in params:
        if not p.trainable:
            continue
        p.value -= cfg.learning_rate * (p.grad + cfg.weight_decay * p.value)
        p.zero_grad()


def finite_difference_gradient(
    loss_fn: Callable[[ParamTensor], float], p: ParamTensor, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient estimate of loss_fn w.r.t. every entry of p.

    Perturbs p.value in place and restores it; loss_fn must be deterministic.
    """
    grad = np.zeros_like(p.value)
    flat = p.value.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn(p)
        flat[i] = orig - h
        down = loss_fn(p)
        flat[i] = orig
        grad.ravel()[i] = (up - down) / (2.0 * h)
    return grad
