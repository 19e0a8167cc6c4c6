"""Parameters, initialization, and the precision switch used by gradient checks."""
from __future__ import annotations

from contextlib import contextmanager
from typing import Iterable, Sequence

import numpy as np

# Tensors are plain numpy arrays; f32 row-major is the storage convention.
Tensor = np.ndarray

STORAGE_DTYPE = np.float32


class Param:
    """A learnable array with its gradient and momentum buffer.

    All three share one shape and dtype. Gradients accumulate across backward
    calls until sgd_step (or zero_grads) clears them.
    """

    __slots__ = ("name", "value", "grad", "momentum")

    def __init__(self, value: np.ndarray, name: str = ""):
        v = np.ascontiguousarray(value, dtype=STORAGE_DTYPE)
        if not np.all(np.isfinite(v)):
            raise ValueError(f"non-finite initial value for param {name!r}")
        self.name = name
        self.value = v
        self.grad = np.zeros_like(v)
        self.momentum = np.zeros_like(v)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def cast_(self, dtype) -> None:
        self.value = self.value.astype(dtype)
        self.grad = self.grad.astype(dtype)
        self.momentum = self.momentum.astype(dtype)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Param({self.name!r}, shape={self.value.shape}, dtype={self.value.dtype})"


def zero_grads(params: Iterable[Param]) -> None:
    for p in params:
        p.zero_grad()


@contextmanager
def full_precision(params: Sequence[Param]):
    """Temporarily hold the given params in f64.

    Finite differences at h=1e-3 need exact perturbations and an f64 loss
    path; promoting the parameters promotes every downstream activation.
    Original dtypes are restored on exit (values round-trip through the
    current f64 contents, so in-place edits made inside the context stick).
    """
    originals = [p.value.dtype for p in params]
    for p in params:
        p.cast_(np.float64)
    try:
        yield
    finally:
        for p, dt in zip(params, originals):
            p.cast_(dt)


def he_uniform(rng: np.random.Generator, shape: Sequence[int], fan_in: int) -> np.ndarray:
    if fan_in <= 0:
        raise ValueError(f"fan_in must be positive, got {fan_in}")
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=tuple(shape)).astype(STORAGE_DTYPE)


def check_finite(x: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values in {what}")
    return x
