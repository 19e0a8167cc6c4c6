"""SGD with classical momentum."""
from __future__ import annotations

from typing import Iterable

from .core import Param


def sgd_step(params: Iterable[Param], lr: float, momentum: float = 0.9) -> None:
    """v <- momentum*v + grad; p <- p - lr*v; gradients are cleared."""
    for p in params:
        p.momentum *= momentum
        p.momentum += p.grad
        p.value -= lr * p.momentum
        p.zero_grad()
