"""Central-difference gradient verification."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .core import Param, full_precision


def grad_check(
    f: Callable[[], float],
    params: Sequence[Param],
    rng: np.random.Generator,
    max_coords: int = 8,
    h: float = 1e-3,
) -> float:
    """Max relative error between analytic and numeric gradients.

    `f` must run the network on fixed inputs, accumulate gradients into the
    given params (from zero), and return the scalar loss. Checks up to
    `max_coords` random coordinates per parameter. Params are held in f64
    for the duration; h=1e-3 differences are meaningless in f32.
    """
    worst = 0.0
    with full_precision(params):
        for p in params:
            p.zero_grad()
        f()
        analytic = [p.grad.copy() for p in params]
        for p, a in zip(params, analytic):
            flat = p.value.reshape(-1)
            n = flat.shape[0]
            coords = rng.permutation(n)[: min(max_coords, n)]
            for c in coords:
                saved = flat[c]
                flat[c] = saved + h
                for q in params:
                    q.zero_grad()
                loss_plus = f()
                flat[c] = saved - h
                for q in params:
                    q.zero_grad()
                loss_minus = f()
                flat[c] = saved
                numeric = (loss_plus - loss_minus) / (2.0 * h)
                ana = a.reshape(-1)[c]
                err = abs(ana - numeric) / max(abs(ana), abs(numeric), 1e-8)
                worst = max(worst, err)
    return worst
