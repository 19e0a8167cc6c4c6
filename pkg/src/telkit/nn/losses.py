"""Scalar losses returning (loss, gradient w.r.t. the first argument)."""
from __future__ import annotations

import numpy as np


def softmax_cross_entropy(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    if logits.ndim != 1:
        raise ValueError(f"expected a logit vector, got shape {logits.shape}")
    if not 0 <= label < logits.shape[0]:
        raise ValueError(f"label {label} out of range for {logits.shape[0]} classes")
    z = logits.astype(np.float64, copy=False)
    z = z - z.max()
    log_norm = np.log(np.exp(z).sum())
    probs = np.exp(z - log_norm)
    loss = float(log_norm - z[label])
    grad = probs.copy()
    grad[label] -= 1.0
    return loss, grad.astype(logits.dtype, copy=False)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits.astype(np.float64, copy=False)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return (e / e.sum(axis=-1, keepdims=True)).astype(logits.dtype, copy=False)


def hinge(score: float, target: int) -> tuple[float, float]:
    """max(0, 1 - target*score) with target in {-1, +1}."""
    if target not in (-1, 1):
        raise ValueError(f"hinge target must be -1 or +1, got {target}")
    margin = 1.0 - target * float(score)
    if margin > 0.0:
        return margin, -float(target)
    return 0.0, 0.0


def smooth_l1(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Summed elementwise smooth L1: 0.5*d^2 below |d|=1, |d|-0.5 above."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
    d = p - t
    small = np.abs(d) < 1.0
    loss = float(np.where(small, 0.5 * d * d, np.abs(d) - 0.5).sum())
    grad = np.where(small, d, np.sign(d))
    return loss, grad.astype(np.asarray(pred).dtype, copy=False)
