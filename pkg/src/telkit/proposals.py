"""Sliding-window proposal generation and interval NMS."""
from __future__ import annotations

from typing import Callable, Sequence

from .data import Proposal, TimeInterval
from .metrics import temporal_iou

DEFAULT_WINDOW_LENGTHS = (10.0, 25.0, 40.0, 55.0, 70.0, 85.0, 100.0, 130.0, 160.0, 190.0)
STRIDE_RATIO = 0.75


def sliding_windows(
    duration: float,
    lengths: Sequence[float] = DEFAULT_WINDOW_LENGTHS,
    stride_ratio: float = STRIDE_RATIO,
) -> list[TimeInterval]:
    """Multi-scale windows [k*stride*L, k*stride*L + L] while the start is inside the video.

    The final window of each scale is clamped to end at the duration; lengths
    longer than the video emit a single [0, duration] window.
    """
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    out: list[TimeInterval] = []
    for length in lengths:
        if length <= 0:
            raise ValueError(f"window lengths must be positive, got {length}")
        if length > duration:
            out.append(TimeInterval(0.0, duration))
            continue
        stride = stride_ratio * length
        k = 0
        while True:
            start = k * stride
            if start >= duration:
                break
            out.append(TimeInterval(start, min(start + length, duration)))
            k += 1
    return out


def nms_intervals(
    items: Sequence[tuple[TimeInterval, float]],
    threshold: float,
) -> tuple[int, ...]:
    """Greedy NMS over (interval, score) pairs; returns kept indices in keep order.

    Descending score, ties by earlier start then input order. A candidate is
    suppressed when its IoU with any kept item is >= threshold (strict keep
    below threshold), so threshold 1 removes exact duplicates only.
    """
    order = sorted(range(len(items)), key=lambda i: (-items[i][1], items[i][0].start, i))
    kept: list[int] = []
    for i in order:
        cand = items[i][0]
        if all(temporal_iou(cand, items[j][0]) < threshold for j in kept):
            kept.append(i)
    return tuple(kept)


def nms_proposals(proposals: Sequence[Proposal], threshold: float) -> tuple[Proposal, ...]:
    kept = nms_intervals([(p.interval, p.score) for p in proposals], threshold)
    return tuple(proposals[i] for i in kept)


def rank_and_filter(
    windows: Sequence[TimeInterval],
    scores: Sequence[float],
    nms_threshold: float = 0.8,
    top_k: int = 100,
) -> tuple[Proposal, ...]:
    """Score -> class-agnostic NMS -> top_k. Scores must already be in [0, 1]."""
    if len(windows) != len(scores):
        raise ValueError(f"{len(windows)} windows vs {len(scores)} scores")
    props = [Proposal(w, float(s)) for w, s in zip(windows, scores)]
    return nms_proposals(props, nms_threshold)[:top_k]
