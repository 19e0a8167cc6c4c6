"""SGD training loops for the proposal scorer and the detector.

Both loops are plain-python batch loops over numpy kernels. Determinism
matters more than throughput here: every random choice flows from the
caller's Generator, so a fixed seed reproduces the loss curve bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset, FeatureSequence, Instance, TimeInterval, VideoAnnotation
from .metrics import temporal_iou
from .model import (
    COMPLETE,
    Detector,
    ProposalScorer,
    TargetKind,
    assign_detector_targets,
    detector_loss,
    resample_window,
)
from .nn import sgd_step, softmax_cross_entropy
from .proposals import rank_and_filter, sliding_windows

__all__ = [
    "StepRecord",
    "TrainingError",
    "TrainSchedule",
    "gt_jitter",
    "score_windows",
    "train_detector",
    "train_scorer",
    "window_class",
]


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    lr_drop_epoch: int = 15  # lr divided by 10 from this epoch on

    def lr_at(self, epoch: int) -> float:
        return self.lr / 10.0 if epoch >= self.lr_drop_epoch else self.lr


@dataclass(frozen=True)
class StepRecord:
    phase: str
    epoch: int
    step: int
    loss: float


def _check_loss(value: float, phase: str, epoch: int, step: int) -> None:
    if not math.isfinite(value):
        raise TrainingError(
            f"{phase}: non-finite loss {value} at epoch {epoch} step {step}; "
            "lower the learning rate or inspect the input features"
        )


# ---------------------------------------------------------------------------
# proposal scorer

def window_class(window: TimeInterval, instances: Sequence[Instance]) -> int:
    """Scorer class id for a candidate window, or -1 for none (skipped).

    Same bands as detector target assignment: complete at IoU >= 0.7,
    incomplete when mostly inside an instance yet IoU < 0.3, background
    below IoU 0.1.
    """
    best_iou = 0.0
    best_frac = 0.0
    for inst in instances:
        iou = temporal_iou(window, inst.interval)
        best_iou = max(best_iou, iou)
        inter = min(window.end, inst.interval.end) - max(window.start, inst.interval.start)
        if inter > 0 and window.length > 0:
            best_frac = max(best_frac, inter / window.length)
    if best_iou >= 0.7:
        return 2
    if best_iou < 0.3 and best_frac >= 0.8:
        return 1
    if best_iou < 0.1:
        return 0
    return -1


def _snippet_span(interval: TimeInterval, fs: FeatureSequence) -> tuple[float, float]:
    t_len = float(fs.num_snippets)
    lo = min(max(interval.start / fs.snippet_interval, 0.0), t_len)
    hi = min(max(interval.end / fs.snippet_interval, 0.0), t_len)
    return lo, max(hi, lo)


def _scorer_examples(
    video: VideoAnnotation,
    fs: FeatureSequence,
    window_lengths: Sequence[float],
    num_snippets: int,
    per_class_cap: int,
    rng: np.random.Generator,
):
    """Balanced per-video example windows as (array, class) pairs."""
    pools: dict[int, list[TimeInterval]] = {0: [], 1: [], 2: []}
    for w in sliding_windows(video.duration, window_lengths):
        cls = window_class(w, video.instances)
        if cls >= 0:
            pools[cls].append(w)
    for inst in video.instances:  # exact spans guarantee complete examples
        pools[2].append(inst.interval)
    out = []
    for cls, pool in pools.items():
        if not pool:
            continue
        if len(pool) > per_class_cap:
            picks = rng.choice(len(pool), size=per_class_cap, replace=False)
            pool = [pool[int(i)] for i in picks]
        for w in pool:
            lo, hi = _snippet_span(w, fs)
            out.append((resample_window(fs.data, lo, hi, num_snippets), cls))
    return out


def train_scorer(
    scorer: ProposalScorer,
    dataset: Dataset,
    features: Mapping[str, FeatureSequence],
    window_lengths: Sequence[float],
    schedule: TrainSchedule,
    rng: np.random.Generator,
    per_class_cap: int = 20,
) -> list[StepRecord]:
    examples = []
    for video in dataset.videos:
        fs = features[video.video_id]
        examples.extend(
            _scorer_examples(video, fs, window_lengths,
                             scorer.cfg.num_snippets, per_class_cap, rng)
        )
    if not examples:
        raise TrainingError("scorer: no training windows produced")
    records = []
    batch = schedule.batch_size
    for epoch in range(schedule.epochs):
        lr = schedule.lr_at(epoch)
        order = rng.permutation(len(examples))
        for step, at in enumerate(range(0, len(order), batch)):
            chunk = order[at : at + batch]
            total = 0.0
            for idx in chunk:
                window, cls = examples[int(idx)]
                logits = scorer.forward(window)
                loss, grad = softmax_cross_entropy(logits, cls)
                scorer.backward(grad / len(chunk))
                total += loss / len(chunk)
            _check_loss(total, "scorer", epoch, step)
            sgd_step(scorer.params(), lr=lr, momentum=schedule.momentum)
            records.append(StepRecord("scorer", epoch, step, total))
    return records


def score_windows(
    scorer: ProposalScorer, fs: FeatureSequence, windows: Sequence[TimeInterval]
) -> list[float]:
    out = []
    for w in windows:
        lo, hi = _snippet_span(w, fs)
        out.append(scorer.score(resample_window(fs.data, lo, hi, scorer.cfg.num_snippets)))
    return out


# ---------------------------------------------------------------------------
# detector

def gt_jitter(
    instances: Sequence[Instance],
    duration: float,
    rng: np.random.Generator,
    copies: int = 5,
    max_shift: float = 0.25,
    max_log_scale: float = 0.35,
) -> list[TimeInterval]:
    """Perturbed copies of the annotations.

    Sliding windows rarely land above the positive IoU band, so the
    regression head would otherwise only ever see zero targets; jittered
    spans populate the band with targets it must actually invert.
    """
    out = []
    for inst in instances:
        for _ in range(copies):
            scale = math.exp(float(rng.uniform(-max_log_scale, max_log_scale)))
            length = inst.interval.length * scale
            center = inst.interval.center + float(
                rng.uniform(-max_shift, max_shift)
            ) * inst.interval.length
            lo = max(0.0, center - length / 2.0)
            hi = min(duration, center + length / 2.0)
            if hi - lo > 0.1:
                out.append(TimeInterval(lo, hi))
    return out


def _balanced_batch(
    targets, batch_size: int, rng: np.random.Generator
) -> list[int]:
    """Indices sampled ~1:1:1 over positive/incomplete/background pools."""
    pools = {kind: [] for kind in (TargetKind.POSITIVE, TargetKind.INCOMPLETE, TargetKind.BACKGROUND)}
    for i, t in enumerate(targets):
        if t.kind in pools:
            pools[t.kind].append(i)
    nonempty = [p for p in pools.values() if p]
    if not nonempty:
        return []
    picks = []
    for k in range(batch_size):
        pool = nonempty[k % len(nonempty)]
        picks.append(pool[int(rng.integers(len(pool)))])
    return picks


def train_detector(
    detector: Detector,
    dataset: Dataset,
    features: Mapping[str, FeatureSequence],
    proposals: Mapping[str, Sequence[TimeInterval]],
    schedule: TrainSchedule,
    rng: np.random.Generator,
    jitter_copies: int = 5,
) -> list[StepRecord]:
    """One SGD step per (epoch, video) on a class-balanced proposal batch.

    Training spans = provided proposals + annotations + jittered annotations.
    """
    prepared = []
    for video in dataset.videos:
        if not video.instances:
            continue
        fs = features[video.video_id]
        spans = list(proposals.get(video.video_id, ()))
        spans.extend(inst.interval for inst in video.instances)
        spans.extend(gt_jitter(video.instances, video.duration, rng, copies=jitter_copies))
        targets = assign_detector_targets(spans, video.instances, detector.cfg.num_categories)
        snippet_spans = [_snippet_span(s, fs) for s in spans]
        prepared.append((video.video_id, fs, snippet_spans, targets))
    if not prepared:
        raise TrainingError("detector: no videos with instances to train on")

    records = []
    step = 0
    for epoch in range(schedule.epochs):
        lr = schedule.lr_at(epoch)
        for vi in rng.permutation(len(prepared)):
            video_id, fs, spans, targets = prepared[int(vi)]
            picks = _balanced_batch(targets, schedule.batch_size, rng)
            if not picks:
                continue
            batch_spans = [spans[i] for i in picks]
            batch_targets = [targets[i] for i in picks]
            out = detector.forward(fs.data, batch_spans)
            parts, d_logits, d_comp, d_reg = detector_loss(out, batch_targets)
            _check_loss(parts.total, "detector", epoch, step)
            detector.backward(d_logits, d_comp, d_reg)
            sgd_step(detector.params(), lr=lr, momentum=schedule.momentum)
            records.append(StepRecord("detector", epoch, step, parts.total))
            step += 1
    return records
