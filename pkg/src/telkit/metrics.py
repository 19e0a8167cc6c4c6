"""Detection evaluation: temporal IoU, greedy matching, interpolated AP, mAP reports."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset, Detection, Instance, TimeInterval

DEFAULT_ALPHAS = (0.3, 0.4, 0.5, 0.6, 0.7)
SHOT_GROUP_NAMES = ("small", "medium", "large")
DEFAULT_SHOT_BOUNDS = (10, 20)


def temporal_iou(a: TimeInterval, b: TimeInterval) -> float:
    """Intersection over union of two temporal intervals."""
    inter = min(a.end, b.end) - max(a.start, b.start)
    if inter <= 0:
        return 0.0
    union = (a.end - a.start) + (b.end - b.start) - inter
    return inter / union


def detection_order(dets: Sequence[Detection]) -> list[int]:
    """Indices sorted by descending score; ties by earlier start, longer duration, input order."""
    return sorted(
        range(len(dets)),
        key=lambda i: (-dets[i].score, dets[i].interval.start, -dets[i].interval.length, i),
    )


@dataclass(frozen=True)
class MatchRecord:
    """Outcome of one detection in the greedy matching at a given alpha.

    Carries score/start/duration so records from many videos can be merged
    into one globally ordered PR sequence.
    """

    det_index: int
    label: int
    score: float
    start: float
    duration: float
    matched: int | None
    iou: float
    is_tp: bool
    alpha: float


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[Instance],
    alpha: float,
    class_aware: bool = True,
) -> list[MatchRecord]:
    """Greedy score-ordered matching for one video.

    Each detection, in score order, claims the unclaimed ground truth (same
    label when class_aware) of maximal IoU; it is a TP iff that IoU >= alpha.
    Ground truths are consumed only by TPs. Records come back in match order.
    """
    claimed: set[int] = set()
    records: list[MatchRecord] = []
    for i in detection_order(dets):
        d = dets[i]
        best_iou, best_j = 0.0, None
        for j, g in enumerate(gts):
            if j in claimed:
                continue
            if class_aware and g.label != d.label:
                continue
            iou = temporal_iou(d.interval, g.interval)
            if iou > best_iou:
                best_iou, best_j = iou, j
        is_tp = best_j is not None and best_iou >= alpha
        if is_tp:
            claimed.add(best_j)
        records.append(
            MatchRecord(
                det_index=i,
                label=d.label,
                score=d.score,
                start=d.interval.start,
                duration=d.interval.length,
                matched=best_j if is_tp else None,
                iou=best_iou if best_j is not None else 0.0,
                is_tp=is_tp,
                alpha=alpha,
            )
        )
    return records


def average_precision(records: Sequence[MatchRecord], num_gt: int) -> float:
    """All-point interpolated AP from match records of a single category.

    Records may span videos; they are ordered globally by score (ties: earlier
    start, longer duration, then position in the given sequence). The
    precision envelope is integrated over the recall steps contributed by TPs.
    """
    if num_gt < 0:
        raise ValueError(f"num_gt must be >= 0, got {num_gt}")
    if num_gt == 0 or not records:
        return 0.0
    order = sorted(
        range(len(records)),
        key=lambda i: (-records[i].score, records[i].start, -records[i].duration, i),
    )
    flags = np.array([records[i].is_tp for i in order], dtype=bool)
    tp = np.cumsum(flags)
    ranks = np.arange(1, len(flags) + 1)
    precision = tp / ranks
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    return float(envelope[flags].sum() / num_gt)


def _gt_counts(dataset: Dataset) -> dict[int, int]:
    counts: dict[int, int] = {c: 0 for c in range(len(dataset.categories))}
    for v in dataset.videos:
        for inst in v.instances:
            counts[inst.label] += 1
    return counts


def _match_all(
    detections: Mapping[str, Sequence[Detection]],
    dataset: Dataset,
    alpha: float,
) -> dict[str, list[MatchRecord]]:
    out = {}
    for v in dataset.videos:
        dets = detections.get(v.video_id, ())
        out[v.video_id] = match_detections(dets, v.instances, alpha, class_aware=True)
    return out


def map_at(
    detections: Mapping[str, Sequence[Detection]],
    dataset: Dataset,
    alpha: float,
) -> tuple[float, dict[int, float]]:
    """mAP at one threshold plus per-category APs (categories with >= 1 GT only)."""
    num_gt = _gt_counts(dataset)
    per_video = _match_all(detections, dataset, alpha)
    by_cat: dict[int, list[MatchRecord]] = {c: [] for c in num_gt}
    for v in dataset.videos:
        for r in per_video[v.video_id]:
            by_cat[r.label].append(r)
    aps = {c: average_precision(by_cat[c], n) for c, n in num_gt.items() if n > 0}
    if not aps:
        return 0.0, {}
    return float(np.mean(list(aps.values()))), aps


def shot_group(num_shots: int, bounds: tuple[int, int] = DEFAULT_SHOT_BOUNDS) -> str:
    """small: < bounds[0] shots; medium: bounds[0] <= shots < bounds[1]; large: >= bounds[1]."""
    lo, hi = bounds
    if num_shots < lo:
        return "small"
    if num_shots < hi:
        return "medium"
    return "large"


@dataclass(frozen=True)
class StratifiedResult:
    alpha: float
    maps: dict[str, float]          # group name -> mAP
    counts: dict[str, int]          # group name -> instance count
    empty: tuple[str, ...]          # groups with zero instances


def stratified_map(
    detections: Mapping[str, Sequence[Detection]],
    dataset: Dataset,
    alpha: float,
    bounds: tuple[int, int] = DEFAULT_SHOT_BOUNDS,
) -> StratifiedResult:
    """mAP per shot-count group with match-once FP attribution.

    Detections are matched against the full ground truth once. For a group,
    only instances of that group count as positives: a TP matched outside the
    group is dropped from that group's curve, while every FP counts against
    all groups.
    """
    num_gt_group: dict[str, dict[int, int]] = {g: {} for g in SHOT_GROUP_NAMES}
    counts = {g: 0 for g in SHOT_GROUP_NAMES}
    gt_group_of: dict[str, list[str]] = {}
    for v in dataset.videos:
        groups = [shot_group(i.num_shots, bounds) for i in v.instances]
        gt_group_of[v.video_id] = groups
        for inst, g in zip(v.instances, groups):
            counts[g] += 1
            num_gt_group[g][inst.label] = num_gt_group[g].get(inst.label, 0) + 1

    per_video = _match_all(detections, dataset, alpha)
    records_group: dict[str, dict[int, list[MatchRecord]]] = {g: {} for g in SHOT_GROUP_NAMES}
    for v in dataset.videos:
        groups = gt_group_of[v.video_id]
        for r in per_video[v.video_id]:
            if r.is_tp:
                targets = [groups[r.matched]]
            else:
                targets = list(SHOT_GROUP_NAMES)  # FPs count against every group
            for g in targets:
                records_group[g].setdefault(r.label, []).append(r)

    maps: dict[str, float] = {}
    empty: list[str] = []
    for g in SHOT_GROUP_NAMES:
        cats = {c: n for c, n in num_gt_group[g].items() if n > 0}
        if not cats:
            maps[g] = 0.0
            empty.append(g)
            continue
        aps = [average_precision(records_group[g].get(c, []), n) for c, n in sorted(cats.items())]
        maps[g] = float(np.mean(aps))
    return StratifiedResult(alpha=alpha, maps=maps, counts=counts, empty=tuple(empty))


@dataclass
class EvalReport:
    """Evaluation summary over an IoU grid, serializable to JSON and a text table."""

    alphas: tuple[float, ...]
    categories: tuple[str, ...]
    num_gt: dict[str, int]
    ap: dict[float, dict[str, float]]            # alpha -> category name -> AP
    map_at: dict[float, float]
    average_map: float
    stratified: dict[float, StratifiedResult]
    map_small: float
    map_medium: float
    map_large: float
    group_counts: dict[str, int]
    empty_groups: tuple[str, ...]

    def to_dict(self) -> dict:
        akey = lambda a: f"{a:g}"
        return {
            "alphas": list(self.alphas),
            "categories": list(self.categories),
            "num_gt": dict(self.num_gt),
            "ap": {akey(a): dict(sorted(c.items())) for a, c in self.ap.items()},
            "map": {akey(a): m for a, m in self.map_at.items()},
            "average_map": self.average_map,
            "stratified": {
                akey(a): {"map": dict(r.maps), "counts": dict(r.counts), "empty": list(r.empty)}
                for a, r in self.stratified.items()
            },
            "map_small": self.map_small,
            "map_medium": self.map_medium,
            "map_large": self.map_large,
            "group_counts": dict(self.group_counts),
            "empty_groups": list(self.empty_groups),
        }

    def to_text(self) -> str:
        """Aligned plain-text table: one category per row, one column per alpha."""
        name_w = max([len("category"), len("mAP")] + [len(c) for c in self.categories])
        cols = [f"AP@{a:g}" for a in self.alphas]
        col_w = max(8, max(len(c) for c in cols))
        lines = []
        header = "category".ljust(name_w) + "".join(c.rjust(col_w + 2) for c in cols)
        lines.append(header)
        lines.append("-" * len(header))
        for name in self.categories:
            if self.num_gt.get(name, 0) == 0:
                cells = ["-".rjust(col_w + 2) for _ in self.alphas]
            else:
                cells = [f"{self.ap[a][name]:.4f}".rjust(col_w + 2) for a in self.alphas]
            lines.append(name.ljust(name_w) + "".join(cells))
        lines.append("-" * len(header))
        lines.append(
            "mAP".ljust(name_w) + "".join(f"{self.map_at[a]:.4f}".rjust(col_w + 2) for a in self.alphas)
        )
        lines.append(f"average mAP over {{{', '.join(f'{a:g}' for a in self.alphas)}}}: {self.average_map:.4f}")
        parts = []
        for g in SHOT_GROUP_NAMES:
            val = {"small": self.map_small, "medium": self.map_medium, "large": self.map_large}[g]
            tag = " (empty)" if g in self.empty_groups else ""
            parts.append(f"{g} {val:.4f} (n={self.group_counts[g]}){tag}")
        lines.append("shot groups: " + "  ".join(parts))
        return "\n".join(lines) + "\n"


def evaluate(
    detections: Mapping[str, Sequence[Detection]],
    dataset: Dataset,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    shot_bounds: tuple[int, int] = DEFAULT_SHOT_BOUNDS,
) -> EvalReport:
    """Full evaluation: per-category AP, mAP per alpha, average mAP, shot-group mAP."""
    if not alphas:
        raise ValueError("alphas must be non-empty")
    alphas = tuple(float(a) for a in alphas)
    num_gt_ids = _gt_counts(dataset)
    num_gt = {dataset.categories[c]: n for c, n in num_gt_ids.items()}
    ap: dict[float, dict[str, float]] = {}
    maps: dict[float, float] = {}
    strat: dict[float, StratifiedResult] = {}
    for a in alphas:
        m, per_cat = map_at(detections, dataset, a)
        maps[a] = m
        ap[a] = {dataset.categories[c]: v for c, v in per_cat.items()}
        strat[a] = stratified_map(detections, dataset, a, shot_bounds)
    group_means = {
        g: float(np.mean([strat[a].maps[g] for a in alphas])) for g in SHOT_GROUP_NAMES
    }
    any_strat = strat[alphas[0]]
    return EvalReport(
        alphas=alphas,
        categories=dataset.categories,
        num_gt=num_gt,
        ap=ap,
        map_at=maps,
        average_map=float(np.mean([maps[a] for a in alphas])),
        stratified=strat,
        map_small=group_means["small"],
        map_medium=group_means["medium"],
        map_large=group_means["large"],
        group_counts=dict(any_strat.counts),
        empty_groups=any_strat.empty,
    )


def parse_iou_grid(spec: str) -> tuple[float, ...]:
    """Parse '0.3:0.7:0.1' (start:stop:step, inclusive) or a comma list or single value."""
    spec = spec.strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"IoU grid must be start:stop:step, got {spec!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ValueError(f"bad IoU grid {spec!r}")
        vals = []
        k = 0
        while True:
            v = round(start + k * step, 10)
            if v > stop + 1e-9:
                break
            vals.append(v)
            k += 1
        return tuple(vals)
    if "," in spec:
        return tuple(float(p) for p in spec.split(","))
    return (float(spec),)
