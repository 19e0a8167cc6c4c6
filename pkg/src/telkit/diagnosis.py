"""False-positive analysis for temporal detections.

Every prediction that is not a true positive falls into exactly one of five
buckets, judged by its best IoU against any same-video ground truth (gIoU)
and by whether its label matches that argmax instance:

  double detection  gIoU >= alpha, label correct, instance already claimed
  wrong label       gIoU >= alpha, label incorrect
  localization      0.1 <= gIoU < alpha, label correct
  confusion         0.1 <= gIoU < alpha, label incorrect
  background        gIoU < 0.1
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset, Detection, Instance, atomic_write_text
from .metrics import DEFAULT_ALPHAS, detection_order, map_at, temporal_iou

BACKGROUND_IOU = 0.1


class PredictionKind(Enum):
    TRUE_POSITIVE = "true_positive"
    DOUBLE_DETECTION = "double_detection"
    WRONG_LABEL = "wrong_label"
    LOCALIZATION = "localization"
    CONFUSION = "confusion"
    BACKGROUND = "background"


FP_KINDS = tuple(k for k in PredictionKind if k is not PredictionKind.TRUE_POSITIVE)
ALL_KINDS = (PredictionKind.TRUE_POSITIVE,) + FP_KINDS


def best_any_label(det: Detection, gts: Sequence[Instance]) -> tuple[float, int | None]:
    """Max IoU over all ground truths regardless of label (the gIoU).

    Ties on IoU prefer a same-label instance, then the earlier index.
    """
    best_iou, best_j = 0.0, None
    for j, g in enumerate(gts):
        iou = temporal_iou(det.interval, g.interval)
        if iou > best_iou:
            best_iou, best_j = iou, j
        elif iou == best_iou and best_j is not None and iou > 0:
            if gts[best_j].label != det.label and g.label == det.label:
                best_j = j
    return best_iou, best_j


def classify_prediction(
    det: Detection,
    gts: Sequence[Instance],
    claimed: set[int],
    alpha: float,
) -> tuple[PredictionKind, int | None]:
    """Classify one prediction given the set of already-claimed ground truths.

    TP follows the metrics matching rule exactly: the best unclaimed
    same-label instance is claimed iff its IoU >= alpha. Returns the kind and
    the newly claimed index (None for everything but a TP).
    """
    best_iou, best_j = 0.0, None
    for j, g in enumerate(gts):
        if j in claimed or g.label != det.label:
            continue
        iou = temporal_iou(det.interval, g.interval)
        if iou > best_iou:
            best_iou, best_j = iou, j
    if best_j is not None and best_iou >= alpha:
        return PredictionKind.TRUE_POSITIVE, best_j

    giou, arg = best_any_label(det, gts)
    if arg is None or giou < BACKGROUND_IOU:
        return PredictionKind.BACKGROUND, None
    correct = gts[arg].label == det.label
    if giou >= alpha:
        return (PredictionKind.DOUBLE_DETECTION if correct else PredictionKind.WRONG_LABEL), None
    return (PredictionKind.LOCALIZATION if correct else PredictionKind.CONFUSION), None


@dataclass(frozen=True)
class ClassifiedPrediction:
    det_index: int          # index into the video's detection list
    kind: PredictionKind
    matched: int | None     # claimed instance for TPs, gIoU argmax otherwise
    giou: float


def diagnose_video(
    dets: Sequence[Detection],
    gts: Sequence[Instance],
    alpha: float,
) -> list[ClassifiedPrediction]:
    """Classify every prediction of one video, in score order."""
    claimed: set[int] = set()
    out: list[ClassifiedPrediction] = []
    for i in detection_order(dets):
        kind, claim = classify_prediction(dets[i], gts, claimed, alpha)
        giou, arg = best_any_label(dets[i], gts)
        if kind is PredictionKind.TRUE_POSITIVE:
            claimed.add(claim)
            out.append(ClassifiedPrediction(i, kind, claim, giou))
        else:
            out.append(ClassifiedPrediction(i, kind, arg, giou))
    return out


def diagnose_all(
    detections: Mapping[str, Sequence[Detection]],
    dataset: Dataset,
    alpha: float,
) -> dict[str, list[ClassifiedPrediction]]:
    return {
        v.video_id: diagnose_video(detections.get(v.video_id, ()), v.instances, alpha)
        for v in dataset.videos
    }


# --------------------------------------------------------------------------
# error distribution over detection budgets

def error_distribution(
    detections: Mapping[str, Sequence[Detection]],
    dataset: Dataset,
    alpha: float,
    max_budget: int = 10,
) -> tuple[dict[int, dict[PredictionKind, int]], list[str]]:
    """Prediction-kind counts when each video keeps its top k*G_v detections.

    Returns ({k: {kind: count}}, videos excluded for having no ground truth).
    Keeping a score-prefix cannot change the greedy matching of the retained
    detections, so the full-budget classification is reused per prefix.
    """
    counts = {k: {kind: 0 for kind in ALL_KINDS} for k in range(1, max_budget + 1)}
    excluded: list[str] = []
    for v in dataset.videos:
        g_v = len(v.instances)
        if g_v == 0:
            excluded.append(v.video_id)
            continue
        classified = diagnose_video(detections.get(v.video_id, ()), v.instances, alpha)
        for k in range(1, max_budget + 1):
            for c in classified[: k * g_v]:
                counts[k][c.kind] += 1
    return counts, tuple(excluded)


def distribution_shares(counts: Mapping[int, Mapping[PredictionKind, int]]) -> dict[int, dict[PredictionKind, float]]:
    shares = {}
    for k, row in counts.items():
        total = sum(row.values())
        shares[k] = {kind: (row[kind] / total if total else 0.0) for kind in ALL_KINDS}
    return shares


# --------------------------------------------------------------------------
# confusion matrix

def confusion_matrix(
    detections: Mapping[str, Sequence[Detection]],
    dataset: Dataset,
    alpha: float = 0.5,
) -> np.ndarray:
    """C x C counts: entry (i, j) counts predictions with gIoU >= 0.1 whose
    gIoU-argmax instance has label i and whose predicted label is j.

    alpha is accepted for interface symmetry with the other analyses; the
    counting rule above only uses the 0.1 floor.
    """
    del alpha
    c = len(dataset.categories)
    mat = np.zeros((c, c), dtype=np.int64)
    for v in dataset.videos:
        for d in detections.get(v.video_id, ()):
            giou, arg = best_any_label(d, v.instances)
            if arg is not None and giou >= BACKGROUND_IOU:
                mat[v.instances[arg].label, d.label] += 1
    return mat


def row_normalize(mat: np.ndarray) -> np.ndarray:
    totals = mat.sum(axis=1, keepdims=True)
    out = np.zeros(mat.shape, dtype=np.float64)
    np.divide(mat, totals, out=out, where=totals > 0)
    return out


# --------------------------------------------------------------------------
# error impact

def _resolve(
    detections: Mapping[str, Sequence[Detection]],
    dataset: Dataset,
    alpha: float,
    kind: PredictionKind,
    mode: str,
) -> dict[str, list[Detection]]:
    """Detection set with predictions of `kind` removed or repaired at this alpha."""
    if kind is PredictionKind.TRUE_POSITIVE:
        raise ValueError("cannot resolve true positives")
    out: dict[str, list[Detection]] = {}
    for v in dataset.videos:
        dets = list(detections.get(v.video_id, ()))
        classified = diagnose_video(dets, v.instances, alpha)
        keep: list[Detection] = []
        for c in sorted(classified, key=lambda c: c.det_index):
            d = dets[c.det_index]
            if c.kind is not kind:
                keep.append(d)
                continue
            if mode == "delete":
                continue
            # repair: relabel wrong-label hits, snap localization errors;
            # the other kinds have no sensible fix and are dropped.
            if kind is PredictionKind.WRONG_LABEL and c.matched is not None:
                keep.append(Detection(d.interval, v.instances[c.matched].label, d.score))
            elif kind is PredictionKind.LOCALIZATION and c.matched is not None:
                keep.append(Detection(v.instances[c.matched].interval, d.label, d.score))
        out[v.video_id] = keep
    return out


@dataclass(frozen=True)
class ImpactResult:
    kind: PredictionKind
    mode: str
    delta_average_map: float
    per_alpha: dict[float, float]


def error_impact(
    detections: Mapping[str, Sequence[Detection]],
    dataset: Dataset,
    kind: PredictionKind,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    mode: str = "delete",
) -> ImpactResult:
    """Average-mAP gain from resolving one FP type, alpha by alpha.

    Classification and resolution happen independently at each threshold, then
    the per-threshold mAP deltas are averaged. The default mode removes the
    offending predictions, which can never lower any AP.
    """
    if mode not in ("delete", "repair"):
        raise ValueError(f"mode must be 'delete' or 'repair', got {mode!r}")
    per_alpha: dict[float, float] = {}
    for a in alphas:
        base, _ = map_at(detections, dataset, a)
        fixed, _ = map_at(_resolve(detections, dataset, a, kind, mode), dataset, a)
        per_alpha[float(a)] = fixed - base
    return ImpactResult(
        kind=kind,
        mode=mode,
        delta_average_map=float(np.mean(list(per_alpha.values()))),
        per_alpha=per_alpha,
    )


# --------------------------------------------------------------------------
# report

@dataclass
class DiagnosisReport:
    alpha: float
    alphas: tuple[float, ...]
    impact_mode: str
    budget_counts: dict[int, dict[PredictionKind, int]]
    budget_shares: dict[int, dict[PredictionKind, float]]
    impacts: dict[PredictionKind, ImpactResult]
    confusion: np.ndarray
    confusion_normalized: np.ndarray
    categories: tuple[str, ...]
    excluded_videos: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "alphas": list(self.alphas),
            "impact_mode": self.impact_mode,
            "budget_counts": {
                str(k): {kind.value: n for kind, n in row.items()} for k, row in self.budget_counts.items()
            },
            "budget_shares": {
                str(k): {kind.value: s for kind, s in row.items()} for k, row in self.budget_shares.items()
            },
            "impact": {
                kind.value: {
                    "delta_average_map": r.delta_average_map,
                    "per_alpha": {f"{a:g}": v for a, v in r.per_alpha.items()},
                }
                for kind, r in self.impacts.items()
            },
            "confusion": self.confusion.tolist(),
            "confusion_normalized": self.confusion_normalized.tolist(),
            "categories": list(self.categories),
            "excluded_videos": list(self.excluded_videos),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def diagnose(
    detections: Mapping[str, Sequence[Detection]],
    dataset: Dataset,
    alpha: float = 0.5,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    max_budget: int = 10,
    impact_mode: str = "delete",
) -> DiagnosisReport:
    counts, excluded = error_distribution(detections, dataset, alpha, max_budget)
    impacts = {
        kind: error_impact(detections, dataset, kind, alphas, impact_mode) for kind in FP_KINDS
    }
    mat = confusion_matrix(detections, dataset, alpha)
    return DiagnosisReport(
        alpha=alpha,
        alphas=tuple(float(a) for a in alphas),
        impact_mode=impact_mode,
        budget_counts=counts,
        budget_shares=distribution_shares(counts),
        impacts=impacts,
        confusion=mat,
        confusion_normalized=row_normalize(mat),
        categories=dataset.categories,
        excluded_videos=tuple(excluded),
    )


# --------------------------------------------------------------------------
# CSV / SVG emission

def write_distribution_csv(report: DiagnosisReport, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["budget"] + [k.value for k in ALL_KINDS])
    for k in sorted(report.budget_counts):
        w.writerow([k] + [report.budget_counts[k][kind] for kind in ALL_KINDS])
    atomic_write_text(path, buf.getvalue())


def write_confusion_csv(report: DiagnosisReport, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["gt\\pred"] + list(report.categories))
    for i, name in enumerate(report.categories):
        w.writerow([name] + [int(x) for x in report.confusion[i]])
    atomic_write_text(path, buf.getvalue())


def plot_distribution_svg(report: DiagnosisReport, path) -> None:
    """Stacked-bar view of prediction kinds across detection budgets."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ks = sorted(report.budget_shares)
    bottom = np.zeros(len(ks))
    fig, ax = plt.subplots(figsize=(7, 4))
    for kind in ALL_KINDS:
        vals = np.array([report.budget_shares[k][kind] for k in ks])
        ax.bar([str(k) for k in ks], vals, bottom=bottom, label=kind.value)
        bottom += vals
    ax.set_xlabel("budget (multiples of per-video ground-truth count)")
    ax.set_ylabel("share of predictions")
    ax.set_title(f"prediction breakdown at IoU {report.alpha:g}")
    ax.legend(fontsize=7, loc="center left", bbox_to_anchor=(1.0, 0.5))
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_confusion_svg(report: DiagnosisReport, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4.5))
    im = ax.imshow(report.confusion_normalized, cmap="viridis", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(report.categories)), report.categories, rotation=45, ha="right", fontsize=7)
    ax.set_yticks(range(len(report.categories)), report.categories, fontsize=7)
    ax.set_xlabel("predicted label")
    ax.set_ylabel("matched instance label")
    ax.set_title("label confusion (row-normalized)")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
