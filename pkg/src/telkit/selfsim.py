"""Within-instance feature self-similarity.

For one instance, take every snippet it covers and compute cosine similarity
over all unordered snippet pairs; the spread (population std) of those values
measures how much appearance varies across the instance's shots.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .data import Dataset, FeatureSequence, Instance


@dataclass(frozen=True)
class InstanceSimilarity:
    video_id: str
    instance_index: int
    label: int
    num_snippets: int
    mean: float
    std: float


def instance_snippet_span(fs: FeatureSequence, inst: Instance) -> tuple[int, int]:
    """First/last snippet index overlapping the instance interval (inclusive)."""
    dt = fs.snippet_interval
    first = int(np.floor(inst.interval.start / dt))
    last = int(np.ceil(inst.interval.end / dt)) - 1
    first = min(max(first, 0), fs.num_snippets - 1)
    last = min(max(last, first), fs.num_snippets - 1)
    return first, last


def similarity_matrix(fs: FeatureSequence, inst: Instance) -> np.ndarray:
    """Pairwise cosine similarity of the instance's snippets (f64)."""
    first, last = instance_snippet_span(fs, inst)
    x = fs.data[first : last + 1].astype(np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    xn = np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)  # zero vectors -> similarity 0
    return xn @ xn.T


def instance_self_similarity(
    fs: FeatureSequence, inst: Instance, instance_index: int = 0
) -> InstanceSimilarity | None:
    """Mean/std of pairwise cosine similarities, or None when < 2 snippets."""
    first, last = instance_snippet_span(fs, inst)
    n = last - first + 1
    if n < 2:
        return None
    sims = similarity_matrix(fs, inst)
    iu = np.triu_indices(n, k=1)
    vals = sims[iu]
    return InstanceSimilarity(
        video_id=fs.video_id,
        instance_index=instance_index,
        label=inst.label,
        num_snippets=n,
        mean=float(vals.mean()),
        std=float(vals.std()),  # population std
    )


@dataclass
class SelfSimilarityReport:
    average_std: float
    average_mean: float
    per_instance: list[InstanceSimilarity]
    skipped: tuple[tuple[str, int], ...]  # (video_id, instance_index) with < 2 snippets
    missing_videos: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "average_std": self.average_std,
            "average_mean": self.average_mean,
            "num_instances": len(self.per_instance),
            "per_instance": [
                {
                    "video_id": r.video_id,
                    "instance_index": r.instance_index,
                    "label": r.label,
                    "num_snippets": r.num_snippets,
                    "mean": r.mean,
                    "std": r.std,
                }
                for r in self.per_instance
            ],
            "skipped": [{"video_id": v, "instance_index": i} for v, i in self.skipped],
            "missing_videos": list(self.missing_videos),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def dataset_self_similarity(
    features: Mapping[str, FeatureSequence], dataset: Dataset
) -> SelfSimilarityReport:
    """Unweighted mean of per-instance similarity stds over the whole dataset.

    Videos without features are reported and skipped; raises if no instance
    spans at least two snippets.
    """
    per_instance: list[InstanceSimilarity] = []
    skipped: list[tuple[str, int]] = []
    missing: list[str] = []
    for v in dataset.videos:
        fs = features.get(v.video_id)
        if fs is None:
            missing.append(v.video_id)
            continue
        for idx, inst in enumerate(v.instances):
            r = instance_self_similarity(fs, inst, idx)
            if r is None:
                skipped.append((v.video_id, idx))
            else:
                per_instance.append(r)
    if not per_instance:
        raise ValueError("no instance spans two or more snippets; nothing to measure")
    return SelfSimilarityReport(
        average_std=float(np.mean([r.std for r in per_instance])),
        average_mean=float(np.mean([r.mean for r in per_instance])),
        per_instance=per_instance,
        skipped=tuple(skipped),
        missing_videos=tuple(missing),
    )
