"""Domain types and file formats for temporal event localization.

Annotations and detections travel as JSON, snippet features as the TFF1
binary format. Everything is validated on load and immutable afterwards.
"""
from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


class DataError(ValueError):
    """Base for everything raised by loaders in this module."""


class ParseError(DataError):
    """File is structurally broken (bad JSON, bad magic, truncated payload)."""


class ValidationError(DataError):
    """File parsed but violates an invariant; message names the field."""


def atomic_write_bytes(path: str | Path, payload: bytes) -> None:
    """Write payload to path via a temp file + rename so readers never see partial output."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


@dataclass(frozen=True)
class TimeInterval:
    """Half-open-ish temporal span in seconds; end must exceed start."""

    start: float
    end: float

    def __post_init__(self):
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise ValidationError(f"interval bounds must be finite, got [{self.start}, {self.end}]")
        if self.start < 0:
            raise ValidationError(f"interval start must be >= 0, got {self.start}")
        if self.end <= self.start:
            raise ValidationError(f"interval end ({self.end}) must be > start ({self.start})")

    @property
    def length(self) -> float:
        return self.end - self.start

    @property
    def center(self) -> float:
        return 0.5 * (self.start + self.end)


@dataclass(frozen=True)
class Instance:
    """One annotated event occurrence."""

    interval: TimeInterval
    label: int
    num_shots: int = 1

    def __post_init__(self):
        if self.label < 0:
            raise ValidationError(f"label id must be >= 0, got {self.label}")
        if self.num_shots < 1:
            raise ValidationError(f"num_shots must be >= 1, got {self.num_shots}")


@dataclass(frozen=True)
class Detection:
    """One scored prediction; label is a category id, score any finite float."""

    interval: TimeInterval
    label: int
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValidationError(f"detection score must be finite, got {self.score}")


@dataclass(frozen=True)
class Proposal:
    """Class-agnostic candidate interval with score in [0, 1]."""

    interval: TimeInterval
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score) or not (0.0 <= self.score <= 1.0):
            raise ValidationError(f"proposal score must be in [0, 1], got {self.score}")


@dataclass(frozen=True)
class VideoAnnotation:
    video_id: str
    duration: float
    instances: tuple[Instance, ...]
    shot_boundaries: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.video_id:
            raise ValidationError("video_id must be non-empty")
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise ValidationError(f"duration must be positive and finite, got {self.duration}")
        for k, inst in enumerate(self.instances):
            if inst.interval.end > self.duration + 1e-9:
                raise ValidationError(
                    f"instances[{k}]: end ({inst.interval.end}) exceeds video duration ({self.duration})"
                )
        if self.shot_boundaries is not None:
            prev = 0.0
            for k, b in enumerate(self.shot_boundaries):
                if not (0.0 < b < self.duration):
                    raise ValidationError(
                        f"shot_boundaries[{k}]: {b} not strictly inside (0, {self.duration})"
                    )
                if b <= prev and k > 0:
                    raise ValidationError(f"shot_boundaries[{k}]: {b} not strictly increasing")
                prev = b


@dataclass(frozen=True)
class Dataset:
    categories: tuple[str, ...]
    videos: tuple[VideoAnnotation, ...]

    def __post_init__(self):
        if not self.categories:
            raise ValidationError("categories must be non-empty")
        if len(set(self.categories)) != len(self.categories):
            raise ValidationError("categories must be unique")
        seen = set()
        for v in self.videos:
            if v.video_id in seen:
                raise ValidationError(f"duplicate video id {v.video_id!r}")
            seen.add(v.video_id)
            for k, inst in enumerate(v.instances):
                if inst.label >= len(self.categories):
                    raise ValidationError(
                        f"video {v.video_id!r} instances[{k}]: label id {inst.label} out of range"
                    )

    def video(self, video_id: str) -> VideoAnnotation:
        for v in self.videos:
            if v.video_id == video_id:
                return v
        raise KeyError(video_id)

    def num_instances(self) -> int:
        return sum(len(v.instances) for v in self.videos)


def derive_num_shots(interval: TimeInterval, shot_boundaries: Sequence[float] | None) -> int:
    """1 + count of shot boundaries strictly inside the interval."""
    if not shot_boundaries:
        return 1
    inside = sum(1 for b in shot_boundaries if interval.start < b < interval.end)
    return 1 + inside


@dataclass
class FeatureSequence:
    """T x C snippet feature matrix; snippet t covers [t*interval, (t+1)*interval)."""

    video_id: str
    snippet_interval: float
    data: np.ndarray  # (T, C) float32, read-only

    def __post_init__(self):
        if self.snippet_interval <= 0 or not math.isfinite(self.snippet_interval):
            raise ValidationError(f"snippet_interval must be positive, got {self.snippet_interval}")
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(f"feature data must be a non-empty 2d matrix, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValidationError("feature data contains non-finite values")
        arr.setflags(write=False)
        self.data = arr

    @property
    def num_snippets(self) -> int:
        return self.data.shape[0]

    @property
    def num_channels(self) -> int:
        return self.data.shape[1]


def time_to_snippet(t: float, features: FeatureSequence) -> int:
    """Snippet index containing time t; edge values clamp into [0, T-1]."""
    idx = int(math.floor(t / features.snippet_interval))
    return min(max(idx, 0), features.num_snippets - 1)


# --------------------------------------------------------------------------
# annotation JSON

def _expect(obj, key, kind, ctx):
    if key not in obj:
        raise ValidationError(f"{ctx}: missing field {key!r}")
    val = obj[key]
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ValidationError(f"{ctx}.{key}: expected a number, got {type(val).__name__}")
        return float(val)
    if not isinstance(val, kind):
        raise ValidationError(f"{ctx}.{key}: expected {kind.__name__}, got {type(val).__name__}")
    return val


def _load_json(path: str | Path):
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e


def parse_dataset(doc, *, ctx: str = "dataset") -> Dataset:
    if not isinstance(doc, dict):
        raise ValidationError(f"{ctx}: top level must be an object")
    cats = _expect(doc, "categories", list, ctx)
    for i, c in enumerate(cats):
        if not isinstance(c, str) or not c:
            raise ValidationError(f"{ctx}.categories[{i}]: must be a non-empty string")
    cat_ids = {c: i for i, c in enumerate(cats)}
    if len(cat_ids) != len(cats):
        raise ValidationError(f"{ctx}.categories: names must be unique")

    videos = []
    for vi, vdoc in enumerate(_expect(doc, "videos", list, ctx)):
        vctx = f"{ctx}.videos[{vi}]"
        if not isinstance(vdoc, dict):
            raise ValidationError(f"{vctx}: must be an object")
        vid = _expect(vdoc, "id", str, vctx)
        duration = _expect(vdoc, "duration", float, vctx)
        bounds = None
        if vdoc.get("shot_boundaries") is not None:
            raw = _expect(vdoc, "shot_boundaries", list, vctx)
            bounds = tuple(float(b) for b in raw)
        instances = []
        for ii, idoc in enumerate(_expect(vdoc, "instances", list, vctx)):
            ictx = f"{vctx}.instances[{ii}]"
            if not isinstance(idoc, dict):
                raise ValidationError(f"{ictx}: must be an object")
            start = _expect(idoc, "start", float, ictx)
            end = _expect(idoc, "end", float, ictx)
            label_name = _expect(idoc, "label", str, ictx)
            if label_name not in cat_ids:
                raise ValidationError(f"{ictx}.label: unknown category {label_name!r}")
            try:
                span = TimeInterval(start, end)
            except ValidationError as e:
                raise ValidationError(f"{ictx}: {e}") from None
            if "num_shots" in idoc and idoc["num_shots"] is not None:
                ns = idoc["num_shots"]
                if isinstance(ns, bool) or not isinstance(ns, int):
                    raise ValidationError(f"{ictx}.num_shots: expected int, got {type(ns).__name__}")
                num_shots = ns  # explicit value wins over derivation
            else:
                num_shots = derive_num_shots(span, bounds)
            try:
                instances.append(Instance(span, cat_ids[label_name], num_shots))
            except ValidationError as e:
                raise ValidationError(f"{ictx}: {e}") from None
        try:
            videos.append(VideoAnnotation(vid, duration, tuple(instances), bounds))
        except ValidationError as e:
            raise ValidationError(f"{vctx}: {e}") from None
    try:
        return Dataset(tuple(cats), tuple(videos))
    except ValidationError as e:
        raise ValidationError(f"{ctx}: {e}") from None


def load_annotations(path: str | Path) -> Dataset:
    return parse_dataset(_load_json(path), ctx=str(path))


def dataset_to_dict(ds: Dataset) -> dict:
    videos = []
    for v in ds.videos:
        vdoc: dict = {"id": v.video_id, "duration": v.duration}
        if v.shot_boundaries is not None:
            vdoc["shot_boundaries"] = list(v.shot_boundaries)
        vdoc["instances"] = [
            {
                "start": i.interval.start,
                "end": i.interval.end,
                "label": ds.categories[i.label],
                "num_shots": i.num_shots,
            }
            for i in v.instances
        ]
        videos.append(vdoc)
    return {"categories": list(ds.categories), "videos": videos}


def save_annotations(ds: Dataset, path: str | Path) -> None:
    atomic_write_text(path, json.dumps(dataset_to_dict(ds), indent=2) + "\n")


# --------------------------------------------------------------------------
# detection / proposal JSON (proposals reuse the schema with label omitted)

def load_detections(path: str | Path, dataset: Dataset) -> dict[str, tuple[Detection, ...]]:
    doc = _load_json(path)
    ctx = str(path)
    if not isinstance(doc, dict):
        raise ValidationError(f"{ctx}: top level must be an object")
    cat_ids = {c: i for i, c in enumerate(dataset.categories)}
    known = {v.video_id for v in dataset.videos}
    out: dict[str, tuple[Detection, ...]] = {}
    for vi, vdoc in enumerate(_expect(doc, "videos", list, ctx)):
        vctx = f"{ctx}.videos[{vi}]"
        vid = _expect(vdoc, "id", str, vctx)
        if vid not in known:
            raise ValidationError(f"{vctx}.id: unknown video {vid!r}")
        if vid in out:
            raise ValidationError(f"{vctx}.id: duplicate video {vid!r}")
        dets = []
        for di, ddoc in enumerate(_expect(vdoc, "detections", list, vctx)):
            dctx = f"{vctx}.detections[{di}]"
            label_name = _expect(ddoc, "label", str, dctx)
            if label_name not in cat_ids:
                raise ValidationError(f"{dctx}.label: unknown category {label_name!r}")
            try:
                dets.append(
                    Detection(
                        TimeInterval(_expect(ddoc, "start", float, dctx), _expect(ddoc, "end", float, dctx)),
                        cat_ids[label_name],
                        _expect(ddoc, "score", float, dctx),
                    )
                )
            except ValidationError as e:
                raise ValidationError(f"{dctx}: {e}") from None
        out[vid] = tuple(dets)
    return out


def save_detections(dets: Mapping[str, Sequence[Detection]], dataset: Dataset, path: str | Path) -> None:
    doc = {
        "videos": [
            {
                "id": vid,
                "detections": [
                    {
                        "start": d.interval.start,
                        "end": d.interval.end,
                        "label": dataset.categories[d.label],
                        "score": d.score,
                    }
                    for d in vdets
                ],
            }
            for vid, vdets in dets.items()
        ]
    }
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def load_proposals(path: str | Path) -> dict[str, tuple[Proposal, ...]]:
    doc = _load_json(path)
    ctx = str(path)
    out: dict[str, tuple[Proposal, ...]] = {}
    for vi, vdoc in enumerate(_expect(doc, "videos", list, ctx)):
        vctx = f"{ctx}.videos[{vi}]"
        vid = _expect(vdoc, "id", str, vctx)
        if vid in out:
            raise ValidationError(f"{vctx}.id: duplicate video {vid!r}")
        props = []
        for pi, pdoc in enumerate(_expect(vdoc, "detections", list, vctx)):
            pctx = f"{vctx}.detections[{pi}]"
            try:
                props.append(
                    Proposal(
                        TimeInterval(_expect(pdoc, "start", float, pctx), _expect(pdoc, "end", float, pctx)),
                        _expect(pdoc, "score", float, pctx),
                    )
                )
            except ValidationError as e:
                raise ValidationError(f"{pctx}: {e}") from None
        out[vid] = tuple(props)
    return out


def save_proposals(props: Mapping[str, Sequence[Proposal]], path: str | Path) -> None:
    doc = {
        "videos": [
            {
                "id": vid,
                "detections": [
                    {"start": p.interval.start, "end": p.interval.end, "score": p.score} for p in vprops
                ],
            }
            for vid, vprops in props.items()
        ]
    }
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


# --------------------------------------------------------------------------
# TFF1 snippet feature files
#
# layout, all little-endian:
#   bytes 0..3   magic "TFF1"
#   u32 T, u32 C, f32 snippet_interval
#   T*C f32 payload, row-major

_TFF_MAGIC = b"TFF1"
_TFF_HEADER = struct.Struct("<IIf")


def save_features(fs: FeatureSequence, path: str | Path) -> None:
    header = _TFF_MAGIC + _TFF_HEADER.pack(fs.num_snippets, fs.num_channels, fs.snippet_interval)
    atomic_write_bytes(path, header + fs.data.astype("<f4").tobytes())


def load_features(path: str | Path) -> FeatureSequence:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != _TFF_MAGIC:
        raise ParseError(f"{path}: bad magic, not a TFF1 file")
    if len(raw) < 4 + _TFF_HEADER.size:
        raise ParseError(f"{path}: truncated header")
    t, c, interval = _TFF_HEADER.unpack_from(raw, 4)
    if t < 1 or c < 1:
        raise ValidationError(f"{path}: T and C must be >= 1, got T={t} C={c}")
    expected = 4 + _TFF_HEADER.size + 4 * t * c
    if len(raw) < expected:
        raise ParseError(f"{path}: truncated payload ({len(raw)} bytes, expected {expected})")
    if len(raw) > expected:
        raise ParseError(f"{path}: {len(raw) - expected} trailing bytes after payload")
    data = np.frombuffer(raw, dtype="<f4", offset=4 + _TFF_HEADER.size).reshape(t, c)
    if not np.isfinite(data).all():
        raise ValidationError(f"{path}: payload contains non-finite values")
    if not (math.isfinite(interval) and interval > 0):
        raise ValidationError(f"{path}: snippet_interval must be positive, got {interval}")
    return FeatureSequence(Path(path).stem, float(interval), np.array(data, dtype=np.float32))


def load_feature_dir(directory: str | Path, video_ids: Iterable[str]) -> tuple[dict[str, FeatureSequence], list[str]]:
    """Load <id>.tff for each id; returns (found, missing ids)."""
    directory = Path(directory)
    found: dict[str, FeatureSequence] = {}
    missing: list[str] = []
    for vid in video_ids:
        p = directory / f"{vid}.tff"
        if p.exists():
            found[vid] = load_features(p)
        else:
            missing.append(vid)
    return found, missing
