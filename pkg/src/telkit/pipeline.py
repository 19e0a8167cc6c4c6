"""Run orchestration: config handling plus the synth/train/infer/eval commands.

Every command reads plain files, writes plain files (atomically), and derives
all randomness from the single seed in the run config, so reruns are
byte-identical.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import (
    DataError,
    Dataset,
    Detection,
    FeatureSequence,
    TimeInterval,
    ValidationError,
    atomic_write_text,
    load_annotations,
    load_detections,
    load_feature_dir,
    save_annotations,
    save_detections,
    save_features,
    save_proposals,
)
from .diagnosis import DiagnosisReport, diagnose, write_confusion_csv, write_distribution_csv
from .metrics import DEFAULT_ALPHAS, EvalReport, evaluate
from .model import (
    BACKBONES,
    Detector,
    DetectorConfig,
    ProposalScorer,
    ScorerConfig,
    decode_detections,
)
from .nn import load_checkpoint, save_checkpoint
from .proposals import DEFAULT_WINDOW_LENGTHS, rank_and_filter, sliding_windows
from .selfsim import SelfSimilarityReport, dataset_self_similarity
from .synth import SyntheticSet, SyntheticSpec, gen_synthetic
from .training import StepRecord, TrainSchedule, score_windows, train_detector, train_scorer

__all__ = [
    "ModelConfig",
    "RunConfig",
    "TrainConfig",
    "cmd_diagnose",
    "cmd_eval",
    "cmd_infer",
    "cmd_propose",
    "cmd_selfsim",
    "cmd_synth",
    "cmd_train",
    "config_from_dict",
    "config_to_dict",
    "load_run_config",
]


@dataclass(frozen=True)
class ModelConfig:
    """Desk-scale architecture; field meanings match the module defaults."""

    block_channels: tuple[int, ...] = (32, 48)
    backbone: str = "ta"
    roi_bins: int = 16
    head_hidden: tuple[int, ...] = ()
    scorer_channels: tuple[int, ...] = (32, 64, 128, 256)
    scorer_fc: int = 128
    scorer_snippets: int = 32
    window_scale: float = 0.2
    proposal_nms: float = 0.8
    top_k: int = 100
    nms: float = 0.4
    max_detections: int = 100

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ValidationError(f"backbone must be one of {BACKBONES}, got {self.backbone!r}")
        if self.window_scale <= 0:
            raise ValidationError("window_scale must be positive")

    @property
    def window_lengths(self) -> tuple[float, ...]:
        return tuple(self.window_scale * L for L in DEFAULT_WINDOW_LENGTHS)


@dataclass(frozen=True)
class TrainConfig:
    scorer_epochs: int = 3
    detector_epochs: int = 30
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    lr_drop_epoch: int = 15
    scorer_window_cap: int = 20
    jitter_copies: int = 8

    def schedule(self, epochs: int) -> TrainSchedule:
        return TrainSchedule(
            epochs=epochs,
            lr=self.lr,
            momentum=self.momentum,
            batch_size=self.batch_size,
            lr_drop_epoch=self.lr_drop_epoch,
        )


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    synth: SyntheticSpec = field(default_factory=SyntheticSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    alphas: tuple[float, ...] = DEFAULT_ALPHAS


# ---------------------------------------------------------------------------
# config (de)serialization: JSON overrides merged onto the dataclass defaults

def _coerce(value, template, path: str):
    if isinstance(template, bool):
        if not isinstance(value, bool):
            raise ValidationError(f"{path}: expected bool, got {type(value).__name__}")
        return value
    if isinstance(template, int) and not isinstance(template, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ValidationError(f"{path}: expected int, got {value!r}")
        return int(value)
    if isinstance(template, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"{path}: expected number, got {value!r}")
        return float(value)
    if isinstance(template, str):
        if not isinstance(value, str):
            raise ValidationError(f"{path}: expected string, got {type(value).__name__}")
        return value
    if isinstance(template, tuple):
        if not isinstance(value, (list, tuple)):
            raise ValidationError(f"{path}: expected list, got {type(value).__name__}")
        if not template:
            # no element to copy types from; keep ints and floats as given
            for i, v in enumerate(value):
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ValidationError(f"{path}[{i}]: expected number, got {v!r}")
            return tuple(value)
        # per-position templates handle pair-shaped entries like (share, (lo, hi));
        # items past the end reuse the last position, so lists may grow
        return tuple(
            _coerce(v, template[min(i, len(template) - 1)], f"{path}[{i}]")
            for i, v in enumerate(value)
        )
    raise ValidationError(f"{path}: unsupported config field type {type(template).__name__}")


def _merge_dataclass(obj, doc: Mapping, path: str):
    if not isinstance(doc, Mapping):
        raise ValidationError(f"{path}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(obj)}
    updates = {}
    for key, value in doc.items():
        if key not in fields:
            raise ValidationError(f"{path}.{key}: unknown config key")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            updates[key] = _merge_dataclass(current, value, f"{path}.{key}")
        else:
            updates[key] = _coerce(value, current, f"{path}.{key}")
    return dataclasses.replace(obj, **updates)


def config_from_dict(doc: Mapping) -> RunConfig:
    return _merge_dataclass(RunConfig(), doc, "config")


def _plain(value):
    if dataclasses.is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def config_to_dict(config: RunConfig) -> dict:
    return _plain(config)


def load_run_config(path: str | Path | None, seed: int | None = None) -> RunConfig:
    if path is None:
        config = RunConfig()
    else:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as e:
            raise DataError(f"cannot read config {path}: {e}") from None
        except json.JSONDecodeError as e:
            raise DataError(f"config {path} is not valid JSON: {e}") from None
        config = config_from_dict(doc)
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    return config


# ---------------------------------------------------------------------------
# shared plumbing

ANNOTATION_FILES = {"train": "train_annotations.json", "test": "test_annotations.json"}


def _snippet_span(interval: TimeInterval, fs: FeatureSequence) -> tuple[float, float]:
    t_len = float(fs.num_snippets)
    lo = min(max(interval.start / fs.snippet_interval, 0.0), t_len)
    hi = min(max(interval.end / fs.snippet_interval, 0.0), t_len)
    return lo, max(hi, lo)


def _load_split(data_dir: str | Path, split: str) -> tuple[Dataset, dict[str, FeatureSequence]]:
    data_dir = Path(data_dir)
    if split not in ANNOTATION_FILES:
        raise DataError(f"split must be one of {sorted(ANNOTATION_FILES)}, got {split!r}")
    dataset = load_annotations(data_dir / ANNOTATION_FILES[split])
    features, missing = load_feature_dir(data_dir / "features", [v.video_id for v in dataset.videos])
    if missing:
        raise DataError(f"missing feature files for: {', '.join(missing)}")
    return dataset, features


def _build_scorer(config: RunConfig, rng: np.random.Generator, in_channels: int) -> ProposalScorer:
    cfg = ScorerConfig(
        in_channels=in_channels,
        conv_channels=config.model.scorer_channels,
        fc_width=config.model.scorer_fc,
        num_snippets=config.model.scorer_snippets,
    )
    return ProposalScorer(cfg, rng)


def _build_detector(config: RunConfig, rng: np.random.Generator, in_channels: int) -> Detector:
    cfg = DetectorConfig(
        in_channels=in_channels,
        num_categories=config.synth.num_categories,
        block_channels=() if config.model.backbone == "vanilla" else config.model.block_channels,
        backbone=config.model.backbone,
        roi_bins=config.model.roi_bins,
        head_hidden=config.model.head_hidden,
    )
    return Detector(cfg, rng)


def _scored_proposals(scorer, fs, duration, config: RunConfig):
    windows = sliding_windows(duration, config.model.window_lengths)
    scores = score_windows(scorer, fs, windows)
    return rank_and_filter(windows, scores, config.model.proposal_nms, config.model.top_k)


def _curve_csv(records: Sequence[StepRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["phase", "epoch", "step", "loss"])
    for r in records:
        w.writerow([r.phase, r.epoch, r.step, f"{r.loss:.8f}"])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# commands

def cmd_synth(config: RunConfig, out_dir: str | Path) -> tuple[SyntheticSet, SyntheticSet]:
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    train, test = gen_synthetic(config.synth, config.seed)
    save_annotations(train.dataset, out / ANNOTATION_FILES["train"])
    save_annotations(test.dataset, out / ANNOTATION_FILES["test"])
    for split in (train, test):
        for video_id, fs in split.features.items():
            save_features(fs, out / "features" / f"{video_id}.tff")
    atomic_write_text(out / "config.json", json.dumps(config_to_dict(config), indent=2) + "\n")
    return train, test


def cmd_train(config: RunConfig, data_dir: str | Path, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset, features = _load_split(data_dir, "train")
    in_channels = next(iter(features.values())).num_channels

    root = np.random.SeedSequence(config.seed)
    s_train, s_scorer, s_detector = root.spawn(3)
    rng = np.random.default_rng(s_train)

    scorer = _build_scorer(config, np.random.default_rng(s_scorer), in_channels)
    records = train_scorer(
        scorer, dataset, features, config.model.window_lengths,
        config.train.schedule(config.train.scorer_epochs), rng,
        per_class_cap=config.train.scorer_window_cap,
    )

    proposals = {
        v.video_id: [p.interval for p in
                     _scored_proposals(scorer, features[v.video_id], v.duration, config)]
        for v in dataset.videos
    }
    detector = _build_detector(config, np.random.default_rng(s_detector), in_channels)
    records += train_detector(
        detector, dataset, features, proposals,
        config.train.schedule(config.train.detector_epochs), rng,
        jitter_copies=config.train.jitter_copies,
    )

    tensors = {f"scorer.{k}": v for k, v in scorer.state_dict().items()}
    tensors.update({f"detector.{k}": v for k, v in detector.state_dict().items()})
    ckpt_path = out / "checkpoint.tkw"
    save_checkpoint(ckpt_path, tensors)
    atomic_write_text(out / "curve.csv", _curve_csv(records))
    atomic_write_text(out / "config.json", json.dumps(config_to_dict(config), indent=2) + "\n")
    return ckpt_path


def _load_models(config: RunConfig, checkpoint: str | Path, in_channels: int):
    tensors = load_checkpoint(checkpoint)
    scorer_state = {k[len("scorer."):]: v for k, v in tensors.items() if k.startswith("scorer.")}
    detector_state = {k[len("detector."):]: v for k, v in tensors.items() if k.startswith("detector.")}
    if not scorer_state or not detector_state:
        raise DataError(f"{checkpoint}: missing scorer.* or detector.* tensors")
    rng = np.random.default_rng(0)  # overwritten by the checkpoint
    scorer = _build_scorer(config, rng, in_channels)
    detector = _build_detector(config, rng, in_channels)
    try:
        scorer.load_state(scorer_state)
        detector.load_state(detector_state)
    except ValueError as e:
        raise DataError(f"{checkpoint}: {e}") from None
    return scorer, detector


def cmd_infer(
    config: RunConfig,
    checkpoint: str | Path,
    data_dir: str | Path,
    out_path: str | Path,
    split: str = "test",
) -> dict[str, tuple[Detection, ...]]:
    dataset, features = _load_split(data_dir, split)
    detections: dict[str, tuple[Detection, ...]] = {}
    if dataset.videos:
        in_channels = next(iter(features.values())).num_channels
        scorer, detector = _load_models(config, checkpoint, in_channels)
        for v in dataset.videos:
            fs = features[v.video_id]
            props = _scored_proposals(scorer, fs, v.duration, config)
            spans = [_snippet_span(p.interval, fs) for p in props]
            outputs = detector.forward(fs.data, spans)
            dets = decode_detections(
                [p.interval for p in props], outputs, detector.cfg.num_categories,
                nms_threshold=config.model.nms,
                max_detections=config.model.max_detections,
                duration=v.duration,
            )
            detections[v.video_id] = tuple(dets)
    save_detections(detections, dataset, out_path)
    return detections


def cmd_propose(
    config: RunConfig,
    checkpoint: str | Path,
    data_dir: str | Path,
    out_path: str | Path,
    split: str = "test",
) -> None:
    dataset, features = _load_split(data_dir, split)
    proposals = {}
    if dataset.videos:
        in_channels = next(iter(features.values())).num_channels
        scorer, _ = _load_models(config, checkpoint, in_channels)
        for v in dataset.videos:
            proposals[v.video_id] = _scored_proposals(scorer, features[v.video_id], v.duration, config)
    save_proposals(proposals, out_path)


def cmd_eval(
    detections_path: str | Path,
    annotations_path: str | Path,
    out_dir: str | Path,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
) -> EvalReport:
    dataset = load_annotations(annotations_path)
    detections = load_detections(detections_path, dataset)
    report = evaluate(detections, dataset, alphas)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "eval.json", json.dumps(report.to_dict(), indent=2) + "\n")
    atomic_write_text(out / "eval.txt", report.to_text())
    return report


def _diagnosis_text(report: DiagnosisReport) -> str:
    lines = [f"prediction breakdown at alpha={report.alpha:g} (share of top k*G_v per video)"]
    kinds = list(next(iter(report.budget_counts.values())).keys())
    name_w = max(len(k.value) for k in kinds)
    ks = sorted(report.budget_counts)
    header = "kind".ljust(name_w) + "".join(f"k={k}".rjust(9) for k in ks)
    lines.append(header)
    lines.append("-" * len(header))
    for kind in kinds:
        row = kind.value.ljust(name_w)
        for k in ks:
            row += f"{report.budget_shares[k][kind]:.3f}".rjust(9)
        lines.append(row)
    lines.append("")
    lines.append(f"impact of resolving each error type (mode={report.impact_mode}, delta average mAP)")
    for kind, r in report.impacts.items():
        lines.append(f"  {kind.value.ljust(name_w)} {r.delta_average_map:+.4f}")
    if report.excluded_videos:
        lines.append("")
        lines.append(f"videos without ground truth (excluded): {', '.join(report.excluded_videos)}")
    return "\n".join(lines) + "\n"


def cmd_diagnose(
    detections_path: str | Path,
    annotations_path: str | Path,
    out_dir: str | Path,
    alpha: float = 0.5,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    impact_mode: str = "delete",
) -> DiagnosisReport:
    dataset = load_annotations(annotations_path)
    detections = load_detections(detections_path, dataset)
    report = diagnose(detections, dataset, alpha=alpha, alphas=alphas, impact_mode=impact_mode)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "diagnosis.json", report.to_json())
    atomic_write_text(out / "diagnosis.txt", _diagnosis_text(report))
    write_distribution_csv(report, out / "distribution.csv")
    write_confusion_csv(report, out / "confusion.csv")
    return report


def _selfsim_text(report: SelfSimilarityReport) -> str:
    lines = [
        f"instances measured: {len(report.per_instance)}",
        f"average self-similarity mean: {report.average_mean:.4f}",
        f"average self-similarity std:  {report.average_std:.4f}",
    ]
    if report.skipped:
        lines.append(f"instances spanning < 2 snippets (skipped): {len(report.skipped)}")
    if report.missing_videos:
        lines.append(f"videos without features: {', '.join(report.missing_videos)}")
    return "\n".join(lines) + "\n"


def cmd_selfsim(
    annotations_path: str | Path,
    features_dir: str | Path,
    out_dir: str | Path,
) -> SelfSimilarityReport:
    dataset = load_annotations(annotations_path)
    features, _ = load_feature_dir(features_dir, [v.video_id for v in dataset.videos])
    report = dataset_self_similarity(features, dataset)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "selfsim.json", report.to_json())
    atomic_write_text(out / "selfsim.txt", _selfsim_text(report))
    return report
