"""Detection model: temporal aggregation backbone, RoI heads, proposal scorer.

Coordinate conventions: the backbone and RoI pooling work in snippet indices;
target assignment and detection decoding work in seconds. Callers convert
with the feature sequence's snippet interval.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Detection, Instance, TimeInterval
from .metrics import temporal_iou
from .nn import (
    DeformableConv1d,
    Linear,
    MaxPool1d,
    Param,
    ReLU,
    TapConv1d,
    hinge,
    roi_pool_1d,
    roi_pool_1d_backward,
    smooth_l1,
    softmax_cross_entropy,
)
from .nn.losses import softmax
from .proposals import nms_intervals

DEFAULT_KERNELS = ((1, 3), (3, 3), (3, 3), (3, 3))
DEFAULT_UNITS = (3, 3, 6, 9)
BACKBONES = ("ta", "vanilla", "dilated", "deformable")


@dataclass(frozen=True)
class TAConfig:
    """One aggregation branch: a (kH, kW) kernel over units of W snippets."""

    in_channels: int
    out_channels: int
    kernel: tuple[int, int] = (3, 3)
    unit_length: int = 3

    def __post_init__(self):
        k_h, k_w = self.kernel
        if k_h % 2 != 1 or k_w % 2 != 1:
            raise ValueError(f"kernel extents must be odd, got {self.kernel}")
        if self.unit_length < 1:
            raise ValueError(f"unit length must be >= 1, got {self.unit_length}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")

    @property
    def receptive_field(self) -> int:
        k_h, k_w = self.kernel
        return (k_h - 1) * self.unit_length + k_w


class TemporalAggregation:
    """ta_forward: reshape [T,C] into W-snippet units, convolve, reshape back.

    Output position t = i*W + j depends on inputs {(i+di)W + (j+dj)} that fall
    inside [0, T); the unit grid fixes the tap geometry, not hard boundaries,
    so taps may cross into neighboring units.
    """

    def __init__(self, cfg: TAConfig, rng: np.random.Generator, name: str = "ta"):
        self.cfg = cfg
        self.conv = TapConv1d.temporal_aggregation(
            cfg.in_channels, cfg.out_channels, cfg.kernel, cfg.unit_length, rng, name
        )

    def params(self) -> list[Param]:
        return self.conv.params()

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.conv.forward(x)

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        return self.conv.backward(d_out)


@dataclass(frozen=True)
class BlockConfig:
    """K parallel branches fused by summation, then ReLU."""

    in_channels: int
    out_channels: int
    kernels: tuple[tuple[int, int], ...] = DEFAULT_KERNELS
    units: tuple[int, ...] = DEFAULT_UNITS
    kind: str = "ta"

    def __post_init__(self):
        if len(self.kernels) != len(self.units) or not self.kernels:
            raise ValueError("kernels and units must be equal-length and non-empty")
        if self.kind not in ("ta", "dilated", "deformable"):
            raise ValueError(f"unknown block kind {self.kind!r}")
        for kernel, unit in zip(self.kernels, self.units):
            TAConfig(self.in_channels, self.out_channels, kernel, unit)


def _make_branch(cfg: BlockConfig, idx: int, rng: np.random.Generator, name: str):
    kernel, unit = cfg.kernels[idx], cfg.units[idx]
    if cfg.kind == "ta":
        return TemporalAggregation(
            TAConfig(cfg.in_channels, cfg.out_channels, kernel, unit), rng, name
        )
    # ablation baselines keep the branch structure but swap the operator:
    # a kH-tap conv at stride W (dilated), optionally with learned offsets
    if cfg.kind == "dilated":
        return TapConv1d.dilated(cfg.in_channels, cfg.out_channels, kernel[0], unit, rng, name)
    return DeformableConv1d(cfg.in_channels, cfg.out_channels, kernel[0], rng, dilation=unit, name=name)


class MultiScaleBlock:
    def __init__(self, cfg: BlockConfig, rng: np.random.Generator, name: str = "block"):
        self.cfg = cfg
        self.branches = [
            _make_branch(cfg, k, rng, f"{name}.branch{k}") for k in range(len(cfg.kernels))
        ]
        self.relu = ReLU()

    def params(self) -> list[Param]:
        return [p for b in self.branches for p in b.params()]

    def forward(self, x: np.ndarray) -> np.ndarray:
        total = self.branches[0].forward(x)
        for branch in self.branches[1:]:
            total = total + branch.forward(x)
        return self.relu.forward(total)

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        d_sum = self.relu.backward(d_out)
        dx = self.branches[0].backward(d_sum)
        for branch in self.branches[1:]:
            dx = dx + branch.backward(d_sum)
        return dx


class _MLP:
    """Linear stack with ReLU between layers (none after the last)."""

    def __init__(self, widths: Sequence[int], rng: np.random.Generator, name: str):
        self.layers = []
        for i, (a, b) in enumerate(zip(widths, widths[1:])):
            self.layers.append(Linear(a, b, rng, f"{name}.fc{i}"))
            if i + 2 < len(widths):
                self.layers.append(ReLU())

    def params(self) -> list[Param]:
        return [p for l in self.layers for p in l.params()]

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            d_out = layer.backward(d_out)
        return d_out


# ---------------------------------------------------------------------------
# detector


@dataclass(frozen=True)
class DetectorConfig:
    in_channels: int
    num_categories: int
    block_channels: tuple[int, ...] = (384, 512)
    kernels: tuple[tuple[int, int], ...] = DEFAULT_KERNELS
    units: tuple[int, ...] = DEFAULT_UNITS
    backbone: str = "ta"
    roi_bins: int = 8
    extension: float = 0.5
    head_hidden: tuple[int, ...] = ()

    def __post_init__(self):
        if self.num_categories < 1:
            raise ValueError("need at least one category")
        if self.backbone not in BACKBONES:
            raise ValueError(f"unknown backbone {self.backbone!r}, expected one of {BACKBONES}")
        if self.roi_bins < 1:
            raise ValueError("roi_bins must be >= 1")
        if self.extension < 0:
            raise ValueError("extension ratio must be >= 0")
        if self.backbone != "vanilla" and not self.block_channels:
            raise ValueError("learned backbones need at least one block")

    @property
    def feature_channels(self) -> int:
        return self.in_channels if self.backbone == "vanilla" else self.block_channels[-1]

    @property
    def head_input(self) -> int:
        return self.roi_bins * self.feature_channels


@dataclass
class DetectorOutputs:
    logits: np.ndarray        # [P, C+1], background last
    completeness: np.ndarray  # [P, C]
    regression: np.ndarray    # [P, C, 2] of (d_center, d_log_length)


class Detector:
    def __init__(self, cfg: DetectorConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.blocks: list[MultiScaleBlock] = []
        if cfg.backbone != "vanilla":
            cin = cfg.in_channels
            for b, cout in enumerate(cfg.block_channels):
                self.blocks.append(
                    MultiScaleBlock(
                        BlockConfig(cin, cout, cfg.kernels, cfg.units, kind=_block_kind(cfg.backbone)),
                        rng,
                        f"block{b}",
                    )
                )
                cin = cout
        c = cfg.num_categories
        widths = (cfg.head_input, *cfg.head_hidden)
        self.head_category = _MLP((*widths, c + 1), rng, "head.category")
        self.head_completeness = _MLP((*widths, c), rng, "head.completeness")
        self.head_regression = _MLP((*widths, 2 * c), rng, "head.regression")
        # start the boundary head at zero: its weights then stay inside the
        # span of supervised inputs, so proposals unlike anything it was
        # trained on get (near-)zero correction instead of init noise
        for p in self.head_regression.params():
            p.value[...] = 0.0
        self._cache = None

    def params(self) -> list[Param]:
        out = [p for blk in self.blocks for p in blk.params()]
        for head in (self.head_category, self.head_completeness, self.head_regression):
            out.extend(head.params())
        return out

    def named_params(self) -> dict[str, Param]:
        out = {}
        for p in self.params():
            if p.name in out:
                raise ValueError(f"duplicate param name {p.name!r}")
            out[p.name] = p
        return out

    def extend_span(self, lo: float, hi: float, t_len: int) -> tuple[float, float]:
        length = hi - lo
        pad = self.cfg.extension * length
        return max(0.0, lo - pad), min(float(t_len), hi + pad)

    def forward(self, features: np.ndarray, spans: Sequence[tuple[float, float]]) -> DetectorOutputs:
        """features: [T, in_channels]; spans: proposal (lo, hi) in snippet coords."""
        if features.shape[1] != self.cfg.in_channels:
            raise ValueError(f"expected {self.cfg.in_channels} channels, got {features.shape[1]}")
        h = features
        for blk in self.blocks:
            h = blk.forward(h)
        t_len = h.shape[0]
        pooled_rows = []
        args = []
        for lo, hi in spans:
            if hi < lo:
                raise ValueError(f"inverted span ({lo}, {hi})")
            elo, ehi = self.extend_span(float(lo), float(hi), t_len)
            pooled, arg = roi_pool_1d(h, elo, ehi, self.cfg.roi_bins)
            pooled_rows.append(pooled.reshape(-1))
            args.append(arg)
        x = np.stack(pooled_rows) if pooled_rows else np.zeros((0, self.cfg.head_input), dtype=h.dtype)
        c = self.cfg.num_categories
        logits = self.head_category.forward(x)
        completeness = self.head_completeness.forward(x)
        regression = self.head_regression.forward(x).reshape(-1, c, 2)
        self._cache = (h.shape, args, len(spans))
        return DetectorOutputs(logits, completeness, regression)

    def backward(self, d_logits: np.ndarray, d_completeness: np.ndarray, d_regression: np.ndarray) -> None:
        h_shape, args, num = self._cache
        d_x = self.head_category.backward(d_logits)
        d_x = d_x + self.head_completeness.backward(d_completeness)
        d_x = d_x + self.head_regression.backward(d_regression.reshape(num, -1))
        if self.blocks:
            d_h = np.zeros(h_shape, dtype=d_x.dtype)
            bins = self.cfg.roi_bins
            for i, arg in enumerate(args):
                d_h += roi_pool_1d_backward(arg, d_x[i].reshape(bins, -1), h_shape[0])
            for blk in reversed(self.blocks):
                d_h = blk.backward(d_h)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.value for name, p in self.named_params().items()}

    def load_state(self, tensors: dict[str, np.ndarray]) -> None:
        params = self.named_params()
        if set(tensors) != set(params):
            missing = set(params) - set(tensors)
            extra = set(tensors) - set(params)
            raise ValueError(f"checkpoint mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, p in params.items():
            if tensors[name].shape != p.value.shape:
                raise ValueError(
                    f"incompatible checkpoint: {name} has shape {tensors[name].shape}, expected {p.value.shape}"
                )
            p.value[...] = tensors[name]


def _block_kind(backbone: str) -> str:
    return {"ta": "ta", "dilated": "dilated", "deformable": "deformable"}[backbone]


# ---------------------------------------------------------------------------
# target assignment and loss


class TargetKind(enum.Enum):
    POSITIVE = "positive"
    INCOMPLETE = "incomplete"
    BACKGROUND = "background"
    IGNORE = "ignore"


@dataclass(frozen=True)
class ProposalTarget:
    kind: TargetKind
    label: int                      # CE target; num_categories means background
    hinge_target: int               # +1 positive, -1 incomplete, 0 unused
    regression: tuple[float, float] | None
    matched: int | None


def assign_detector_targets(
    spans: Sequence[TimeInterval],
    instances: Sequence[Instance],
    num_categories: int,
    positive_iou: float = 0.7,
    incomplete_iou: float = 0.3,
    background_iou: float = 0.1,
    incomplete_overlap: float = 0.8,
) -> list[ProposalTarget]:
    """Per-proposal training targets.

    Positive: best IoU >= 0.7 (class + completeness +1 + regression to the
    matched instance). Incomplete: best IoU < 0.3 but >= 80% of the proposal
    lies inside some instance (that class, completeness -1). Background:
    best IoU < 0.1. Anything else contributes no loss.
    """
    out = []
    for span in spans:
        best_iou, best_idx = 0.0, None
        best_frac, frac_idx = 0.0, None
        for g, inst in enumerate(instances):
            iou = temporal_iou(span, inst.interval)
            if iou > best_iou:
                best_iou, best_idx = iou, g
            inter = min(span.end, inst.interval.end) - max(span.start, inst.interval.start)
            frac = max(0.0, inter) / span.length
            if frac > best_frac:
                best_frac, frac_idx = frac, g
        if best_idx is not None and best_iou >= positive_iou:
            gt = instances[best_idx]
            delta_c = (gt.interval.center - span.center) / span.length
            delta_l = float(np.log(gt.interval.length / span.length))
            out.append(
                ProposalTarget(TargetKind.POSITIVE, gt.label, 1, (delta_c, delta_l), best_idx)
            )
        elif best_iou < incomplete_iou and best_frac >= incomplete_overlap:
            out.append(
                ProposalTarget(TargetKind.INCOMPLETE, instances[frac_idx].label, -1, None, frac_idx)
            )
        elif best_iou < background_iou:
            out.append(ProposalTarget(TargetKind.BACKGROUND, num_categories, 0, None, None))
        else:
            out.append(ProposalTarget(TargetKind.IGNORE, -1, 0, None, None))
    return out


@dataclass
class LossParts:
    total: float
    ce: float
    hinge: float
    smooth_l1: float


def detector_loss(
    outputs: DetectorOutputs, targets: Sequence[ProposalTarget]
) -> tuple[LossParts, np.ndarray, np.ndarray, np.ndarray]:
    """Weighted CE + 0.5*hinge + 0.5*smooth-L1, each averaged over its own
    contributing proposals. Returns (parts, d_logits, d_completeness, d_regression).
    """
    num = len(targets)
    if outputs.logits.shape[0] != num:
        raise ValueError(f"{outputs.logits.shape[0]} outputs vs {num} targets")
    d_logits = np.zeros_like(outputs.logits)
    d_comp = np.zeros_like(outputs.completeness)
    d_reg = np.zeros_like(outputs.regression)
    ce_items = [(i, t.label) for i, t in enumerate(targets) if t.kind is not TargetKind.IGNORE]
    hinge_items = [(i, t) for i, t in enumerate(targets) if t.hinge_target != 0]
    reg_items = [(i, t) for i, t in enumerate(targets) if t.kind is TargetKind.POSITIVE]
    ce_total = 0.0
    for i, label in ce_items:
        loss, grad = softmax_cross_entropy(outputs.logits[i], label)
        ce_total += loss
        d_logits[i] += grad / len(ce_items)
    ce_total = ce_total / len(ce_items) if ce_items else 0.0
    hinge_total = 0.0
    for i, t in hinge_items:
        loss, grad = hinge(float(outputs.completeness[i, t.label]), t.hinge_target)
        hinge_total += loss
        d_comp[i, t.label] += 0.5 * grad / len(hinge_items)
    hinge_total = hinge_total / len(hinge_items) if hinge_items else 0.0
    reg_total = 0.0
    for i, t in reg_items:
        pred = outputs.regression[i, t.label]
        loss, grad = smooth_l1(pred, np.asarray(t.regression))
        reg_total += loss
        d_reg[i, t.label] += 0.5 * grad / len(reg_items)
    reg_total = reg_total / len(reg_items) if reg_items else 0.0
    total = ce_total + 0.5 * hinge_total + 0.5 * reg_total
    return LossParts(total, ce_total, hinge_total, reg_total), d_logits, d_comp, d_reg


# ---------------------------------------------------------------------------
# decoding


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ez = np.exp(x[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


MAX_LOG_LENGTH_DELTA = 4.0


def decode_detections(
    proposals: Sequence[TimeInterval],
    outputs: DetectorOutputs,
    num_categories: int,
    nms_threshold: float = 0.4,
    fusion_outputs: DetectorOutputs | None = None,
    max_detections: int | None = None,
    duration: float | None = None,
) -> list[Detection]:
    """Per-class score = P(class) * sigma(completeness); boundaries from the
    regression head; class-wise NMS. With a second output stream, class
    scores fuse 2:3 (primary:secondary) and boundaries come from the primary.
    Pure in proposal coordinates: shifting every proposal by a constant
    shifts every detection identically (clamping only applies at t=0 or,
    when `duration` is given, at the video end).
    """
    num = len(proposals)
    if outputs.logits.shape[0] != num:
        raise ValueError(f"{outputs.logits.shape[0]} outputs vs {num} proposals")
    if num == 0:
        return []
    scores = softmax(outputs.logits)[:, :num_categories] * sigmoid(outputs.completeness)
    if fusion_outputs is not None:
        other = softmax(fusion_outputs.logits)[:, :num_categories] * sigmoid(
            fusion_outputs.completeness
        )
        scores = 0.4 * scores + 0.6 * other
    detections: list[Detection] = []
    for c in range(num_categories):
        items = []
        for i, p in enumerate(proposals):
            delta_c, delta_l = outputs.regression[i, c]
            center = p.center + float(delta_c) * p.length
            length = p.length * float(np.exp(np.clip(delta_l, -MAX_LOG_LENGTH_DELTA, MAX_LOG_LENGTH_DELTA)))
            start = max(0.0, center - length / 2.0)
            end = center + length / 2.0
            if duration is not None:
                end = min(end, duration)
            if end <= start:
                continue
            items.append((TimeInterval(start, end), float(scores[i, c])))
        for k in nms_intervals(items, nms_threshold):
            detections.append(Detection(items[k][0], c, items[k][1]))
    detections.sort(key=lambda d: (-d.score, d.interval.start, d.label))
    if max_detections is not None:
        detections = detections[:max_detections]
    return detections


# ---------------------------------------------------------------------------
# proposal scorer


@dataclass(frozen=True)
class ScorerConfig:
    in_channels: int
    conv_channels: tuple[int, ...] = (128, 256, 512, 1024)
    fc_width: int = 512
    num_snippets: int = 32
    kernel: int = 3

    def __post_init__(self):
        if self.num_snippets < 2 ** len(self.conv_channels):
            raise ValueError(
                f"{self.num_snippets} snippets cannot survive {len(self.conv_channels)} poolings"
            )

    @property
    def flattened(self) -> int:
        return (self.num_snippets // 2 ** len(self.conv_channels)) * self.conv_channels[-1]


SCORER_CLASSES = ("background", "incomplete", "complete")
COMPLETE = SCORER_CLASSES.index("complete")


class ProposalScorer:
    """conv-relu-pool x4 on a fixed-length window, then FC-ReLU-FC to 3 logits."""

    def __init__(self, cfg: ScorerConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.convs = []
        self.relus = []
        self.pools = []
        cin = cfg.in_channels
        for i, cout in enumerate(cfg.conv_channels):
            self.convs.append(TapConv1d.conv1d(cin, cout, cfg.kernel, rng, f"conv{i}"))
            self.relus.append(ReLU())
            self.pools.append(MaxPool1d())
            cin = cout
        self.fc1 = Linear(cfg.flattened, cfg.fc_width, rng, "fc1")
        self.fc_relu = ReLU()
        self.fc2 = Linear(cfg.fc_width, len(SCORER_CLASSES), rng, "fc2")
        self._cache = None

    def params(self) -> list[Param]:
        out = [p for conv in self.convs for p in conv.params()]
        out.extend(self.fc1.params())
        out.extend(self.fc2.params())
        return out

    def named_params(self) -> dict[str, Param]:
        out = {}
        for p in self.params():
            if p.name in out:
                raise ValueError(f"duplicate param name {p.name!r}")
            out[p.name] = p
        return out

    def forward(self, window: np.ndarray) -> np.ndarray:
        if window.shape != (self.cfg.num_snippets, self.cfg.in_channels):
            raise ValueError(
                f"expected window {(self.cfg.num_snippets, self.cfg.in_channels)}, got {window.shape}"
            )
        h = window
        for conv, relu, pool in zip(self.convs, self.relus, self.pools):
            h = pool.forward(relu.forward(conv.forward(h)))
        self._flat_shape = h.shape
        flat = h.reshape(1, -1)
        return self.fc2.forward(self.fc_relu.forward(self.fc1.forward(flat)))[0]

    def backward(self, d_logits: np.ndarray) -> None:
        d = self.fc1.backward(self.fc_relu.backward(self.fc2.backward(d_logits[None, :])))
        d = d.reshape(self._flat_shape)
        for conv, relu, pool in zip(reversed(self.convs), reversed(self.relus), reversed(self.pools)):
            d = conv.backward(relu.backward(pool.backward(d)))

    def score(self, window: np.ndarray) -> float:
        """P(complete): the proposal quality used for ranking."""
        return float(softmax(self.forward(window))[COMPLETE])

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.value for name, p in self.named_params().items()}

    def load_state(self, tensors: dict[str, np.ndarray]) -> None:
        params = self.named_params()
        if set(tensors) != set(params):
            missing = set(params) - set(tensors)
            extra = set(tensors) - set(params)
            raise ValueError(f"checkpoint mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, p in params.items():
            if tensors[name].shape != p.value.shape:
                raise ValueError(
                    f"incompatible checkpoint: {name} has shape {tensors[name].shape}, expected {p.value.shape}"
                )
            p.value[...] = tensors[name]


def resample_window(features: np.ndarray, lo: float, hi: float, num: int) -> np.ndarray:
    """Nearest-neighbor resample of snippet span [lo, hi) to `num` rows."""
    if hi <= lo:
        raise ValueError(f"empty window [{lo}, {hi})")
    t_len = features.shape[0]
    centers = lo + (np.arange(num) + 0.5) * (hi - lo) / num
    idx = np.clip(np.floor(centers).astype(np.int64), 0, t_len - 1)
    return features[idx]


def count_params(module) -> int:
    return int(sum(p.value.size for p in module.params()))
