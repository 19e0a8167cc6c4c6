"""How the evaluation metric behaves, worked on cases small enough to check by hand.

Run from the repository root:  python3 demos/metrics_walkthrough.py
"""
import numpy as np

from telkit.data import Dataset, Detection, Instance, TimeInterval, VideoAnnotation
from telkit.metrics import DEFAULT_ALPHAS, evaluate, map_at, temporal_iou


def case(name, gts, dets):
    print(f"\n--- {name}")
    dataset = Dataset(("event",), (VideoAnnotation("v", 60.0, tuple(gts)),))
    for alpha in (0.5,):
        m, _ = map_at({"v": dets}, dataset, alpha)
        print(f"AP@{alpha}: {m:.4f}")
    return dataset


print("temporal IoU is pure interval arithmetic:")
a, b = TimeInterval(0, 10), TimeInterval(5, 20)
print(f"  iou([0,10], [5,20]) = {temporal_iou(a, b):.4f}  (5 shared / 20 united)")

# One ground truth, two predictions. The higher-scored one misses, so the
# precision at the match is 1/2 and that is the whole average.
case(
    "miss ranked above the hit -> AP 0.5",
    [Instance(TimeInterval(0, 10), 0, 1)],
    [
        Detection(TimeInterval(20, 31), 0, 0.9),
        Detection(TimeInterval(0, 10), 0, 0.8),
    ],
)

# Two ground truths, a false positive wedged between the hits. The envelope
# keeps precision 1 for the first recall step and 2/3 for the second: 5/6.
case(
    "hit, miss, hit -> AP 5/6",
    [Instance(TimeInterval(0, 10), 0, 1), Instance(TimeInterval(20, 30), 0, 1)],
    [
        Detection(TimeInterval(0, 10), 0, 0.9),
        Detection(TimeInterval(40, 51), 0, 0.8),
        Detection(TimeInterval(20, 30), 0, 0.7),
    ],
)

# Greedy matching claims each ground truth once, in score order. A duplicate
# of an already-claimed instance counts as a miss, and it only costs AP when
# it outranks recall that is still missing.
print("\n--- double detections are not free")
gts = [Instance(TimeInterval(10, 20), 0, 1), Instance(TimeInterval(30, 40), 0, 1)]
dataset = Dataset(("event",), (VideoAnnotation("v", 60.0, tuple(gts)),))
clean = [
    Detection(TimeInterval(10, 20), 0, 0.9),
    Detection(TimeInterval(30, 40), 0, 0.7),
]
with_dup = clean[:1] + [Detection(TimeInterval(11, 21), 0, 0.8)] + clean[1:]
m_clean, _ = map_at({"v": clean}, dataset, 0.5)
m_dup, _ = map_at({"v": with_dup}, dataset, 0.5)
print(f"two hits: AP@0.5 = {m_clean:.4f}")
print(f"duplicate wedged above the second hit: AP@0.5 = {m_dup:.4f}")

# Raising the IoU threshold can only remove matches, so mAP never goes up.
print("\n--- mAP across the default threshold grid (jittered detections)")
rng = np.random.default_rng(7)
videos, detections = [], {}
for v in range(4):
    gts = tuple(
        Instance(TimeInterval(s, s + 8), int(rng.integers(2)), int(rng.integers(1, 30)))
        for s in rng.uniform(0, 50, size=3)
    )
    videos.append(VideoAnnotation(f"v{v}", 60.0, gts))
    detections[f"v{v}"] = [
        Detection(TimeInterval(g.interval.start + rng.normal(0, 2), g.interval.end + rng.normal(0, 2)), g.label, float(rng.uniform()))
        for g in gts
    ]
dataset = Dataset(("a", "b"), tuple(videos))
report = evaluate(detections, dataset, DEFAULT_ALPHAS)
print(report.to_text())
