"""From a wall of sliding windows to a short ranked list of candidates.

Run from the repository root:  python3 demos/proposal_basics.py
"""
from telkit.data import TimeInterval
from telkit.metrics import temporal_iou
from telkit.proposals import (
    DEFAULT_WINDOW_LENGTHS,
    nms_intervals,
    rank_and_filter,
    sliding_windows,
)

duration = 120.0
windows = sliding_windows(duration, DEFAULT_WINDOW_LENGTHS)
print(
    f"{len(windows)} windows over a {duration:.0f}s video from "
    f"{len(DEFAULT_WINDOW_LENGTHS)} scales ({DEFAULT_WINDOW_LENGTHS[0]:.0f}s to "
    f"{DEFAULT_WINDOW_LENGTHS[-1]:.0f}s), stride 3/4 of the length"
)
print("the 25s scale, for instance:")
starts_25 = {k * 0.75 * 25.0 for k in range(7)}
scale_25 = sorted(
    {
        (w.start, w.end)
        for w in windows
        if w.start in starts_25
        and (abs(w.length - 25.0) < 1e-9 or (w.end == duration and w.length < 25.0))
    }
)
for start, end in scale_25:
    print(f"  [{start:6.2f}, {end:6.2f}]")
print("the last window of a scale clamps to the video end rather than overhanging")

# score each window by overlap with two planted events; any oracle in [0, 1]
# slots in where the learned scorer normally goes
events = [TimeInterval(20, 32), TimeInterval(70, 110)]
scores = [max(temporal_iou(w, e) for e in events) for w in windows]

kept = rank_and_filter(windows, scores, nms_threshold=0.8, top_k=10)
print(f"\ntop {len(kept)} after ranking and NMS at 0.8:")
for p in kept:
    marks = " ".join(f"iou[{i}]={temporal_iou(p.interval, e):.2f}" for i, e in enumerate(events))
    print(f"  [{p.interval.start:6.1f}, {p.interval.end:6.1f}]  score {p.score:.3f}  {marks}")

# the NMS primitive itself, on a case small enough to eyeball
items = [
    (TimeInterval(0, 10), 0.9),
    (TimeInterval(1, 11), 0.8),   # IoU 9/11 with the winner, suppressed at 0.5
    (TimeInterval(8, 18), 0.7),   # IoU 2/18, survives
    (TimeInterval(0, 10), 0.9),   # exact duplicate, loses the tie on input order
]
print(f"\nnms_intervals at 0.5 keeps indices: {nms_intervals(items, 0.5)}")
print(f"nms_intervals at 1.0 keeps indices: {nms_intervals(items, 1.0)} (only exact duplicates go)")
