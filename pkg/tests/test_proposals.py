import math

import pytest
from hypothesis import given, settings, strategies as st

import oracles
from telkit.data import Proposal, TimeInterval
from telkit.metrics import temporal_iou
from telkit.proposals import (
    DEFAULT_WINDOW_LENGTHS,
    nms_intervals,
    nms_proposals,
    rank_and_filter,
    sliding_windows,
)


def spans(ws):
    return [(w.start, w.end) for w in ws]


# ---------------------------------------------------------------------------
# sliding windows


def test_windows_duration_100_length_40():
    ws = sliding_windows(100.0, lengths=(40.0,))
    # stride 30: starts 0,30,60,90 with the last clamped to the end
    assert spans(ws) == [(0.0, 40.0), (30.0, 70.0), (60.0, 100.0), (90.0, 100.0)]


def test_window_longer_than_video_single_window():
    ws = sliding_windows(30.0, lengths=(40.0,))
    assert spans(ws) == [(0.0, 30.0)]


def test_window_count_closed_form():
    # starts at k*0.75L while k*0.75L < duration -> ceil(duration / (0.75 L)) windows
    for duration in (698.0, 100.0, 31.0):
        for L in (10.0, 40.0, 25.0):
            if L > duration:
                continue
            ws = sliding_windows(duration, lengths=(L,))
            assert len(ws) == math.ceil(duration / (0.75 * L))


def test_windows_cover_video():
    for duration in (17.0, 100.0, 698.0):
        ws = sliding_windows(duration, lengths=DEFAULT_WINDOW_LENGTHS)
        assert all(0.0 <= w.start < w.end <= duration for w in ws)
        # every time point is inside some window (smallest length tiles it)
        step = duration / 997
        for i in range(998):
            t = min(i * step, duration - 1e-9)
            assert any(w.start <= t <= w.end for w in ws)


def test_default_lengths():
    assert DEFAULT_WINDOW_LENGTHS == (10, 25, 40, 55, 70, 85, 100, 130, 160, 190)


def test_windows_scale_factor():
    base = sliding_windows(100.0, lengths=(40.0,))
    scaled = sliding_windows(50.0, lengths=(20.0,))
    assert [(a / 2, b / 2) for a, b in spans(base)] == spans(scaled)


# ---------------------------------------------------------------------------
# NMS


def prop(s, e, score):
    return Proposal(TimeInterval(s, e), score)


def test_nms_exact_duplicates_threshold_one():
    items = [prop(0, 10, 0.9), prop(0, 10, 0.8), prop(5, 15, 0.7)]
    kept = nms_intervals([(p.interval, p.score) for p in items], threshold=1.0)
    # only the IoU-1.0 duplicate goes
    assert kept == (0, 2)


def test_nms_threshold_zero_keeps_single_item():
    items = [(TimeInterval(0, 10), 0.9), (TimeInterval(9, 20), 0.8), (TimeInterval(30, 40), 0.7)]
    kept = nms_intervals(items, threshold=0.0)
    # keep rule is IoU < theta, and IoU is never below 0, so only the top item survives
    assert kept == (0,)


def test_nms_score_tie_earlier_start_wins():
    items = [(TimeInterval(5, 15), 0.8), (TimeInterval(0, 10), 0.8)]
    kept = nms_intervals(items, threshold=0.3)
    assert kept == (1,)


def test_nms_kept_pairwise_below_threshold(rng):
    for _ in range(100):
        dets, _ = oracles.random_case(rng, max_dets=12)
        items = [(d.interval, d.score) for d in dets]
        theta = float(rng.choice([0.2, 0.5, 0.8]))
        kept = nms_intervals(items, threshold=theta)
        for i, a in enumerate(kept):
            for b in kept[i + 1 :]:
                assert temporal_iou(items[a][0], items[b][0]) < theta


def test_nms_matches_quadratic_oracle(rng):
    for _ in range(200):
        dets, _ = oracles.random_case(rng, max_dets=20)
        items = [(d.interval, d.score) for d in dets]
        theta = float(rng.choice([0.0, 0.2, 0.4, 0.8, 1.0]))
        assert nms_intervals(items, theta) == tuple(oracles.nms_oracle(items, theta))


def test_nms_idempotent(rng):
    for _ in range(50):
        dets, _ = oracles.random_case(rng, max_dets=15)
        items = [(d.interval, d.score) for d in dets]
        kept = nms_intervals(items, 0.5)
        again = nms_intervals([items[i] for i in kept], 0.5)
        assert again == tuple(range(len(kept)))


def test_nms_proposals_returns_objects():
    items = [prop(0, 10, 0.5), prop(1, 11, 0.9)]
    out = nms_proposals(items, threshold=0.5)
    assert out == (items[1],)


# ---------------------------------------------------------------------------
# rank_and_filter


def test_rank_and_filter_caps_count():
    windows = [TimeInterval(10 * i, 10 * i + 8) for i in range(50)]
    scores = [0.5 + 0.001 * i for i in range(50)]
    out = rank_and_filter(windows, scores, top_k=10)
    assert len(out) == 10
    assert all(out[i].score >= out[i + 1].score for i in range(9))
    # disjoint windows: NMS removes nothing, so the top 10 scores survive
    assert out[0].score == pytest.approx(0.5 + 0.049)


def test_rank_and_filter_applies_nms_first():
    windows = [TimeInterval(0, 10), TimeInterval(0.5, 10.5), TimeInterval(20, 30)]
    scores = [0.9, 0.85, 0.2]
    out = rank_and_filter(windows, scores, nms_threshold=0.8, top_k=100)
    assert [(p.interval.start, p.interval.end) for p in out] == [(0.0, 10.0), (20.0, 30.0)]


def test_rank_and_filter_validates_lengths():
    with pytest.raises(ValueError):
        rank_and_filter([TimeInterval(0, 1)], [0.1, 0.2])