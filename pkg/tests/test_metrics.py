import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from telkit.data import Detection, Instance, TimeInterval
from telkit.metrics import (
    DEFAULT_ALPHAS,
    EvalReport,
    MatchRecord,
    average_precision,
    evaluate,
    map_at,
    match_detections,
    parse_iou_grid,
    shot_group,
    stratified_map,
    temporal_iou,
)
from conftest import make_dataset, det


def recs(flags, num_gt=None):
    """MatchRecords with descending scores so the given order is the rank order."""
    n = len(flags)
    return [
        MatchRecord(i, 0, float(n - i), 0.0, 1.0, 0 if f else None, 1.0 if f else 0.0, f, 0.5)
        for i, f in enumerate(flags)
    ]


# ---------------------------------------------------------------------------
# IoU


def test_iou_examples():
    assert temporal_iou(TimeInterval(0, 10), TimeInterval(0, 10)) == 1.0
    assert temporal_iou(TimeInterval(0, 10), TimeInterval(10, 20)) == 0.0
    assert temporal_iou(TimeInterval(0, 10), TimeInterval(5, 15)) == pytest.approx(1 / 3)
    assert temporal_iou(TimeInterval(0, 1), TimeInterval(4, 9)) == 0.0


intervals = st.builds(
    lambda a, l: TimeInterval(a, a + l),
    st.floats(0, 100, allow_nan=False),
    st.floats(0.01, 50, allow_nan=False),
)


@given(intervals, intervals)
def test_iou_symmetric_and_bounded(a, b):
    ab = temporal_iou(a, b)
    assert ab == temporal_iou(b, a)
    assert 0.0 <= ab <= 1.0


@given(intervals)
def test_iou_self_is_one(a):
    assert temporal_iou(a, a) == 1.0


# ---------------------------------------------------------------------------
# matching


def test_two_identical_detections_single_claim():
    gts = [Instance(TimeInterval(0, 10), 0)]
    dets = [det(0, 10, 0, 0.9), det(0, 10, 0, 0.8)]
    records = match_detections(dets, gts, 0.5)
    assert [r.is_tp for r in records] == [True, False]
    assert records[0].matched == 0 and records[1].matched is None


def test_matching_tie_break_earlier_start():
    gts = [Instance(TimeInterval(0, 10), 0)]
    # equal scores: the earlier-starting detection is matched first
    dets = [det(2, 12, 0, 0.5), det(0, 10, 0, 0.5)]
    records = match_detections(dets, gts, 0.5)
    assert records[0].det_index == 1 and records[0].is_tp
    assert records[1].det_index == 0 and not records[1].is_tp


def test_matching_claims_max_iou_candidate():
    gts = [Instance(TimeInterval(0, 10), 0), Instance(TimeInterval(8, 20), 0)]
    dets = [det(0, 9, 0, 0.9)]
    (r,) = match_detections(dets, gts, 0.2)
    assert r.matched == 0  # IoU 0.9 beats the 1/20 overlap with the other


def test_matching_class_aware():
    gts = [Instance(TimeInterval(0, 10), 1)]
    dets = [det(0, 10, 0, 0.9)]
    (r,) = match_detections(dets, gts, 0.5)
    assert not r.is_tp


def test_matching_vs_oracle_random(rng):
    for _ in range(150):
        dets, gts = oracles.random_case(rng)
        alpha = float(rng.choice([0.1, 0.3, 0.5, 0.7]))
        records = match_detections(dets, gts, alpha)
        tp_flags = [False] * len(dets)
        for r in records:
            tp_flags[r.det_index] = r.is_tp
        oracle_tp, oracle_match = oracles.match_oracle(dets, gts, alpha)
        assert tp_flags == oracle_tp
        for r in records:
            if r.is_tp:
                assert r.matched == oracle_match[r.det_index]


# ---------------------------------------------------------------------------
# average precision


def test_ap_fp_then_tp_is_half():
    assert average_precision(recs([False, True]), num_gt=1) == pytest.approx(0.5, abs=1e-12)


def test_ap_tp_fp_tp_is_five_sixths():
    assert average_precision(recs([True, False, True]), num_gt=2) == pytest.approx(5 / 6, abs=1e-12)


def test_ap_empty_and_zero_gt():
    assert average_precision([], num_gt=0) == 0.0
    assert average_precision([], num_gt=3) == 0.0
    assert average_precision(recs([False, False]), num_gt=0) == 0.0


def test_ap_perfect_ranking():
    assert average_precision(recs([True, True, False]), num_gt=2) == 1.0


def test_ap_against_fraction_oracle(rng):
    for _ in range(200):
        n = int(rng.integers(1, 10))
        flags = [bool(rng.integers(0, 2)) for _ in range(n)]
        num_gt = max(1, sum(flags) + int(rng.integers(0, 3)))
        got = average_precision(recs(flags), num_gt)
        assert got == pytest.approx(float(oracles.ap_oracle(flags, num_gt)), abs=1e-12)


def test_ap_invariant_under_monotone_score_transform(rng):
    for _ in range(30):
        dets, gts = oracles.random_case(rng)
        if not dets:
            continue
        records = match_detections(dets, gts, 0.5)
        num_gt = len(gts)
        base = average_precision(records, max(num_gt, 1))
        squeezed = [
            Detection(d.interval, d.label, 0.1 * d.score**3 + 2.0) for d in dets
        ]  # strictly monotone in score
        records2 = match_detections(squeezed, gts, 0.5)
        assert average_precision(records2, max(num_gt, 1)) == pytest.approx(base, abs=1e-12)


def test_duplicating_detections_never_increases_ap(rng):
    for _ in range(50):
        dets, gts = oracles.random_case(rng)
        if not dets or not gts:
            continue
        records = match_detections(dets, gts, 0.5)
        num_gt = len(gts)
        base = average_precision(records, num_gt)
        doubled = list(dets) + list(dets)
        records2 = match_detections(doubled, gts, 0.5)
        assert average_precision(records2, num_gt) <= base + 1e-12


# ---------------------------------------------------------------------------
# evaluate / mAP


def perfect_detections(ds):
    return {
        v.video_id: [Detection(g.interval, g.label, 1.0 - 0.01 * i) for i, g in enumerate(v.instances)]
        for v in ds.videos
    }


def test_evaluate_ground_truth_as_detections_is_perfect():
    ds = make_dataset(
        [
            ("v0", 30.0, [(0.0, 5.0, 0, 3), (10.0, 18.0, 1, 12), (20.0, 29.0, 2, 25)]),
            ("v1", 30.0, [(2.0, 9.0, 1, 7), (12.0, 25.0, 0, 21)]),
        ]
    )
    report = evaluate(perfect_detections(ds), ds)
    assert report.average_map == 1.0
    for a in DEFAULT_ALPHAS:
        assert report.map_at[a] == 1.0
    assert report.map_small == 1.0 and report.map_medium == 1.0 and report.map_large == 1.0


def test_evaluate_no_detections_is_zero():
    ds = make_dataset([("v0", 30.0, [(0.0, 5.0, 0, 3)])])
    report = evaluate({}, ds)
    assert report.average_map == 0.0


def test_zero_gt_category_excluded_from_mean():
    ds = make_dataset([("v0", 30.0, [(0.0, 10.0, 0, 3)])], categories=("a", "b"))
    dets = {"v0": [det(0.0, 10.0, 0, 0.9), det(0.0, 10.0, 1, 0.8)]}
    m, per_cat = map_at(dets, ds, 0.5)
    assert set(per_cat) == {0}  # category b has no ground truth
    assert m == 1.0


def test_map_matches_oracle_random(rng):
    for _ in range(60):
        detections, ds = oracles.random_dataset_case(rng)
        alpha = float(rng.choice([0.3, 0.5, 0.7]))
        got, _ = map_at(detections, ds, alpha)
        want = oracles.map_oracle(detections, ds, alpha)
        assert got == pytest.approx(want, abs=1e-9)


def test_map_non_increasing_in_alpha(rng):
    grid = (0.1, 0.3, 0.5, 0.7, 0.9)
    for _ in range(60):
        detections, ds = oracles.random_dataset_case(rng)
        vals = [map_at(detections, ds, a)[0] for a in grid]
        assert all(x >= y - 1e-12 for x, y in zip(vals, vals[1:]))


def test_average_map_is_mean_of_grid():
    ds = make_dataset([("v0", 30.0, [(0.0, 5.0, 0, 3), (10.0, 18.0, 1, 12)])])
    dets = {"v0": [det(0.0, 4.0, 0, 0.9), det(10.0, 18.0, 1, 0.8)]}
    report = evaluate(dets, ds)
    assert report.average_map == pytest.approx(np.mean([report.map_at[a] for a in DEFAULT_ALPHAS]))
    assert all(0.0 <= v <= 1.0 for v in report.map_at.values())


# ---------------------------------------------------------------------------
# stratified


def test_shot_group_boundaries():
    assert shot_group(1) == "small"
    assert shot_group(9) == "small"
    assert shot_group(10) == "medium"
    assert shot_group(19) == "medium"
    assert shot_group(20) == "large"
    assert shot_group(100) == "large"


def test_shot_groups_partition(rng):
    for _ in range(20):
        counts = {"small": 0, "medium": 0, "large": 0}
        shots = rng.integers(1, 60, size=30)
        for s in shots:
            counts[shot_group(int(s))] += 1
        assert sum(counts.values()) == 30


def test_stratified_perfect_split():
    ds = make_dataset(
        [("v0", 60.0, [(0.0, 5.0, 0, 4), (10.0, 15.0, 0, 15), (20.0, 25.0, 0, 30)])],
        categories=("a",),
    )
    res = stratified_map(perfect_detections(ds), ds, 0.5)
    assert res.maps == {"small": 1.0, "medium": 1.0, "large": 1.0}
    assert res.counts == {"small": 1, "medium": 1, "large": 1}
    assert res.empty == ()


def test_stratified_fp_counts_against_all_groups():
    # one small-group GT, one large-group GT, plus a pure FP detection
    ds = make_dataset(
        [("v0", 60.0, [(0.0, 10.0, 0, 4), (20.0, 30.0, 0, 30)])],
        categories=("a",),
    )
    dets = {
        "v0": [
            det(0.0, 10.0, 0, 0.9),   # TP in small
            det(20.0, 30.0, 0, 0.8),  # TP in large
            det(40.0, 50.0, 0, 0.7),  # FP everywhere
        ]
    }
    res = stratified_map(dets, ds, 0.5)
    # small group: [TP(small), FP] with 1 GT -> AP 1.0 (TP ranks first)
    assert res.maps["small"] == 1.0
    assert res.maps["large"] == 1.0
    # demote the small TP below the FP; the large TP is excluded from the
    # small list, so small sees [FP, TP] over 1 GT -> AP 1/2
    dets["v0"][0] = det(0.0, 10.0, 0, 0.0)
    res2 = stratified_map(dets, ds, 0.5)
    assert res2.maps["small"] == pytest.approx(0.5)


def test_stratified_empty_group_flagged():
    ds = make_dataset([("v0", 60.0, [(0.0, 5.0, 0, 4)])], categories=("a",))
    res = stratified_map({}, ds, 0.5)
    assert "medium" in res.empty and "large" in res.empty
    assert res.maps["medium"] == 0.0


def test_stratified_tp_outside_group_not_counted():
    ds = make_dataset(
        [("v0", 60.0, [(0.0, 10.0, 0, 4), (20.0, 30.0, 0, 30)])],
        categories=("a",),
    )
    dets = {"v0": [det(20.0, 30.0, 0, 0.9)]}  # only the large instance found
    res = stratified_map(dets, ds, 0.5)
    assert res.maps["large"] == 1.0
    assert res.maps["small"] == 0.0  # its only record was a TP for another group


# ---------------------------------------------------------------------------
# report plumbing


def test_report_serialization_round_trip():
    ds = make_dataset([("v0", 30.0, [(0.0, 5.0, 0, 3), (10.0, 18.0, 1, 12)])])
    report = evaluate(perfect_detections(ds), ds)
    doc = report.to_dict()
    assert doc["average_map"] == 1.0
    assert doc["map"]["0.5"] == 1.0
    assert doc["stratified"]["0.3"]["counts"]["small"] == 1
    text = report.to_text()
    assert "average mAP" in text and "AP@0.5" in text
    # aligned: every table row has the same width
    rows = [l for l in text.splitlines() if l and not l.startswith(("average", "shot"))]
    assert len({len(r) for r in rows}) == 1


def test_parse_iou_grid():
    assert parse_iou_grid("0.3:0.7:0.1") == (0.3, 0.4, 0.5, 0.6, 0.7)
    assert parse_iou_grid("0.5") == (0.5,)
    assert parse_iou_grid("0.25,0.5,0.75") == (0.25, 0.5, 0.75)
    with pytest.raises(ValueError):
        parse_iou_grid("0.7:0.3:0.1")
    with pytest.raises(ValueError):
        parse_iou_grid("0.3:0.7")
