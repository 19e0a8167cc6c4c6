import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from telkit import data
from telkit.data import (
    Dataset,
    FeatureSequence,
    Instance,
    ParseError,
    TimeInterval,
    ValidationError,
    VideoAnnotation,
    derive_num_shots,
    load_annotations,
    load_detections,
    load_features,
    load_proposals,
    save_annotations,
    save_detections,
    save_features,
    save_proposals,
    time_to_snippet,
)
from conftest import make_dataset, det, features_from


def test_interval_rejects_backwards():
    with pytest.raises(ValidationError):
        TimeInterval(5.0, 4.0)
    with pytest.raises(ValidationError):
        TimeInterval(5.0, 5.0)
    with pytest.raises(ValidationError):
        TimeInterval(-1.0, 4.0)


def test_num_shots_derivation():
    span = TimeInterval(5.0, 25.0)
    # boundaries at 10 and 20 are strictly inside, 40 is not
    assert derive_num_shots(span, [10.0, 20.0, 40.0]) == 3
    assert derive_num_shots(span, None) == 1
    assert derive_num_shots(span, []) == 1
    # endpoints do not count as interior cuts
    assert derive_num_shots(span, [5.0, 25.0]) == 1


@given(st.lists(st.floats(0.1, 99.9), min_size=0, max_size=30))
def test_num_shots_monotone_in_boundaries(bounds):
    bounds = sorted(set(bounds))
    span = TimeInterval(10.0, 60.0)
    full = derive_num_shots(span, bounds)
    # dropping boundaries can only lower the count
    assert derive_num_shots(span, bounds[::2]) <= full
    assert full == 1 + sum(1 for b in bounds if 10.0 < b < 60.0)


def test_annotation_round_trip(tmp_path):
    ds = Dataset(
        ("walk", "run"),
        (
            VideoAnnotation(
                "v1",
                100.0,
                (Instance(TimeInterval(5.0, 25.0), 0, 3), Instance(TimeInterval(30.0, 44.5), 1, 19)),
                shot_boundaries=(10.0, 20.0, 40.0),
            ),
            VideoAnnotation("v2", 50.0, ()),
        ),
    )
    p = tmp_path / "ann.json"
    save_annotations(ds, p)
    assert load_annotations(p) == ds


def test_annotation_num_shots_explicit_wins(tmp_path):
    doc = {
        "categories": ["a"],
        "videos": [
            {
                "id": "v",
                "duration": 100.0,
                "shot_boundaries": [10.0, 20.0],
                "instances": [
                    {"start": 5.0, "end": 25.0, "label": "a", "num_shots": 19},
                    {"start": 5.0, "end": 25.0, "label": "a"},
                ],
            }
        ],
    }
    p = tmp_path / "ann.json"
    p.write_text(json.dumps(doc))
    ds = load_annotations(p)
    assert ds.videos[0].instances[0].num_shots == 19  # explicit beats derived
    assert ds.videos[0].instances[1].num_shots == 3


@pytest.mark.parametrize(
    "mutate, fragment",
    [
        (lambda d: d["videos"][0]["instances"][0].update(end=5.0), "end"),
        (lambda d: d["videos"][0]["instances"][0].update(label="nope"), "unknown category"),
        (lambda d: d["videos"][0]["instances"][0].update(end=999.0), "duration"),
        (lambda d: d["videos"][0].update(shot_boundaries=[0.0]), "shot_boundaries"),
        (lambda d: d["videos"][0].update(duration=-3), "duration"),
        (lambda d: d.update(categories=["a", "a"]), "unique"),
        (lambda d: d["videos"][0]["instances"][0].pop("start"), "start"),
    ],
)
def test_annotation_validation_errors(tmp_path, mutate, fragment):
    doc = {
        "categories": ["a"],
        "videos": [
            {"id": "v", "duration": 100.0, "instances": [{"start": 5.0, "end": 25.0, "label": "a"}]}
        ],
    }
    mutate(doc)
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(ValidationError) as e:
        load_annotations(p)
    assert fragment in str(e.value)


def test_annotation_parse_error_has_line(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{"categories": ["a",\n  "videos": }')
    with pytest.raises(ParseError) as e:
        load_annotations(p)
    assert "line" in str(e.value)


def test_detection_round_trip(tmp_path):
    ds = make_dataset([("v0", 20.0, [(1.0, 3.0, 0, 1)]), ("v1", 20.0, [])])
    dets = {"v0": (det(1.0, 3.0, 0, 0.9), det(4.0, 9.0, 2, 0.4)), "v1": ()}
    p = tmp_path / "dets.json"
    save_detections(dets, ds, p)
    assert load_detections(p, ds) == dets


def test_detection_unknown_label_rejected(tmp_path):
    ds = make_dataset([("v0", 20.0, [])], categories=("a",))
    p = tmp_path / "dets.json"
    p.write_text(json.dumps({"videos": [{"id": "v0", "detections": [{"start": 0, "end": 1, "label": "zz", "score": 0.5}]}]}))
    with pytest.raises(ValidationError) as e:
        load_detections(p, ds)
    assert "unknown category" in str(e.value)


def test_detection_unknown_video_rejected(tmp_path):
    ds = make_dataset([("v0", 20.0, [])], categories=("a",))
    p = tmp_path / "dets.json"
    p.write_text(json.dumps({"videos": [{"id": "ghost", "detections": []}]}))
    with pytest.raises(ValidationError):
        load_detections(p, ds)


def test_proposal_round_trip_and_score_range(tmp_path):
    props = {"v0": (data.Proposal(TimeInterval(0.0, 5.0), 0.75),)}
    p = tmp_path / "props.json"
    save_proposals(props, p)
    assert load_proposals(p) == props
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"videos": [{"id": "v0", "detections": [{"start": 0, "end": 1, "score": 1.5}]}]}))
    with pytest.raises(ValidationError):
        load_proposals(bad)


# ---------------------------------------------------------------------------
# TFF1 features


def test_features_round_trip_bytes(tmp_path, rng):
    arr = rng.normal(size=(7, 5)).astype(np.float32)
    fs = FeatureSequence("clip", 0.8, arr)
    p = tmp_path / "clip.tff"
    save_features(fs, p)
    raw = p.read_bytes()
    assert raw[:4] == b"TFF1"
    loaded = load_features(p)
    assert loaded.video_id == "clip"
    assert loaded.num_snippets == 7 and loaded.num_channels == 5
    assert np.array_equal(loaded.data, arr)
    save_features(loaded, tmp_path / "again.tff")
    assert (tmp_path / "again.tff").read_bytes() == raw


def test_features_bad_magic(tmp_path):
    p = tmp_path / "x.tff"
    p.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(ParseError) as e:
        load_features(p)
    assert "magic" in str(e.value)


def test_features_truncated(tmp_path, rng):
    fs = features_from(rng.normal(size=(4, 3)))
    p = tmp_path / "x.tff"
    save_features(fs, p)
    p.write_bytes(p.read_bytes()[:-5])
    with pytest.raises(ParseError) as e:
        load_features(p)
    assert "truncated" in str(e.value)


def test_features_trailing_bytes(tmp_path, rng):
    fs = features_from(rng.normal(size=(4, 3)))
    p = tmp_path / "x.tff"
    save_features(fs, p)
    p.write_bytes(p.read_bytes() + b"junk")
    with pytest.raises(ParseError):
        load_features(p)


def test_features_non_finite_rejected(tmp_path):
    arr = np.ones((3, 2), dtype=np.float32)
    fs = features_from(arr)
    p = tmp_path / "x.tff"
    save_features(fs, p)
    raw = bytearray(p.read_bytes())
    raw[16:20] = np.array([np.nan], dtype="<f4").tobytes()
    p.write_bytes(bytes(raw))
    with pytest.raises(ValidationError) as e:
        load_features(p)
    assert "non-finite" in str(e.value)
    with pytest.raises(ValidationError):
        FeatureSequence("v", 1.0, np.array([[np.inf]], dtype=np.float32))


def test_feature_data_is_read_only(rng):
    fs = features_from(rng.normal(size=(3, 2)))
    with pytest.raises(ValueError):
        fs.data[0, 0] = 1.0


def test_time_to_snippet_examples():
    fs = features_from(np.zeros((150, 4)), interval=0.8)
    assert time_to_snippet(0.0, fs) == 0
    assert time_to_snippet(2.0, fs) == 2  # floor(2.5)
    assert time_to_snippet(150 * 0.8, fs) == 149  # end of video clamps to last snippet
    assert time_to_snippet(1e9, fs) == 149
    assert time_to_snippet(-0.5, fs) == 0


@given(st.lists(st.floats(0, 120), min_size=2, max_size=20))
def test_time_to_snippet_non_decreasing(ts):
    fs = features_from(np.zeros((150, 1)), interval=0.8)
    ts = sorted(ts)
    idx = [time_to_snippet(t, fs) for t in ts]
    assert all(a <= b for a, b in zip(idx, idx[1:]))


def test_atomic_write_no_partial_output(tmp_path, monkeypatch):
    target = tmp_path / "out.json"

    def boom(src, dst):
        raise OSError("disk went away")

    monkeypatch.setattr(data.os, "replace", boom)
    with pytest.raises(OSError):
        data.atomic_write_text(target, "hello")
    monkeypatch.undo()
    assert not target.exists()
    assert list(tmp_path.iterdir()) == []  # temp file cleaned up


def test_atomic_write_replaces_existing(tmp_path):
    target = tmp_path / "out.json"
    data.atomic_write_text(target, "one")
    data.atomic_write_text(target, "two")
    assert target.read_text() == "two"
    assert len(list(tmp_path.iterdir())) == 1
