import math

import numpy as np
import pytest

from telkit.data import Instance, TimeInterval
from telkit.selfsim import (
    dataset_self_similarity,
    instance_self_similarity,
    instance_snippet_span,
    similarity_matrix,
)
from conftest import features_from, make_dataset


def inst(start, end, label=0):
    return Instance(TimeInterval(start, end), label)


def test_span_covers_instance():
    fs = features_from(np.zeros((20, 4), dtype=np.float32), interval=1.0)
    assert instance_snippet_span(fs, inst(3.0, 7.0)) == (3, 6)
    assert instance_snippet_span(fs, inst(3.2, 7.8)) == (3, 7)
    # clamped at the ends
    assert instance_snippet_span(fs, inst(0.0, 100.0)) == (0, 19)


def test_identical_snippets_mean_one_std_zero():
    x = np.tile(np.array([1.0, 2.0, 3.0], dtype=np.float32), (6, 1))
    fs = features_from(x)
    r = instance_self_similarity(fs, inst(0.0, 6.0))
    assert r.mean == pytest.approx(1.0)
    assert r.std == pytest.approx(0.0, abs=1e-7)
    assert r.num_snippets == 6


def test_two_orthogonal_pairs_frozen_values():
    # e1,e1,e2,e2: six pairs, two similar (cos 1) and four orthogonal (cos 0)
    x = np.array(
        [[1, 0], [1, 0], [0, 1], [0, 1]],
        dtype=np.float32,
    )
    fs = features_from(x)
    r = instance_self_similarity(fs, inst(0.0, 4.0))
    assert r.mean == pytest.approx(1 / 3)
    assert r.std == pytest.approx(math.sqrt(2) / 3)


def test_scale_invariance():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(8, 5)).astype(np.float32)
    scales = rng.uniform(0.5, 5.0, size=(8, 1)).astype(np.float32)
    a = instance_self_similarity(features_from(x), inst(0.0, 8.0))
    b = instance_self_similarity(features_from(x * scales), inst(0.0, 8.0))
    assert b.mean == pytest.approx(a.mean, abs=1e-5)
    assert b.std == pytest.approx(a.std, abs=1e-5)


def test_snippet_permutation_invariance():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(7, 4)).astype(np.float32)
    perm = rng.permutation(7)
    a = instance_self_similarity(features_from(x), inst(0.0, 7.0))
    b = instance_self_similarity(features_from(x[perm]), inst(0.0, 7.0))
    assert b.mean == pytest.approx(a.mean, abs=1e-6)
    assert b.std == pytest.approx(a.std, abs=1e-6)


def test_zero_rows_treated_as_dissimilar():
    x = np.array([[1, 0], [0, 0], [1, 0]], dtype=np.float32)
    m = similarity_matrix(features_from(x), inst(0.0, 3.0))
    assert m[0, 1] == 0.0 and m[0, 2] == pytest.approx(1.0)


def test_single_snippet_instance_skipped():
    fs = features_from(np.ones((10, 3), dtype=np.float32), interval=1.0)
    assert instance_self_similarity(fs, inst(2.0, 2.5)) is None


def test_dataset_average_and_missing_videos():
    ds = make_dataset(
        [
            ("v0", 10.0, [(0.0, 4.0, 0, 1), (5.0, 9.0, 1, 1)]),
            ("v1", 10.0, [(0.0, 4.0, 0, 1)]),
        ]
    )
    x0 = np.tile(np.array([1.0, 0.0], dtype=np.float32), (10, 1))
    feats = {"v0": features_from(x0, video_id="v0")}
    report = dataset_self_similarity(feats, ds)
    assert report.missing_videos == ("v1",)
    assert len(report.per_instance) == 2
    assert report.average_std == pytest.approx(0.0, abs=1e-7)
    assert report.average_mean == pytest.approx(1.0)
    doc = report.to_dict()
    assert doc["missing_videos"] == ["v1"]
    assert len(doc["per_instance"]) == 2


def test_dataset_average_is_unweighted_mean_of_stds():
    ds = make_dataset(
        [("v0", 12.0, [(0.0, 4.0, 0, 1), (4.0, 8.0, 1, 1)])],
    )
    # instance 1: all identical (std 0); instance 2: e1,e1,e2,e2 (std sqrt(2)/3)
    x = np.zeros((12, 2), dtype=np.float32)
    x[0:4] = [1.0, 0.0]
    x[4:6] = [1.0, 0.0]
    x[6:8] = [0.0, 1.0]
    feats = {"v0": features_from(x, video_id="v0")}
    report = dataset_self_similarity(feats, ds)
    assert report.average_std == pytest.approx(math.sqrt(2) / 6)


def test_no_eligible_instances_raises():
    ds = make_dataset([("v0", 10.0, [(2.0, 2.5, 0, 1)])])
    feats = {"v0": features_from(np.ones((10, 3), dtype=np.float32), video_id="v0")}
    with pytest.raises(ValueError):
        dataset_self_similarity(feats, ds)


def test_std_monotone_in_variation():
    # directly perturb a constant snippet block with growing magnitudes
    rng = np.random.default_rng(9)
    base = rng.normal(size=(1, 6))
    offsets = rng.normal(size=(10, 6))
    prev = -1.0
    for mag in (0.0, 0.3, 0.9):
        x = (np.tile(base, (10, 1)) + mag * offsets).astype(np.float32)
        r = instance_self_similarity(features_from(x), inst(0.0, 10.0))
        assert r.std > prev - 1e-9
        prev = r.std