import numpy as np
import pytest

from telkit.data import Dataset, Detection, FeatureSequence, Instance, TimeInterval, VideoAnnotation


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_dataset(videos, categories=("a", "b", "c")):
    """videos: list of (video_id, duration, [(start, end, label, num_shots), ...])."""
    vs = []
    for vid, dur, insts in videos:
        vs.append(
            VideoAnnotation(
                vid,
                dur,
                tuple(Instance(TimeInterval(s, e), lab, ns) for s, e, lab, ns in insts),
            )
        )
    return Dataset(tuple(categories), tuple(vs))


def det(start, end, label, score):
    return Detection(TimeInterval(start, end), label, score)


def features_from(array, interval=1.0, video_id="v0"):
    return FeatureSequence(video_id, interval, np.asarray(array, dtype=np.float32))
