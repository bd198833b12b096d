import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vasbench.errors import DimensionError
from vasbench.metrics import auprc, auroc, fpr_at_95, frame_metrics, threshold_at_tpr

from oracles import (
    auprc_thresholds,
    auroc_pairwise,
    fpr95_thresholds,
    random_frame,
    threshold_thresholds,
)


def test_auroc_examples():
    assert auroc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert auroc([0.5, 0.6, 0.1, 0.2], [1, 1, 0, 0]) == 1.0
    assert auroc(np.full(10, 0.3), [1] * 3 + [0] * 7) == 0.5


def test_auprc_examples():
    assert auprc([0.9, 0.2], [1, 1]) == 1.0
    # P = 1 at R = 1/2, P = 2/3 at R = 1
    assert auprc([0.9, 0.8, 0.7], [1, 0, 1]) == pytest.approx(5 / 6, abs=1e-15)
    assert auprc(np.full(7, 0.4), [1, 1, 0, 0, 0, 0, 0]) == pytest.approx(2 / 7, abs=1e-15)


def test_fpr95_examples():
    assert fpr_at_95([0.9, 0.8, 0.1], [1, 1, 0]) == 0.0
    assert fpr_at_95(np.full(5, 1.0), [1, 0, 1, 0, 0]) == 1.0
    s = np.r_[np.repeat([0.9, 0.8], 10), 0.2, 0.1]
    y = np.r_[np.ones(20), 0, 0]
    assert fpr_at_95(s, y) == 0.0
    assert threshold_at_tpr(s, y) == pytest.approx(0.8)


def test_threshold_examples():
    s = np.arange(1.0, 101.0)
    assert threshold_at_tpr(s, np.ones(100)) == 6.0
    assert threshold_at_tpr([0.3, 0.7, 0.2], [0, 1, 0]) == 0.7
    assert threshold_at_tpr([0.3, 0.7], [0, 0]) is None
    with pytest.raises(ValueError):
        threshold_at_tpr([0.1], [1], 0.0)


def test_degenerate_frames_are_undefined():
    m = frame_metrics([0.1, 0.2], [0, 0])
    assert (m.auroc, m.auprc, m.fpr95) == (None, None, None)
    m = frame_metrics([0.1, 0.2], [1, 1])
    assert m.auroc is None and m.fpr95 is None and m.auprc == 1.0
    assert (m.positives, m.negatives) == (2, 0)


def test_shape_mismatch():
    with pytest.raises(DimensionError):
        auroc([0.1, 0.2], [1])
    with pytest.raises(DimensionError):
        auroc([], [])


def test_against_oracles_with_ties(rng):
    for _ in range(60):
        s, y = random_frame(rng, 2000)
        m = frame_metrics(s, y)
        assert m.auroc == pytest.approx(auroc_pairwise(s, y), abs=1e-12)
        assert m.auprc == pytest.approx(auprc_thresholds(s, y), abs=1e-12)
        assert m.fpr95 == pytest.approx(fpr95_thresholds(s, y), abs=1e-12)
        assert threshold_at_tpr(s, y) == threshold_thresholds(s, y)


def test_float32_scores_keep_their_ties():
    s = np.array([0.1, 0.1, 0.3], np.float32)
    assert auroc(s, [1, 0, 0]) == 0.25


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.booleans()), min_size=2, max_size=40))
def test_small_frames_match_oracles(pairs):
    s = np.array([p[0] for p in pairs], float) / 5
    y = np.array([p[1] for p in pairs])
    assert auroc(s, y) == (None if auroc_pairwise(s, y) is None else pytest.approx(auroc_pairwise(s, y)))
    ap = auprc_thresholds(s, y)
    assert auprc(s, y) == (None if ap is None else pytest.approx(ap))
    f = fpr95_thresholds(s, y)
    assert fpr_at_95(s, y) == (None if f is None else pytest.approx(f))


def test_order_and_monotone_transform_invariance(rng):
    s, y = random_frame(rng, 3000)
    ref = frame_metrics(s, y)
    perm = rng.permutation(s.size)
    assert frame_metrics(s[perm], y[perm]) == ref
    t = frame_metrics(np.exp(s), y)
    assert (t.auroc, t.fpr95) == (ref.auroc, ref.fpr95)
    assert t.auprc == pytest.approx(ref.auprc, abs=1e-12)


def test_auroc_of_negated_scores(rng):
    s, y = random_frame(rng, 3000)
    assert auroc(s, y) + auroc(-s, y) == pytest.approx(1.0, abs=1e-12)
