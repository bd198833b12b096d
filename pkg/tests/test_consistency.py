import numpy as np
import pytest

from vasbench.consistency import binarize, binarize_pair, evaluate_consistency, pair_iou, per_pair_csv
from vasbench.errors import GeometryMissingError, NothingToEvaluateError
from vasbench.raster import GroundTruthFrame, LabelMask
from vasbench.reprojection import WarpResult, WarpStats
from vasbench.streaming import OracleScores
from vasbench.synthgen import ReferenceScorer, score


def _warp(warped, valid):
    z = WarpStats(0, 0, 0, 0, 0)
    return WarpResult(LabelMask(warped), LabelMask(valid), LabelMask(valid), z)


def test_binarize_oracle_is_exact(small_seq):
    f = small_seq[20]
    s = binarize(OracleScores(small_seq)[20], f.mask)
    assert np.array_equal(s.values, f.mask.values)


def test_binarize_keeps_95_percent_of_positives(small_seq, rng):
    for t in (10, 50, 90):
        gt = small_seq[t].mask.as_bool()
        noisy = gt + rng.normal(0, 0.5, gt.shape)
        s = binarize(noisy, gt).as_bool()
        assert np.count_nonzero(s & gt) >= 0.95 * np.count_nonzero(gt)


def test_pair_without_positives_is_skipped():
    gt = np.zeros((4, 4), np.uint8)
    pos = gt.copy()
    pos[1, 1] = 1
    assert binarize_pair(pos.astype(float), pos.astype(float), gt, pos) is None
    assert binarize_pair(pos.astype(float), pos.astype(float), pos, pos) is not None


def test_pair_iou_cases():
    a = np.zeros((4, 4), np.uint8)
    a[:2, :2] = 1
    b = np.zeros((4, 4), np.uint8)
    b[2:, 2:] = 1
    ones = np.ones((4, 4), np.uint8)
    assert pair_iou(a, _warp(a, ones), a) == 1.0
    assert pair_iou(a, _warp(a, ones), b) == 0.0
    assert pair_iou(a, _warp(a, np.zeros((4, 4))), a) is None
    # pixels outside the valid mask are ignored
    c = a.copy()
    c[3, 3] = 1
    p = ones.copy()
    p[3, 3] = 0
    assert pair_iou(a, _warp(a, p), c) == 1.0


def test_pair_iou_is_symmetric(rng):
    for _ in range(20):
        x, y, p = (rng.random((8, 8)) < 0.4 for _ in range(3))
        assert pair_iou(None, _warp(x, p), y) == pair_iou(None, _warp(y, p), x)


def test_static_oracle_is_perfect(static_seq):
    rep = evaluate_consistency(OracleScores(static_seq), static_seq, 60, static_seq.camera)
    assert rep.mean_iou == 1.0 and rep.delta_frames == 60
    assert len(rep.per_pair_iou) == len(static_seq) - 60


def test_moving_oracle_and_shifted_scorer(small_seq):
    cam = small_seq.camera
    oracle = evaluate_consistency(OracleScores(small_seq), small_seq, 60, cam, delta_seconds=0.5)
    shifted = evaluate_consistency(score(ReferenceScorer("shifted", (10, 0)), small_seq), small_seq, 60, cam,
                                   delta_seconds=0.5)
    assert oracle.delta_frames == 30
    assert oracle.mean_iou >= 0.90
    assert shifted.mean_iou < oracle.mean_iou


def test_jobs_and_csv(small_seq):
    cam = small_seq.camera
    a = evaluate_consistency(OracleScores(small_seq), small_seq, 60, cam, delta_frames=20, jobs=1)
    b = evaluate_consistency(OracleScores(small_seq), small_seq, 60, cam, delta_frames=20, jobs=3)
    assert a == b
    lines = per_pair_csv(a).splitlines()
    assert lines[0] == "t,iou" and len(lines) == len(small_seq) - 20 + 1


def test_refusals(small_seq):
    flat = [GroundTruthFrame(f.index, f.timestamp, f.mask) for f in small_seq[:70]]
    with pytest.raises(GeometryMissingError):
        evaluate_consistency(OracleScores(flat), flat, 60, small_seq.camera)
    with pytest.raises(NothingToEvaluateError):
        evaluate_consistency(OracleScores(flat[:10]), flat[:10], 60, small_seq.camera)
