import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vasbench.errors import DimensionError
from vasbench.raster import (
    CameraModel,
    DepthMap,
    GroundTruthFrame,
    LabelMask,
    Pose,
    ScoreMap,
    count_positives,
    validate_frame,
    validate_scores,
)


def _frame(h=4, w=4, depth=True, pose=True):
    return GroundTruthFrame(
        index=1, timestamp=1 / 60,
        mask=LabelMask(np.zeros((h, w), np.uint8)),
        depth=DepthMap(np.full((h, w), 10.0, np.float32)) if depth else None,
        pose=Pose.identity() if pose else None,
    )


def _rot(a, b, c):
    cx, sx, cy, sy, cz, sz = np.cos(a), np.sin(a), np.cos(b), np.sin(b), np.cos(c), np.sin(c)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def test_all_normal_frame_is_valid():
    assert validate_frame(_frame(), (4, 4)) == []


def test_non_binary_label_reports_pixel():
    m = np.zeros((4, 4), np.uint8)
    m.flat[5] = 2
    f = _frame()
    f = GroundTruthFrame(f.index, f.timestamp, LabelMask(m), f.depth, f.pose)
    (issue,) = validate_frame(f, (4, 4))
    assert issue.kind == "non_binary_label" and issue.index == 5


def test_nan_depth_is_non_finite():
    d = np.full((4, 4), 10.0, np.float32)
    d[2, 3] = np.nan
    f = _frame()
    f = GroundTruthFrame(f.index, f.timestamp, f.mask, DepthMap(d), f.pose)
    (issue,) = validate_frame(f, (4, 4))
    assert issue.kind == "non_finite" and issue.index == 11


def test_dimension_mismatch_and_bad_pose():
    f = _frame(3, 4)
    bad = Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    f = GroundTruthFrame(f.index, f.timestamp, f.mask, f.depth, bad)
    kinds = {i.kind for i in validate_frame(f, (4, 4))}
    assert kinds == {"dimension_mismatch", "not_rigid"}


def test_scores_validation():
    s = np.zeros((2, 3), np.float32)
    assert validate_scores(ScoreMap(s), (3, 2)) == []
    s[1, 1] = np.inf
    assert validate_scores(ScoreMap(s), (3, 2))[0].index == 4


@pytest.mark.parametrize("mask, n", [
    (np.zeros((3, 3)), 0),
    (np.ones((3, 3)), 9),
    (np.array([[1, 0], [0, 1]]), 2),
])
def test_count_positives(mask, n):
    assert count_positives(LabelMask(mask)) == n


def test_rasters_are_read_only():
    m = LabelMask(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        m.values[0, 0] = 1
    with pytest.raises(DimensionError):
        ScoreMap(np.zeros(4))


@settings(max_examples=200, deadline=None)
@given(
    st.integers(0, 15),
    st.sampled_from(["label", "nan", "inf", "zero", "negative"]),
)
def test_any_single_pixel_corruption_is_detected(pixel, corruption):
    mask = np.zeros((4, 4), np.uint8)
    depth = np.full((4, 4), 10.0, np.float32)
    if corruption == "label":
        mask.flat[pixel] = 7
    else:
        depth.flat[pixel] = {"nan": np.nan, "inf": np.inf, "zero": 0.0, "negative": -1.0}[corruption]
    f = GroundTruthFrame(1, 0.0, LabelMask(mask), DepthMap(depth), Pose.identity())
    issues = validate_frame(f, (4, 4))
    assert len(issues) == 1 and issues[0].index == pixel


def test_camera_unproject_examples():
    cam = CameraModel(100.0, 100.0, 32.0, 24.0)
    assert np.allclose(cam.unproject(32.0, 24.0, 5.0), [0, 0, 5])
    assert np.allclose(cam.unproject(132.0, 24.0, 2.0), [2, 0, 2])
    with pytest.raises(ValueError):
        cam.unproject(0, 0, 0.0)


def test_camera_from_fov():
    cam = CameraModel.from_fov(480, 270, 90.0)
    assert cam.fx == pytest.approx(240.0) and (cam.cx, cam.cy) == (240.0, 135.0)


@settings(max_examples=100, deadline=None)
@given(st.tuples(*[st.floats(-3, 3)] * 6))
def test_pose_compose_inverse(v):
    a = Pose(_rot(*v[:3]), np.array(v[3:]))
    b = Pose(_rot(*v[3:]), np.array(v[:3]))
    assert np.allclose(a.compose(a.inverse()).matrix, np.eye(4), atol=1e-12)
    assert np.allclose(a.compose(b).matrix, a.matrix @ b.matrix, atol=1e-12)
    p = np.array([[1.0, 2.0, 3.0]])
    assert np.allclose(a.inverse().apply(a.apply(p)), p)
    assert a.is_valid()
