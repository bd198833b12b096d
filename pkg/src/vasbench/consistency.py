"""Reprojection-based temporal consistency of a method's binary masks.

For each frame pair ``(t, t + d)`` the two score maps are binarized at their own
TPR-95 thresholds (each against its own ground truth), the earlier mask is
warped into the later view, and the IoU of the warped and later masks is taken
over the pixels where the warp produced a valid landing. ``d`` is one second of
frames by default, independent of the method's latency.
"""

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, GeometryMissingError, NothingToEvaluateError
from .metrics import TPR_TARGET, threshold_at_tpr
from .raster import LabelMask
from .reprojection import MAX_DEPTH, warp_mask
from .streaming import _map

SKIP_NO_POSITIVES = "no_positives"
SKIP_EMPTY_UNION = "empty_union"
SKIP_MISSING_GEOMETRY = "missing_geometry"


@dataclass(frozen=True)
class ConsistencyReport:
    mean_iou: Optional[float]
    per_pair_iou: tuple
    pairs_skipped: dict
    delta_frames: int

    def to_dict(self, per_pair=False):
        d = {
            "mean_iou": self.mean_iou,
            "pairs_evaluated": sum(1 for _, v in self.per_pair_iou if v is not None),
            "pairs_skipped": dict(self.pairs_skipped),
            "delta_frames": self.delta_frames,
        }
        if per_pair:
            d["per_pair_iou"] = [[t, v] for t, v in self.per_pair_iou]
        return d


def binarize(scores, gt_mask, tpr_target=TPR_TARGET):
    tau = threshold_at_tpr(scores, gt_mask, tpr_target)
    if tau is None:
        return None
    return LabelMask(np.asarray(scores) >= tau)


def binarize_pair(scores_t, scores_dt, gt_t, gt_dt, tpr_target=TPR_TARGET):
    """Threshold each score map against its own frame's ground truth.

    Returns ``(S_t, S_dt)`` or ``None`` when either frame has no positives.
    """
    s_t = binarize(scores_t, gt_t, tpr_target)
    if s_t is None:
        return None
    s_dt = binarize(scores_dt, gt_dt, tpr_target)
    if s_dt is None:
        return None
    return s_t, s_dt


def pair_iou(s_t, warp, s_dt):
    """IoU of the warped and target masks, restricted to validly landed pixels."""
    warped = np.asarray(warp.warped_mask).astype(bool)
    target = np.asarray(s_dt).astype(bool)
    p = np.asarray(warp.valid).astype(bool)
    if warped.shape != target.shape or p.shape != target.shape:
        raise DimensionError(f"warp {warped.shape} and target mask {target.shape} differ")
    union = np.count_nonzero(p & (warped | target))
    if union == 0:
        return None
    return np.count_nonzero(p & warped & target) / union


def _pair(scores, gt, cam, max_depth, tpr_target):
    def one(pair):
        t, tt = pair
        a, b = gt[t], gt[tt]
        if not (a.has_geometry and b.has_geometry):
            return None, SKIP_MISSING_GEOMETRY
        masks = binarize_pair(scores[t], scores[tt], a.mask, b.mask, tpr_target)
        if masks is None:
            return None, SKIP_NO_POSITIVES
        s_t, s_dt = masks
        warp = warp_mask(s_t, a.depth, a.pose, b.depth, b.pose, cam, max_depth)
        iou = pair_iou(s_t, warp, s_dt)
        return iou, (SKIP_EMPTY_UNION if iou is None else None)

    return one


def evaluate_consistency(scores, gt, fps, cam, delta_seconds=1.0, delta_frames=None,
                         max_depth=MAX_DEPTH, tpr_target=TPR_TARGET, jobs=1):
    """Mean pair IoU over ``t = 0 .. T - d - 1`` with ``d = round(fps * delta_seconds)``.

    ``delta_frames`` overrides ``d`` (e.g. to couple it to a method's latency).
    """
    if len(scores) != len(gt):
        raise DimensionError(f"{len(scores)} score maps for {len(gt)} ground-truth frames")
    n = len(gt)
    if delta_frames is None:
        delta_frames = int(math.floor(fps * delta_seconds + 0.5))
    if delta_frames < 0:
        raise ValueError("frame offset must be non-negative")
    if n <= delta_frames:
        raise NothingToEvaluateError(
            f"sequence of {n} frames is too short for a {delta_frames}-frame offset"
        )
    if n and not gt[0].has_geometry:
        raise GeometryMissingError("temporal consistency needs depth and pose channels")

    pairs = [(t, t + delta_frames) for t in range(n - delta_frames)]
    results = _map(_pair(scores, gt, cam, max_depth, tpr_target), pairs, jobs)

    skipped = {SKIP_NO_POSITIVES: 0, SKIP_EMPTY_UNION: 0, SKIP_MISSING_GEOMETRY: 0}
    per_pair = []
    for (t, _), (iou, reason) in zip(pairs, results):
        per_pair.append((t, iou))
        if reason is not None:
            skipped[reason] += 1
    vals = [v for _, v in per_pair if v is not None]
    mean = math.fsum(vals) / len(vals) if vals else None
    return ConsistencyReport(mean, tuple(per_pair), skipped, delta_frames)


def per_pair_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "iou"])
    for t, v in report.per_pair_iou:
        w.writerow([t, "" if v is None else repr(float(v))])
    return buf.getvalue()
