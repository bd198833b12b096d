"""Exact per-frame binary classification metrics over pixel scores.

Thresholds classify ``score >= tau`` as anomalous. Pixels with equal scores
always fall on the same side of a threshold, so every quantity here is
invariant to pixel order. Degenerate inputs give ``None`` rather than a number:
AUROC and FPR@95 need both classes, AUPRC needs at least one positive.
"""

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError

METRIC_NAMES = ("auroc", "auprc", "fpr95")
TPR_TARGET = 0.95


@dataclass(frozen=True)
class FrameMetrics:
    auroc: Optional[float]
    auprc: Optional[float]
    fpr95: Optional[float]
    positives: int
    negatives: int

    def to_dict(self):
        return asdict(self)


def _split(scores, labels):
    s = np.asarray(scores)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise DimensionError(f"scores shape {s.shape} does not match labels shape {y.shape}")
    if s.size == 0:
        raise DimensionError("empty raster")
    s = s.ravel()
    if s.dtype.kind != "f":
        s = s.astype(np.float64)
    y = y.ravel().astype(bool)
    return np.sort(s[y]), np.sort(s[~y])


def _auroc(pos, neg):
    if pos.size == 0 or neg.size == 0:
        return None
    lo = np.searchsorted(neg, pos, side="left")
    hi = np.searchsorted(neg, pos, side="right")
    # twice the Mann-Whitney U, kept integral so the sum is exact
    u2 = int(lo.sum(dtype=np.int64)) * 2 + int((hi - lo).sum(dtype=np.int64))
    return u2 / (2 * pos.size * neg.size)


def _auprc(pos, neg):
    n_pos = pos.size
    if n_pos == 0:
        return None
    # distinct positive scores, descending; recall only moves at these thresholds
    starts = np.flatnonzero(np.r_[True, pos[1:] != pos[:-1]])
    tau = pos[starts]
    tp = n_pos - starts
    fp = neg.size - np.searchsorted(neg, tau, side="left")
    gained = np.r_[tp[:-1] - tp[1:], tp[-1]]
    return float(np.sum(gained / n_pos * (tp / (tp + fp))))


def _tpr_index(pos, tpr_target):
    """Index into ascending ``pos`` of the largest threshold reaching the target TPR."""
    n_pos = pos.size
    i = np.arange(n_pos)
    ok = (n_pos - i) / n_pos >= tpr_target
    return int(np.flatnonzero(ok)[-1])


def _fpr_at(pos, neg, tpr_target):
    if pos.size == 0 or neg.size == 0:
        return None
    tau = pos[_tpr_index(pos, tpr_target)]
    fp = neg.size - int(np.searchsorted(neg, tau, side="left"))
    return fp / neg.size


def auroc(scores, labels):
    """Probability a positive pixel outscores a negative one, ties counting half."""
    return _auroc(*_split(scores, labels))


def auprc(scores, labels):
    """Average precision: sum of precision times recall increment over thresholds."""
    return _auprc(*_split(scores, labels))


def fpr_at_95(scores, labels, tpr_target=TPR_TARGET):
    """False positive rate at the largest threshold whose TPR is at least 0.95."""
    return _fpr_at(*_split(scores, labels), tpr_target)


def threshold_at_tpr(scores, labels, tpr_target=TPR_TARGET):
    if not 0.0 < tpr_target <= 1.0:
        raise ValueError(f"tpr_target must lie in (0, 1], got {tpr_target}")
    pos, _ = _split(scores, labels)
    if pos.size == 0:
        return None
    return float(pos[_tpr_index(pos, tpr_target)])


def frame_metrics(scores, labels):
    """All three metrics for one frame, sharing a single split-and-sort."""
    pos, neg = _split(scores, labels)
    return FrameMetrics(
        auroc=_auroc(pos, neg),
        auprc=_auprc(pos, neg),
        fpr95=_fpr_at(pos, neg, TPR_TARGET),
        positives=int(pos.size),
        negatives=int(neg.size),
    )
