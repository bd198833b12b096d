"""Sequence-level latency-agnostic and latency-aware aggregation.

A prediction made from frame ``t`` by a method needing ``d`` frames of
inference time is scored against the ground truth of frame ``t + d``. With
``d = 0`` this is plain per-frame evaluation. Frame positions here are
0-based offsets into the sequence.

Only pairs whose target frame exists are evaluated (no wrap-around, no
extrapolated ground truth). A pair whose target frame lacks positives or
negatives is counted as degenerate; each metric is averaged over the pairs
where it is defined.

Note on the pairing: each prediction is matched with the ground truth that
lies its latency ahead. A rolling reading, where each ground-truth instant is
matched with the newest prediction finished by then, is not implemented.
"""

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, NothingToEvaluateError, SpecError
from .metrics import METRIC_NAMES, FrameMetrics, frame_metrics
from .raster import ScoreMap


@dataclass(frozen=True)
class LatencyProfile:
    """Inference time of a method, fixed or measured per frame (milliseconds)."""

    fps: float
    mode: str = "fixed"
    fixed_ms: float = 0.0
    per_frame_ms: tuple = ()

    def __post_init__(self):
        if not (self.fps > 0 and math.isfinite(self.fps)):
            raise SpecError(f"fps must be positive, got {self.fps}")
        if self.mode == "fixed":
            if not (math.isfinite(self.fixed_ms) and self.fixed_ms >= 0):
                raise SpecError(f"latency must be finite and >= 0, got {self.fixed_ms}")
        elif self.mode == "measured":
            ms = tuple(float(x) for x in self.per_frame_ms)
            if any(not (math.isfinite(x) and x >= 0) for x in ms):
                raise SpecError("measured latencies must be finite and >= 0")
            object.__setattr__(self, "per_frame_ms", ms)
        else:
            raise SpecError(f"unknown latency mode {self.mode!r}")

    @classmethod
    def fixed(cls, ms, fps):
        return cls(fps=fps, mode="fixed", fixed_ms=float(ms))

    @classmethod
    def measured(cls, per_frame_ms, fps):
        return cls(fps=fps, mode="measured", per_frame_ms=tuple(per_frame_ms))

    @classmethod
    def zero(cls, fps):
        return cls.fixed(0.0, fps)

    def latency_ms(self, t):
        if self.mode == "fixed":
            return self.fixed_ms
        return self.per_frame_ms[t]

    def mean_ms(self):
        if self.mode == "fixed":
            return self.fixed_ms
        return math.fsum(self.per_frame_ms) / len(self.per_frame_ms) if self.per_frame_ms else 0.0

    def offsets(self, n_frames):
        if self.mode == "measured" and len(self.per_frame_ms) != n_frames:
            raise DimensionError(
                f"measured latency covers {len(self.per_frame_ms)} frames, sequence has {n_frames}"
            )
        return [latency_to_frames(self, t) for t in range(n_frames)]

    def to_dict(self):
        d = {"mode": self.mode, "fps": self.fps}
        if self.mode == "fixed":
            d["fixed_ms"] = self.fixed_ms
        else:
            d["mean_ms"] = self.mean_ms()
        return d


def latency_to_frames(profile, t=0):
    """Frame offset whose timestamp is closest to the latency; halves round up."""
    return int(math.floor(profile.latency_ms(t) * profile.fps / 1000.0 + 0.5))


@dataclass(frozen=True)
class MeanMetrics:
    auroc: Optional[float]
    auprc: Optional[float]
    fpr95: Optional[float]
    frames_evaluated: int
    frames_skipped_degenerate: int
    defined: dict
    delta_frames: tuple
    per_frame: tuple = field(repr=False, default=())

    def value(self, name):
        return getattr(self, name)

    def to_dict(self, metrics=METRIC_NAMES, per_frame=False):
        d = {m: getattr(self, m) for m in metrics}
        d["frames_evaluated"] = self.frames_evaluated
        d["frames_skipped_degenerate"] = self.frames_skipped_degenerate
        d["frames_defined"] = {m: self.defined[m] for m in metrics}
        d["delta_frames"] = list(self.delta_frames)
        if per_frame:
            d["per_frame"] = [
                {"t": t, "target": tt, **{m: getattr(fm, m) for m in metrics}}
                for t, tt, fm in self.per_frame
            ]
        return d


@dataclass(frozen=True)
class SequenceMetrics:
    latency_agnostic: MeanMetrics
    latency_aware: MeanMetrics
    profile: LatencyProfile

    def to_dict(self, metrics=METRIC_NAMES, per_frame=False):
        return {
            "latency_agnostic": self.latency_agnostic.to_dict(metrics, per_frame),
            "latency_aware": self.latency_aware.to_dict(metrics, per_frame),
            "latency": self.profile.to_dict(),
        }


def _mean(values):
    return math.fsum(values) / len(values) if values else None


def _map(fn, items, jobs):
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _pair_metrics(scores, gt, pairs, jobs):
    def one(pair):
        t, target = pair
        return frame_metrics(scores[t], gt[target].mask)

    return dict(zip(pairs, _map(one, pairs, jobs)))


def _candidate_pairs(n_frames, offsets):
    pairs = []
    for t, d in enumerate(offsets):
        if d < 0:
            raise SpecError(f"negative frame offset {d} at t={t}")
        if t + d < n_frames:
            pairs.append((t, t + d))
    return pairs


def _reduce(pairs, results):
    # ordered reduction with exactly-rounded sums: independent of worker scheduling
    per_frame = tuple((t, tt, results[(t, tt)]) for t, tt in pairs)
    means = {}
    defined = {}
    for name in METRIC_NAMES:
        vals = [getattr(fm, name) for _, _, fm in per_frame if getattr(fm, name) is not None]
        means[name] = _mean(vals)
        defined[name] = len(vals)
    degenerate = sum(1 for _, _, fm in per_frame if fm.positives == 0 or fm.negatives == 0)
    return MeanMetrics(
        **means,
        frames_evaluated=len(per_frame) - degenerate,
        frames_skipped_degenerate=degenerate,
        defined=defined,
        delta_frames=tuple(tt - t for t, tt, _ in per_frame),
        per_frame=per_frame,
    )


def _check_lengths(scores, gt):
    if len(scores) != len(gt):
        raise DimensionError(f"{len(scores)} score maps for {len(gt)} ground-truth frames")
    if len(gt) == 0:
        raise NothingToEvaluateError("empty sequence")


def evaluate_offsets(scores, gt, offsets, jobs=1):
    """Mean metrics of ``scores[t]`` against ``gt[t + offsets[t]]``."""
    _check_lengths(scores, gt)
    if len(offsets) != len(gt):
        raise DimensionError(f"{len(offsets)} offsets for {len(gt)} frames")
    pairs = _candidate_pairs(len(gt), offsets)
    if not pairs:
        raise NothingToEvaluateError(
            f"latency of at least {min(offsets)} frames leaves no target frame in a {len(gt)}-frame sequence"
        )
    return _reduce(pairs, _pair_metrics(scores, gt, pairs, jobs))


def evaluate_latency_agnostic(scores, gt, jobs=1):
    return evaluate_offsets(scores, gt, [0] * len(gt), jobs)


def evaluate_latency_aware(scores, gt, profile, jobs=1):
    return evaluate_offsets(scores, gt, profile.offsets(len(gt)), jobs)


def evaluate_sequence(scores, gt, profile, jobs=1):
    """Both blocks at once; frame pairs shared by the two blocks are scored once."""
    _check_lengths(scores, gt)
    n = len(gt)
    agnostic_pairs = _candidate_pairs(n, [0] * n)
    aware_pairs = _candidate_pairs(n, profile.offsets(n))
    if not aware_pairs:
        raise NothingToEvaluateError(f"latency leaves no target frame in a {n}-frame sequence")
    todo = list(dict.fromkeys(agnostic_pairs + aware_pairs))
    results = _pair_metrics(scores, gt, todo, jobs)
    return SequenceMetrics(
        latency_agnostic=_reduce(agnostic_pairs, results),
        latency_aware=_reduce(aware_pairs, results),
        profile=profile,
    )


class OracleScores(Sequence):
    """Scores equal to each frame's own ground-truth mask."""

    def __init__(self, gt):
        self.gt = gt

    def __len__(self):
        return len(self.gt)

    def __getitem__(self, t):
        if isinstance(t, slice):
            return [self[i] for i in range(*t.indices(len(self)))]
        return ScoreMap(self.gt[t].mask.values.astype(np.float32))


def oracle_sweep(gt, latencies, jobs=1):
    """Latency-aware metrics of the perfect method at each fixed frame offset."""
    n = len(gt)
    for d in latencies:
        if d < 0 or d + 1 > n:
            raise SpecError(f"latency of {d} frames needs at least {d + 1} frames, sequence has {n}")
    oracle = OracleScores(gt)
    return [(int(d), evaluate_offsets(oracle, gt, [int(d)] * n, jobs)) for d in latencies]


def _fmt(x):
    return "" if x is None else repr(float(x))


def sweep_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["delta_frames", "auroc", "auprc", "fpr95"])
    for d, m in rows:
        w.writerow([d, _fmt(m.auroc), _fmt(m.auprc), _fmt(m.fpr95)])
    return buf.getvalue()
