"""Raster and camera value types shared by every module.

Pixel grids are row-major with the origin at the top-left pixel, x growing to
the right and y growing downward. Arrays are stored as ``(height, width)``.

Camera coordinates follow the same orientation: x right, y down, z along the
optical axis. Depth is z-depth (distance along the optical axis), not ray
length. Poses are camera-to-world: ``X_world = R @ X_cam + t``.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import DimensionError

SKY_DEPTH = 1000.0
ORTHO_TOL = 1e-6


def _frozen(arr, dtype):
    src = arr
    arr = np.ascontiguousarray(arr, dtype=dtype)
    if isinstance(src, np.ndarray) and np.shares_memory(arr, src) and src.flags.writeable:
        # never freeze the caller's array
        arr = arr.copy()
    if arr.ndim != 2:
        raise DimensionError(f"raster must be 2-D, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


class _Raster:
    values: np.ndarray

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.values.shape == other.values.shape and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ScoreMap(_Raster):
    """Per-pixel anomaly scores, float32; higher means more anomalous."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, np.float32))


@dataclass(frozen=True, eq=False)
class LabelMask(_Raster):
    """Binary per-pixel labels, 1 = anomaly. Stored as uint8."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, np.uint8))

    def as_bool(self):
        return self.values.astype(bool)


@dataclass(frozen=True, eq=False)
class DepthMap(_Raster):
    """z-depth in meters, float32."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, np.float32))


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float

    @classmethod
    def from_fov(cls, width, height, hfov_deg=90.0):
        """Square-pixel pinhole with the principal point at ``(width/2, height/2)``."""
        f = (width / 2.0) / np.tan(np.radians(hfov_deg) / 2.0)
        return cls(float(f), float(f), width / 2.0, height / 2.0)

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def unproject(self, u, v, d):
        """Pixel ``(u, v)`` at z-depth ``d`` to a camera-frame point (arrays broadcast)."""
        d = np.asarray(d, dtype=np.float64)
        if np.any(d <= 0):
            raise ValueError("depth must be positive to unproject")
        x = d * (np.asarray(u, dtype=np.float64) - self.cx) / self.fx
        y = d * (np.asarray(v, dtype=np.float64) - self.cy) / self.fy
        return np.stack(np.broadcast_arrays(x, y, d), axis=-1)

    def project(self, points):
        """Camera-frame points ``(..., 3)`` to ``(u, v, z)`` arrays."""
        points = np.asarray(points, dtype=np.float64)
        z = points[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * points[..., 0] / z + self.cx
            v = self.fy * points[..., 1] / z + self.cy
        return u, v, z

    def is_valid_for(self, width, height):
        return self.fx > 0 and self.fy > 0 and 0 <= self.cx < width and 0 <= self.cy < height

    def to_dict(self):
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid camera-to-world transform."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    @property
    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other):
        """``self ∘ other``: apply ``other`` first, then ``self``."""
        return Pose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def inverse(self):
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def apply(self, points):
        return np.asarray(points) @ self.rotation.T + self.translation

    def orthonormality_error(self):
        r = self.rotation
        return max(float(np.abs(r.T @ r - np.eye(3)).max()), abs(float(np.linalg.det(r)) - 1.0))

    def is_valid(self, tol=ORTHO_TOL):
        return bool(np.all(np.isfinite(self.matrix))) and self.orthonormality_error() <= tol

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(self.translation, other.translation)

    __hash__ = None


@dataclass(frozen=True)
class GroundTruthFrame:
    index: int
    timestamp: float
    mask: LabelMask
    depth: Optional[DepthMap] = None
    pose: Optional[Pose] = None

    @property
    def has_geometry(self):
        return self.depth is not None and self.pose is not None


class Issue(NamedTuple):
    field: str
    kind: str
    index: Optional[int]
    message: str


def _first_bad(flat_bad):
    idx = np.flatnonzero(flat_bad)
    return int(idx[0]) if idx.size else None


def validate_frame(frame, manifest_dims):
    """Check a frame against every raster/pose invariant.

    ``manifest_dims`` is ``(width, height)``. Returns a list of :class:`Issue`;
    an empty list means the frame is valid. Pixel issues carry the row-major
    index of the first offending pixel.
    """
    width, height = manifest_dims
    issues = []

    def dims(name, raster):
        if raster.width != width or raster.height != height:
            issues.append(
                Issue(name, "dimension_mismatch", None,
                      f"{name} is {raster.width}x{raster.height}, expected {width}x{height}")
            )

    dims("mask", frame.mask)
    bad = _first_bad(frame.mask.values.ravel() > 1)
    if bad is not None:
        val = int(frame.mask.values.ravel()[bad])
        issues.append(Issue("mask", "non_binary_label", bad, f"mask value {val} at pixel {bad}"))

    if frame.depth is not None:
        dims("depth", frame.depth)
        d = frame.depth.values.ravel()
        bad = _first_bad(~np.isfinite(d))
        if bad is not None:
            issues.append(Issue("depth", "non_finite", bad, f"non-finite depth at pixel {bad}"))
        bad = _first_bad(np.isfinite(d) & (d <= 0))
        if bad is not None:
            issues.append(Issue("depth", "non_positive", bad, f"non-positive depth at pixel {bad}"))

    if frame.pose is not None and not frame.pose.is_valid():
        issues.append(Issue("pose", "not_rigid", None, "rotation is not orthonormal with det 1"))
    return issues


def validate_scores(scores, manifest_dims):
    width, height = manifest_dims
    issues = []
    if scores.width != width or scores.height != height:
        issues.append(Issue("scores", "dimension_mismatch", None,
                            f"scores are {scores.width}x{scores.height}, expected {width}x{height}"))
    bad = _first_bad(~np.isfinite(scores.values.ravel()))
    if bad is not None:
        issues.append(Issue("scores", "non_finite", bad, f"non-finite score at pixel {bad}"))
    return issues


def count_positives(mask):
    return int(np.count_nonzero(np.asarray(mask)))
