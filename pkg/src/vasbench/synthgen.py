"""Procedural driving sequences with exact depth, poses and anomaly masks.

World axes match the camera at rest: x right, y down, z forward. The road is
the plane ``y = 0`` and the camera rides ``camera_height`` meters above it, so
its world y is ``-camera_height``. The ego camera drives at constant speed,
straight ahead or (with ``yaw_rate``) along a circular arc. Each frame is ray
cast analytically against the ground plane and a set of axis-aligned cuboids;
a pixel is anomalous when its first hit is a cuboid. Rays that miss
everything, or meet the ground beyond ``SKY_DEPTH``, get the finite sky depth.

Ego trajectories are deliberately simple stand-ins for simulator traffic; no
RGB is rendered.
"""

import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import ndimage

from .dataset_io import SequenceManifest
from .errors import SpecError
from .raster import SKY_DEPTH, CameraModel, DepthMap, GroundTruthFrame, LabelMask, Pose, ScoreMap

SPAWN_RANGE = (10.0, 50.0)


@dataclass(frozen=True)
class Cuboid:
    """Axis-aligned box in world coordinates, present from ``spawn_frame`` on (0-based)."""

    center: tuple
    size: tuple
    spawn_frame: int = 0

    @classmethod
    def on_ground(cls, x, z, width, height, length, spawn_frame=0):
        """Box resting on the road with its near face at world depth ``z``."""
        return cls((float(x), -height / 2.0, z + length / 2.0), (float(width), float(height), float(length)),
                   int(spawn_frame))

    @property
    def lo(self):
        return np.asarray(self.center) - np.asarray(self.size) / 2.0

    @property
    def hi(self):
        return np.asarray(self.center) + np.asarray(self.size) / 2.0


@dataclass(frozen=True)
class SceneSpec:
    fps: float = 60.0
    frame_count: int = 600
    width: int = 480
    height: int = 270
    camera_height: float = 1.5
    speed: float = 10.0
    hfov_deg: float = 90.0
    yaw_rate: float = 0.0
    spawn_range: tuple = SPAWN_RANGE
    spawn_interval_s: float = 1.5
    anomalies: Optional[tuple] = None
    rng_seed: int = 0

    def validate(self):
        if not (self.fps > 0 and math.isfinite(self.fps)):
            raise SpecError(f"fps must be positive, got {self.fps}")
        if self.frame_count < 1:
            raise SpecError(f"frame_count must be >= 1, got {self.frame_count}")
        if self.width < 2 or self.height < 2:
            raise SpecError(f"resolution {self.width}x{self.height} is too small")
        if not 0 < self.hfov_deg < 180:
            raise SpecError(f"hfov_deg must lie in (0, 180), got {self.hfov_deg}")
        if self.camera_height <= 0:
            raise SpecError("camera_height must be positive")
        lo, hi = self.spawn_range
        if not 0 < lo <= hi:
            raise SpecError(f"bad spawn range {self.spawn_range}")
        if self.anomalies is not None:
            for box in self.anomalies:
                if any(s <= 0 for s in box.size):
                    raise SpecError(f"cuboid {box} has non-positive size")
        return self

    def camera(self):
        return CameraModel.from_fov(self.width, self.height, self.hfov_deg)

    def to_dict(self):
        d = asdict(self)
        d["spawn_range"] = list(self.spawn_range)
        if self.anomalies is not None:
            d["anomalies"] = [
                {"center": list(b.center), "size": list(b.size), "spawn_frame": b.spawn_frame}
                for b in self.anomalies
            ]
        return d


def camera_pose(spec, k):
    """Camera-to-world pose at frame position ``k``."""
    s = spec.speed * k / spec.fps
    if spec.yaw_rate == 0.0:
        return Pose(np.eye(3), (0.0, -spec.camera_height, s))
    theta = spec.yaw_rate * k / spec.fps
    radius = spec.speed / spec.yaw_rate
    c, si = math.cos(theta), math.sin(theta)
    rot = np.array([[c, 0.0, si], [0.0, 1.0, 0.0], [-si, 0.0, c]])
    return Pose(rot, (radius * (1.0 - c), -spec.camera_height, radius * si))


def spawn_distance(spec, box):
    """Camera z-depth of the box's nearest corner at its spawn frame."""
    pose = camera_pose(spec, box.spawn_frame).inverse()
    lo, hi = box.lo, box.hi
    corners = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
    return float(pose.apply(corners)[:, 2].min())


def random_anomalies(spec):
    """Spawn schedule: two boxes at the start, then one every ``spawn_interval_s``."""
    rng = np.random.default_rng(spec.rng_seed)
    lo, hi = spec.spawn_range
    step = max(1, int(round(spec.spawn_interval_s * spec.fps)))
    frames = [0, 0] + list(range(step, spec.frame_count, step))
    boxes = []
    for k in frames:
        width = rng.uniform(1.5, 3.0)
        height = rng.uniform(0.8, 1.4)
        length = rng.uniform(1.0, 2.5)
        side = rng.choice([-1.0, 1.0])
        offset = side * (width / 2.0 + rng.uniform(0.6, 2.5))
        ahead = rng.uniform(lo, hi)
        pose = camera_pose(spec, k)
        # place relative to the camera, then express in world coordinates
        near = pose.apply(np.array([offset, spec.camera_height, ahead]))
        boxes.append(Cuboid.on_ground(near[0], near[2], width, height, length, k))
    return tuple(boxes)


def _ray_box(origin, dirs, lo, hi):
    """Entry ray parameter of each ray against one box (``inf`` for misses)."""
    t_near = np.full(dirs.shape[:-1], -np.inf)
    t_far = np.full(dirs.shape[:-1], np.inf)
    for a in range(3):
        d = dirs[..., a]
        o = origin[a]
        inside = lo[a] <= o <= hi[a]
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo[a] - o) / d
            t2 = (hi[a] - o) / d
        tmin = np.minimum(t1, t2)
        tmax = np.maximum(t1, t2)
        parallel = d == 0.0
        if parallel.any():
            tmin = np.where(parallel, -np.inf if inside else np.inf, tmin)
            tmax = np.where(parallel, np.inf if inside else -np.inf, tmax)
        np.maximum(t_near, tmin, out=t_near)
        np.minimum(t_far, tmax, out=t_far)
    hit = (t_near <= t_far) & (t_near > 0)
    return np.where(hit, t_near, np.inf)


def _box_window(box, pose_inv, cam, width, height):
    """Pixel rectangle (row/col slices) that can contain the box, or ``None``."""
    lo, hi = box.lo, box.hi
    corners = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
    pc = pose_inv.apply(corners)
    if np.all(pc[:, 2] <= 0):
        return None
    if np.any(pc[:, 2] <= 1e-6):
        return slice(0, height), slice(0, width)
    u, v, _ = cam.project(pc)
    c0 = max(0, int(np.floor(u.min())) - 1)
    c1 = min(width, int(np.ceil(u.max())) + 2)
    r0 = max(0, int(np.floor(v.min())) - 1)
    r1 = min(height, int(np.ceil(v.max())) + 2)
    if c0 >= c1 or r0 >= r1:
        return None
    return slice(r0, r1), slice(c0, c1)


def render(spec, k, anomalies, cam=None, rays=None):
    """Depth (float64) and mask for frame position ``k``."""
    cam = cam or spec.camera()
    pose = camera_pose(spec, k)
    if rays is None:
        rays = pixel_rays(spec.width, spec.height, cam)
    if spec.yaw_rate == 0.0:
        dirs = rays
    else:
        dirs = rays @ pose.rotation.T
    origin = pose.translation

    dy = dirs[..., 1]
    with np.errstate(divide="ignore"):
        # z component of camera-frame rays is 1, so the ray parameter is z-depth
        t_ground = np.where(dy > 0, (0.0 - origin[1]) / dy, np.inf)
    t_box = np.full(t_ground.shape, np.inf)
    pose_inv = pose.inverse()
    for box in anomalies:
        if box.spawn_frame > k:
            continue
        win = _box_window(box, pose_inv, cam, spec.width, spec.height)
        if win is None:
            continue
        np.minimum(t_box[win], _ray_box(origin, dirs[win], box.lo, box.hi), out=t_box[win])
    mask = (t_box < t_ground) & (t_box <= SKY_DEPTH)
    depth = np.minimum(t_box, t_ground)
    depth[depth > SKY_DEPTH] = SKY_DEPTH
    return depth, mask


def pixel_rays(width, height, cam):
    """Camera-frame ray directions with unit z, shape ``(height, width, 3)``."""
    v, u = np.mgrid[0:height, 0:width]
    x = (u - cam.cx) / cam.fx
    y = (v - cam.cy) / cam.fy
    return np.stack([x, y, np.ones_like(x)], axis=-1)


class SyntheticSequence(Sequence):
    """Frames of a generated scene, rendered on access.

    Rendering is a pure function of the scene parameters and frame position, so repeated
    access yields identical frames.
    """

    def __init__(self, spec, anomalies):
        self.spec = spec
        self.anomalies = anomalies
        self.camera = spec.camera()
        self._rays = pixel_rays(spec.width, spec.height, self.camera)
        self._cache = {}

    def __len__(self):
        return self.spec.frame_count

    def __getitem__(self, k):
        if isinstance(k, slice):
            return [self[i] for i in range(*k.indices(len(self)))]
        if k < 0:
            k += len(self)
        if not 0 <= k < len(self):
            raise IndexError(k)
        hit = self._cache.get(k)
        if hit is not None:
            return hit
        depth, mask = render(self.spec, k, self.anomalies, self.camera, self._rays)
        index = k + 1
        frame = GroundTruthFrame(index, index / self.spec.fps, LabelMask(mask), DepthMap(depth),
                                 camera_pose(self.spec, k))
        if len(self._cache) >= 128:
            self._cache.pop(next(iter(self._cache)))
        self._cache[k] = frame
        return frame

    @property
    def manifest(self):
        return SequenceManifest(
            fps=self.spec.fps,
            width=self.spec.width,
            height=self.spec.height,
            frame_count=self.spec.frame_count,
            intrinsics=self.camera,
            sequence_id=f"synth-{self.spec.rng_seed}",
            extra={"generator": "vasbench.synthgen", "scene": scene_dict(self.spec, self.anomalies)},
        )


def scene_dict(spec, anomalies):
    return replace(spec, anomalies=anomalies).to_dict()


def generate(spec=None, **overrides):
    """Validate ``spec`` and return its lazily rendered :class:`SyntheticSequence`."""
    spec = replace(spec or SceneSpec(), **overrides)
    spec.validate()
    anomalies = spec.anomalies if spec.anomalies is not None else random_anomalies(spec)
    lo, hi = spec.spawn_range
    for box in anomalies:
        dist = spawn_distance(spec, box)
        if not lo - 1e-9 <= dist <= hi + 1e-9:
            raise SpecError(f"cuboid spawns {dist:.2f} m ahead, outside {spec.spawn_range}")
    return SyntheticSequence(spec, tuple(anomalies))


def static_scene(**overrides):
    """Zero-speed scene with one box 20 m ahead, present in every frame."""
    base = dict(speed=0.0, frame_count=90,
                anomalies=(Cuboid.on_ground(1.0, 20.0, 2.0, 1.2, 1.5),))
    base.update(overrides)
    return generate(SceneSpec(**base))


@dataclass(frozen=True)
class ReferenceScorer:
    """Deterministic synthetic method used to exercise the metrics.

    ``kind`` is one of oracle, noisy, dilated, shifted, constant, delayed;
    ``params`` holds sigma / radius / (dx, dy) / value / k respectively.
    """

    kind: str = "oracle"
    params: tuple = ()
    rng_seed: int = 0

    KINDS = ("oracle", "noisy", "dilated", "shifted", "constant", "delayed")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise SpecError(f"unknown scorer {self.kind!r}")
        object.__setattr__(self, "params", tuple(self.params))

    @classmethod
    def parse(cls, text, rng_seed=0):
        """``"noisy:0.2"``, ``"shifted:10,0"``, ``"delayed:6"``, ``"oracle"`` ..."""
        kind, _, rest = text.partition(":")
        params = tuple(float(x) for x in rest.split(",")) if rest else ()
        return cls(kind.strip(), params, rng_seed)

    def label(self):
        if not self.params:
            return self.kind
        return f"{self.kind}:" + ",".join(f"{p:g}" for p in self.params)

    def score_frame(self, gt, t):
        kind = self.kind
        mask = gt[t].mask.values.astype(bool)
        if kind == "oracle":
            return ScoreMap(mask.astype(np.float32))
        if kind == "noisy":
            sigma = self.params[0] if self.params else 0.1
            rng = np.random.default_rng([self.rng_seed, t])
            return ScoreMap((mask + rng.normal(0.0, sigma, mask.shape)).astype(np.float32))
        if kind == "dilated":
            r = int(self.params[0]) if self.params else 1
            yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
            disk = xx * xx + yy * yy <= r * r
            return ScoreMap(ndimage.binary_dilation(mask, structure=disk).astype(np.float32))
        if kind == "shifted":
            # 1 on the translated mask, falling off with pixel distance from it, so a
            # recall-driven threshold grows the translated shape instead of flooding the frame
            dx, dy = (int(p) for p in (self.params + (0.0, 0.0))[:2])
            moved = _translate(mask, dx, dy)
            if not moved.any():
                return ScoreMap(np.zeros(mask.shape, np.float32))
            dist = ndimage.distance_transform_edt(~moved)
            return ScoreMap((1.0 / (1.0 + dist)).astype(np.float32))
        if kind == "constant":
            c = self.params[0] if self.params else 0.5
            return ScoreMap(np.full(mask.shape, c, dtype=np.float32))
        k = int(self.params[0]) if self.params else 1
        return ScoreMap(gt[max(t - k, 0)].mask.values.astype(np.float32))


def _translate(mask, dx, dy):
    out = np.zeros_like(mask)
    h, w = mask.shape
    if abs(dx) >= w or abs(dy) >= h:
        return out
    src = mask[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)]
    out[max(0, dy):max(0, dy) + src.shape[0], max(0, dx):max(0, dx) + src.shape[1]] = src
    return out


class ScoredSequence(Sequence):
    def __init__(self, scorer, gt):
        self.scorer = scorer
        self.gt = gt

    def __len__(self):
        return len(self.gt)

    def __getitem__(self, t):
        if isinstance(t, slice):
            return [self[i] for i in range(*t.indices(len(self)))]
        if t < 0:
            t += len(self)
        if not 0 <= t < len(self):
            raise IndexError(t)
        return self.scorer.score_frame(self.gt, t)


def score(scorer, gt):
    """Lazy score maps of ``scorer`` over ``gt``, one per frame."""
    return ScoredSequence(scorer, gt)
