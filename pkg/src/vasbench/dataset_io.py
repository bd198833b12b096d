"""On-disk formats for sequences, score maps, poses and timings.

Raster files (and the method wire protocol) share one layout::

    magic    4 bytes   b"MASK" | b"DPTH" | b"SCOR"
    width    u32 LE
    height   u32 LE
    payload  row-major; masks one byte per pixel (0 or 255), depth and
             scores IEEE-754 float32 LE

Dataset directory::

    manifest.json
    masks/%06d.mask
    depth/%06d.dpth          (optional)
    poses.txt                (optional)
    scores/<method>/%06d.scor
    timing/<method>.csv      (frame_index, inference_ms)

Frame indices on disk start at 1.
"""

import csv
import json
import math
import os
import struct
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ManifestError, MissingFrameError, PoseFormatError, RasterFormatError
from .raster import CameraModel, DepthMap, GroundTruthFrame, LabelMask, Pose, ScoreMap

SCHEMA_VERSION = 1
MAGIC = {"mask": b"MASK", "depth": b"DPTH", "score": b"SCOR"}
KIND_BY_MAGIC = {v: k for k, v in MAGIC.items()}
RASTER_TYPES = {"mask": LabelMask, "depth": DepthMap, "score": ScoreMap}
HEADER = struct.Struct("<4sII")
MAX_PIXELS = 1 << 28
POSE_TOL = 1e-5

DEFAULT_CHANNELS = {
    "mask": "masks/%06d.mask",
    "depth": "depth/%06d.dpth",
    "pose": "poses.txt",
    "score": "scores/{method}/%06d.scor",
}
TIMING_PATTERN = "timing/{method}.csv"


class PoseWarning(UserWarning):
    pass


def _kind_of(raster):
    for kind, cls in RASTER_TYPES.items():
        if isinstance(raster, cls):
            return kind
    raise TypeError(f"cannot infer raster kind of {type(raster).__name__}")


def encode_raster(raster, kind=None):
    kind = kind or _kind_of(raster)
    arr = np.asarray(raster)
    h, w = arr.shape
    if kind == "mask":
        payload = np.where(arr.astype(bool), 255, 0).astype(np.uint8).tobytes()
    else:
        payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return HEADER.pack(MAGIC[kind], w, h) + payload


def _payload_size(kind, w, h):
    if w * h > MAX_PIXELS:
        raise RasterFormatError(f"dimensions {w}x{h} exceed the {MAX_PIXELS}-pixel limit")
    return w * h * (1 if kind == "mask" else 4)


def _parse_header(header, kind):
    if len(header) < HEADER.size:
        raise RasterFormatError(f"truncated header ({len(header)} of {HEADER.size} bytes)")
    magic, w, h = HEADER.unpack(header)
    if magic not in KIND_BY_MAGIC:
        raise RasterFormatError(f"bad magic {magic!r}")
    if kind is not None and KIND_BY_MAGIC[magic] != kind:
        raise RasterFormatError(f"bad magic {magic!r}: expected {MAGIC[kind]!r} for a {kind} raster")
    kind = KIND_BY_MAGIC[magic]
    return kind, w, h, _payload_size(kind, w, h)


def _build(kind, w, h, payload):
    if kind == "mask":
        raw = np.frombuffer(payload, dtype=np.uint8).reshape(h, w)
        bad = (raw != 0) & (raw != 1) & (raw != 255)
        if bad.any():
            i = int(np.flatnonzero(bad.ravel())[0])
            raise RasterFormatError(f"mask byte {int(raw.ravel()[i])} at pixel {i} is not 0 or 255")
        return LabelMask(raw != 0)
    arr = np.frombuffer(payload, dtype="<f4").reshape(h, w).astype(np.float32)
    return RASTER_TYPES[kind](arr)


def decode_raster(data, kind=None):
    kind, w, h, size = _parse_header(data[:HEADER.size], kind)
    payload = data[HEADER.size:]
    if len(payload) < size:
        raise RasterFormatError(f"truncated payload ({len(payload)} of {size} bytes)")
    if len(payload) > size:
        raise RasterFormatError(f"{len(payload) - size} trailing bytes after payload")
    return _build(kind, w, h, payload)


def read_exact(stream, n):
    chunks = []
    while n:
        chunk = stream.read(n)
        if not chunk:
            break
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_raster_from(stream, kind=None):
    """Read one raster from a binary stream. Returns ``None`` at clean EOF."""
    header = read_exact(stream, HEADER.size)
    if not header:
        return None
    kind, w, h, size = _parse_header(header, kind)
    payload = read_exact(stream, size)
    if len(payload) < size:
        raise RasterFormatError(f"truncated payload ({len(payload)} of {size} bytes)")
    return _build(kind, w, h, payload)


def write_raster(path, raster, kind=None):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(encode_raster(raster, kind))


def read_raster(path, kind=None):
    return decode_raster(Path(path).read_bytes(), kind)


def _fmt_real(x):
    x = float(x)
    if x == 0.0:
        return "-0" if math.copysign(1.0, x) < 0 else "0"
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def format_pose_line(index, pose):
    m = pose.matrix[:3, :4].ravel()
    return " ".join([str(int(index))] + [_fmt_real(v) for v in m])


def parse_pose_line(line, lineno=None):
    where = f"line {lineno}: " if lineno is not None else ""
    parts = line.split()
    if len(parts) != 13:
        raise PoseFormatError(f"{where}expected 13 fields, got {len(parts)}")
    try:
        index = int(parts[0])
        vals = np.array([float(p) for p in parts[1:]])
    except ValueError as exc:
        raise PoseFormatError(f"{where}{exc}") from None
    if not np.all(np.isfinite(vals)):
        raise PoseFormatError(f"{where}non-finite pose value")
    pose = Pose.from_matrix(vals.reshape(3, 4))
    err = pose.orthonormality_error()
    if err > POSE_TOL:
        warnings.warn(f"{where}pose {index} rotation is not orthonormal (error {err:.3g})", PoseWarning,
                      stacklevel=3)
    return index, pose


def write_poses(path, poses, start=1):
    """``poses`` is a mapping index -> Pose or a sequence numbered from ``start``."""
    items = poses.items() if hasattr(poses, "items") else enumerate(poses, start)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as f:
        for index, pose in items:
            f.write(format_pose_line(index, pose) + "\n")


def iter_poses(path):
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if line.strip():
                yield parse_pose_line(line, lineno)


def read_poses(path):
    return dict(iter_poses(path))


@dataclass
class SequenceManifest:
    fps: float
    width: int
    height: int
    frame_count: int
    intrinsics: CameraModel
    sequence_id: str = "sequence"
    channels: dict = field(default_factory=lambda: dict(DEFAULT_CHANNELS))
    schema_version: int = SCHEMA_VERSION
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ManifestError(f"unsupported schema_version {self.schema_version}")
        if not (self.fps > 0 and math.isfinite(self.fps)):
            raise ManifestError(f"fps must be positive, got {self.fps}")
        if self.frame_count < 1:
            raise ManifestError(f"frame_count must be >= 1, got {self.frame_count}")
        if self.width < 1 or self.height < 1:
            raise ManifestError(f"bad dimensions {self.width}x{self.height}")
        if not self.intrinsics.is_valid_for(self.width, self.height):
            raise ManifestError(f"intrinsics {self.intrinsics} invalid for {self.width}x{self.height}")
        if "mask" not in self.channels:
            raise ManifestError("manifest has no mask channel")
        return self

    @property
    def dims(self):
        return self.width, self.height

    def has_channel(self, name):
        return name in self.channels

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "sequence_id": self.sequence_id,
            "fps": self.fps,
            "width": self.width,
            "height": self.height,
            "frame_count": self.frame_count,
            "intrinsics": self.intrinsics.to_dict(),
            "channels": dict(self.channels),
            "extra": self.extra,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                fps=d["fps"],
                width=int(d["width"]),
                height=int(d["height"]),
                frame_count=int(d["frame_count"]),
                intrinsics=CameraModel(**d["intrinsics"]),
                sequence_id=d.get("sequence_id", "sequence"),
                channels=dict(d["channels"]),
                schema_version=int(d.get("schema_version", SCHEMA_VERSION)),
                extra=d.get("extra", {}),
            ).validate()
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"malformed manifest: {exc!r}") from None

    @classmethod
    def from_json(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest is not valid JSON: {exc}") from None


def write_manifest(path, manifest):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(manifest.to_json())


def _manifest_path(path):
    path = Path(path)
    return path / "manifest.json" if path.is_dir() else path


def load_manifest(path):
    path = _manifest_path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ManifestError(f"no manifest at {path}") from None
    return SequenceManifest.from_json(text)


def channel_path(root, manifest, channel, index, method=None):
    pattern = manifest.channels[channel]
    if method is not None:
        pattern = pattern.replace("{method}", method)
    return Path(root) / (pattern % index)


def _read_channel(path, kind, index, channel):
    try:
        return read_raster(path, kind)
    except FileNotFoundError:
        raise MissingFrameError(index, channel, path) from None


def score_pattern(manifest, method):
    return manifest.channels.get("score", DEFAULT_CHANNELS["score"]).replace("{method}", method)


def timing_path(root, method):
    return Path(root) / TIMING_PATTERN.format(method=method)


class DatasetSequence(Sequence):
    """Random-access view of a dataset directory; frames are read on demand."""

    def __init__(self, root):
        self.root = Path(root)
        if self.root.name == "manifest.json":
            self.root = self.root.parent
        self.manifest = load_manifest(self.root)
        self._poses = None
        if "pose" in self.manifest.channels:
            pose_file = self.root / self.manifest.channels["pose"]
            if not pose_file.exists():
                raise MissingFrameError(1, "pose", pose_file)
            self._poses = read_poses(pose_file)

    def __len__(self):
        return self.manifest.frame_count

    @property
    def has_geometry(self):
        return "depth" in self.manifest.channels and self._poses is not None

    def __getitem__(self, t):
        if isinstance(t, slice):
            return [self[i] for i in range(*t.indices(len(self)))]
        if t < 0:
            t += len(self)
        if not 0 <= t < len(self):
            raise IndexError(t)
        index = t + 1
        m = self.manifest
        mask = _read_channel(channel_path(self.root, m, "mask", index), "mask", index, "mask")
        depth = pose = None
        if "depth" in m.channels:
            depth = _read_channel(channel_path(self.root, m, "depth", index), "depth", index, "depth")
        if self._poses is not None:
            if index not in self._poses:
                raise MissingFrameError(index, "pose")
            pose = self._poses[index]
        return GroundTruthFrame(index, index / m.fps, mask, depth, pose)

    def scores(self, method):
        return ScoreSequence(self.root / score_pattern(self.manifest, method), len(self))


class ScoreSequence(Sequence):
    """Lazy score maps from a ``%06d``-pattern path (or a directory of them)."""

    def __init__(self, pattern, count):
        pattern = str(pattern)
        if "%" not in pattern:
            pattern = os.path.join(pattern, "%06d.scor")
        self.pattern = pattern
        self.count = count

    def __len__(self):
        return self.count

    def path(self, t):
        return Path(self.pattern % (t + 1))

    def __getitem__(self, t):
        if isinstance(t, slice):
            return [self[i] for i in range(*t.indices(len(self)))]
        if t < 0:
            t += len(self)
        if not 0 <= t < len(self):
            raise IndexError(t)
        return _read_channel(self.path(t), "score", t + 1, "score")

    def missing(self):
        return [t + 1 for t in range(self.count) if not self.path(t).exists()]


def open_sequence(manifest_path, method=None):
    """Stream frames (or ``(frame, scores)`` pairs) in ascending index order.

    Only one frame is resident at a time; poses are read line by line.
    """
    root = _manifest_path(manifest_path).parent
    m = load_manifest(root)
    poses = None
    if "pose" in m.channels:
        pose_file = root / m.channels["pose"]
        if not pose_file.exists():
            raise MissingFrameError(1, "pose", pose_file)
        poses = iter_poses(pose_file)
    for index in range(1, m.frame_count + 1):
        mask = _read_channel(channel_path(root, m, "mask", index), "mask", index, "mask")
        depth = pose = None
        if "depth" in m.channels:
            depth = _read_channel(channel_path(root, m, "depth", index), "depth", index, "depth")
        if poses is not None:
            got = next(poses, None)
            if got is None or got[0] != index:
                raise MissingFrameError(index, "pose")
            pose = got[1]
        frame = GroundTruthFrame(index, index / m.fps, mask, depth, pose)
        if method is None:
            yield frame
        else:
            path = root / (score_pattern(m, method) % index)
            yield frame, _read_channel(path, "score", index, "score")


def write_sequence(root, frames, manifest):
    """Write frames and manifest in one streaming pass.

    The first frame decides whether depth and pose channels are written; every
    later frame must match it.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    channels = {"mask": manifest.channels.get("mask", DEFAULT_CHANNELS["mask"])}
    pose_file = None
    count = 0
    try:
        for frame in frames:
            if count == 0:
                if frame.depth is not None:
                    channels["depth"] = manifest.channels.get("depth", DEFAULT_CHANNELS["depth"])
                if frame.pose is not None:
                    channels["pose"] = manifest.channels.get("pose", DEFAULT_CHANNELS["pose"])
                    pose_file = open(root / channels["pose"], "w", newline="\n")
            if ("depth" in channels) != (frame.depth is not None) or ("pose" in channels) != (frame.pose is not None):
                raise ManifestError(f"frame {frame.index}: geometry channels differ from the first frame")
            write_raster(root / (channels["mask"] % frame.index), frame.mask, "mask")
            if frame.depth is not None:
                write_raster(root / (channels["depth"] % frame.index), frame.depth, "depth")
            if pose_file is not None:
                pose_file.write(format_pose_line(frame.index, frame.pose) + "\n")
            count += 1
    finally:
        if pose_file is not None:
            pose_file.close()
    channels["score"] = manifest.channels.get("score", DEFAULT_CHANNELS["score"])
    manifest.channels = channels
    manifest.frame_count = count
    manifest.validate()
    write_manifest(root / "manifest.json", manifest)
    return manifest


def write_scores(out_dir, scores, start=1):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, s in enumerate(scores, start):
        write_raster(out_dir / f"{i:06d}.scor", s, "score")


def write_timing(path, per_frame_ms, start=1):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["frame_index", "inference_ms"])
        for i, ms in enumerate(per_frame_ms, start):
            w.writerow([i, repr(float(ms))])


def read_timing(path, frame_count=None):
    """Per-frame milliseconds ordered by frame index; every frame 1..N must be present."""
    rows = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"frame_index", "inference_ms"} <= set(reader.fieldnames):
            raise ManifestError(f"{path}: timing CSV needs columns frame_index, inference_ms")
        for row in reader:
            try:
                rows[int(row["frame_index"])] = float(row["inference_ms"])
            except ValueError as exc:
                raise ManifestError(f"{path}: {exc}") from None
    n = frame_count if frame_count is not None else max(rows, default=0)
    for i in range(1, n + 1):
        if i not in rows:
            raise MissingFrameError(i, "timing", path)
    return [rows[i] for i in range(1, n + 1)]
