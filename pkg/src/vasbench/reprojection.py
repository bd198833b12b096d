"""Forward warping of binary masks between two posed depth frames.

Every source pixel is lifted to 3-D with its z-depth, moved into the target
camera and projected; it lands on the nearest target pixel. A landing is valid
when the source depth is within the clipping distance, the point stays in
front of the camera, lands inside the frame, its projected depth is within the
clipping distance, and it agrees with the target depth map (so points hidden
behind something else in the target view are rejected). The target pixels hit
by at least one valid landing form the validity mask; the warped mask is the
logical OR of the source labels landing there.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, GeometryMissingError
from .raster import LabelMask

MAX_DEPTH = 80.0
OCCLUSION_ABS = 0.5
OCCLUSION_REL = 0.02


def unproject(u, v, d, cam):
    """Pixel ``(u, v)`` with z-depth ``d`` to a camera-frame point."""
    return cam.unproject(u, v, d)


def project(point, cam):
    u, v, _ = cam.project(point)
    return u, v


@dataclass(frozen=True)
class WarpStats:
    clipped: int
    behind_camera: int
    out_of_frame: int
    occluded: int
    landed: int

    def to_dict(self):
        return dict(self.__dict__)


@dataclass(frozen=True)
class WarpResult:
    warped_mask: LabelMask
    valid: LabelMask
    src_valid: LabelMask
    stats: WarpStats


@dataclass(frozen=True)
class Landing:
    """Per-source-pixel landing geometry, flattened in row-major order."""

    u: np.ndarray
    v: np.ndarray
    z: np.ndarray
    col: np.ndarray
    row: np.ndarray
    clipped: np.ndarray
    behind: np.ndarray
    outside: np.ndarray


def relative_transform(src_pose, dst_pose):
    """Maps source-camera coordinates to target-camera coordinates."""
    return dst_pose.inverse().compose(src_pose)


def landings(src_depth, src_pose, dst_pose, cam, max_depth=MAX_DEPTH, dst_shape=None):
    d = np.asarray(src_depth, dtype=np.float64)
    h, w = d.shape
    dh, dw = dst_shape if dst_shape is not None else (h, w)
    vv, uu = np.mgrid[0:h, 0:w]
    d = d.ravel()
    uu = uu.ravel()
    vv = vv.ravel()
    rel = relative_transform(src_pose, dst_pose)

    x = d * (uu - cam.cx) / cam.fx
    y = d * (vv - cam.cy) / cam.fy
    r, t = rel.rotation, rel.translation
    xd = r[0, 0] * x + r[0, 1] * y + r[0, 2] * d + t[0]
    yd = r[1, 0] * x + r[1, 1] * y + r[1, 2] * d + t[1]
    zd = r[2, 0] * x + r[2, 1] * y + r[2, 2] * d + t[2]

    behind = zd <= 1e-9
    safe_z = np.where(behind, 1.0, zd)
    u = cam.fx * xd / safe_z + cam.cx
    v = cam.fy * yd / safe_z + cam.cy
    col = np.floor(u + 0.5)
    row = np.floor(v + 0.5)
    clipped = (d > max_depth) | (~behind & (zd > max_depth))
    outside = ~behind & ((col < 0) | (col >= dw) | (row < 0) | (row >= dh))
    col = np.where(behind | outside, 0, col).astype(np.int64)
    row = np.where(behind | outside, 0, row).astype(np.int64)
    return Landing(u, v, zd, col, row, clipped, behind, outside)


def warp_mask(src_mask, src_depth, src_pose, dst_depth, dst_pose, cam, max_depth=MAX_DEPTH,
              occlusion_abs=OCCLUSION_ABS, occlusion_rel=OCCLUSION_REL):
    """Forward-project ``src_mask`` into the target view.

    Returns the warped mask, the target-space validity mask and the
    source-space mask of pixels whose landing survived every test.
    """
    if src_depth is None or dst_depth is None or src_pose is None or dst_pose is None:
        raise GeometryMissingError("warping needs depth and pose for both frames")
    m = np.asarray(src_mask).astype(bool)
    sd = np.asarray(src_depth)
    dd = np.asarray(dst_depth, dtype=np.float64)
    if m.shape != sd.shape:
        raise DimensionError(f"mask {m.shape} and source depth {sd.shape} differ")
    if dd.shape != sd.shape:
        raise DimensionError(f"source depth {sd.shape} and target depth {dd.shape} differ")
    h, w = dd.shape

    L = landings(sd, src_pose, dst_pose, cam, max_depth, dd.shape)
    geom_ok = ~(L.clipped | L.behind | L.outside)
    target = np.where(geom_ok, L.row * w + L.col, 0)
    dst_z = dd.ravel()[target]
    tol = np.maximum(occlusion_abs, occlusion_rel * dst_z)
    occluded = geom_ok & (np.abs(L.z - dst_z) > tol)
    ok = geom_ok & ~occluded

    valid = np.zeros(h * w, dtype=np.uint8)
    warped = np.zeros(h * w, dtype=np.uint8)
    valid[target[ok]] = 1
    # scatter with OR semantics: only ones are written
    warped[target[ok & m.ravel()]] = 1

    stats = WarpStats(
        clipped=int(np.count_nonzero(L.clipped)),
        behind_camera=int(np.count_nonzero(L.behind & ~L.clipped)),
        out_of_frame=int(np.count_nonzero(L.outside & ~L.clipped)),
        occluded=int(np.count_nonzero(occluded)),
        landed=int(np.count_nonzero(ok)),
    )
    return WarpResult(
        warped_mask=LabelMask(warped.reshape(h, w)),
        valid=LabelMask(valid.reshape(h, w)),
        src_valid=LabelMask(ok.reshape(sd.shape).astype(np.uint8)),
        stats=stats,
    )
