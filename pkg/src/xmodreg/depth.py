"""Depth maps: rendering from clouds, lifting back to 3D, hole filling.

A depth map is a (H, W) float32 image of camera-frame z values in meters.
0.0 marks an invalid pixel; valid values are strictly positive and finite.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, InvalidInputError
from .geometry import CameraIntrinsics, PointCloud, Pose

MULTISCALE_RADII = (7, 5, 3)  # coarse to fine


@dataclass(frozen=True)
class DepthMap:
    """(H, W) float32 depth image, 0.0 = invalid."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float32)
        if d.ndim != 2 or d.size == 0:
            raise InvalidInputError(f"depth map must be 2-D and non-empty, got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise InvalidInputError("depth map contains non-finite values")
        if np.any(d < 0.0):
            raise InvalidInputError("negative depth; invalid pixels are encoded as 0")
        d = d.copy()
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def valid_mask(self) -> np.ndarray:
        return self.data > 0.0

    def at(self, pixels: np.ndarray) -> np.ndarray:
        """Depth values at integer (u, v) pixel coordinates, shape (N,)."""
        p = np.atleast_2d(np.asarray(pixels, dtype=np.int64))
        if np.any(p[:, 0] < 0) or np.any(p[:, 0] >= self.width) or np.any(
            p[:, 1] < 0
        ) or np.any(p[:, 1] >= self.height):
            raise InvalidInputError("pixel outside the depth map")
        return self.data[p[:, 1], p[:, 0]].astype(np.float64)


def render_depth(cloud: PointCloud, camera_pose: Pose, intr: CameraIntrinsics) -> DepthMap:
    """Z-buffer the cloud into a depth image.

    ``camera_pose`` is the pose of the camera within the cloud's frame, so
    points are brought into the camera via its inverse.  Each point lands on
    its nearest-integer pixel; the smallest depth per pixel wins.  Points
    behind the camera or outside the image are dropped silently.
    """
    cam = camera_pose.inverse().apply(cloud.points)
    z = cam[:, 2]
    front = z > 0.0
    cam = cam[front]
    z = z[front]
    u = np.rint(intr.fx * cam[:, 0] / z + intr.cx).astype(np.int64)
    v = np.rint(intr.fy * cam[:, 1] / z + intr.cy).astype(np.int64)
    ok = (u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height)
    u, v = u[ok], v[ok]
    z32 = z[ok].astype(np.float32)
    buf = np.full((intr.height, intr.width), np.inf, dtype=np.float32)
    np.minimum.at(buf, (v, u), z32)
    buf[~np.isfinite(buf)] = 0.0
    return DepthMap(buf)


def depth_to_points(depth: DepthMap, intr: CameraIntrinsics):
    """Lift every valid pixel to camera frame.

    Returns ``(points, pixels)``: (N, 3) float64 camera-frame coordinates and
    the (N, 2) integer (u, v) each came from, in row-major pixel order.
    """
    if (depth.height, depth.width) != (intr.height, intr.width):
        raise InvalidInputError("depth map extent does not match the intrinsics")
    vs, us = np.nonzero(depth.valid_mask)
    d = depth.data[vs, us].astype(np.float64)
    x = (us.astype(np.float64) - intr.cx) / intr.fx * d
    y = (vs.astype(np.float64) - intr.cy) / intr.fy * d
    pts = np.stack([x, y, d], axis=1)
    pixels = np.stack([us, vs], axis=1).astype(np.int64)
    return pts, pixels


def diamond_kernel(radius: int) -> np.ndarray:
    """Manhattan ball footprint; radius 3 gives the classic 7x7 diamond."""
    if radius < 1:
        raise InvalidInputError("kernel radius must be >= 1")
    extent = 2 * radius + 1
    di = np.abs(np.arange(extent) - radius)
    return (di[:, None] + di[None, :]) <= radius


def _dilation_fill(values: np.ndarray, mask: np.ndarray, radius: int, inv_offset: float):
    """One grayscale-dilation pass on inverted depth; fills only invalid pixels.

    Every invalid pixel with at least one valid pixel inside its diamond
    footprint takes the smallest depth among those neighbors (the largest
    inverted value), which favors the nearer surface.
    """
    foot = diamond_kernel(radius)
    inv = np.where(mask & (values < inv_offset), inv_offset - values, 0.0)
    dil = ndimage.grey_dilation(inv, footprint=foot, mode="constant", cval=0.0)
    new = (dil > 0.0) & ~mask
    if np.any(new):
        values[new] = (inv_offset - dil[new]).astype(values.dtype)
        mask[new] = True
    return new.any()


def _fill_enclosed(values: np.ndarray, mask: np.ndarray, radius: int, inv_offset: float):
    """Fill invalid regions fully surrounded by valid pixels, propagating inward."""
    holes = ndimage.binary_fill_holes(mask) & ~mask
    changed = False
    foot = diamond_kernel(radius)
    while np.any(holes):
        inv = np.where(mask, inv_offset - values, 0.0)
        dil = ndimage.grey_dilation(inv, footprint=foot, mode="constant", cval=0.0)
        new = holes & (dil > 0.0)
        if not np.any(new):  # cannot happen for enclosed regions, but stay safe
            break
        values[new] = (inv_offset - dil[new]).astype(values.dtype)
        mask[new] = True
        holes &= ~new
        changed = True
    return changed


def densify(depth: DepthMap, mode: str = "fast", radius: int = 3,
            max_scene_depth: float = 10.0) -> DepthMap:
    """Fill holes in a sparse depth map by dilation on inverted depth.

    Originally valid pixels are preserved bit-exactly; only invalid pixels
    gain values.  Every pixel within the kernel's reach of a valid pixel
    takes the smallest depth inside that footprint (the classic trick of
    inverting depth as ``max_depth + 1 - d`` so the morphology favors the
    nearer surface), then regions fully enclosed by valid pixels are closed
    by propagating their rim inward.

    ``fast`` runs a single pass at ``radius``; ``multiscale`` runs passes at
    radii 7, 5, 3 coarse to fine.  Holes wider than the total reach that
    touch the image border stay invalid: this is hole filling, not
    extrapolation.  On maps whose holes are all within reach (rendered depth
    at working resolution in practice) the output is fully dense, so a
    second application returns it unchanged.

    An all-invalid map is returned unchanged with a ``UserWarning``.
    """
    if mode == "fast":
        radii = (int(radius),)
    elif mode == "multiscale":
        radii = MULTISCALE_RADII
    else:
        raise ConfigurationError(f"unknown densify mode {mode!r}")
    if radii[0] < 1:
        raise ConfigurationError("densify radius must be >= 1")
    if not (max_scene_depth > 0.0):
        raise ConfigurationError("max_scene_depth must be positive")

    values = depth.data.astype(np.float64)
    mask = depth.valid_mask.copy()
    if not mask.any():
        warnings.warn("densify: depth map has no valid pixels, returning it unchanged")
        return depth

    inv_offset = float(max_scene_depth) + 1.0
    for r in radii:
        _dilation_fill(values, mask, r, inv_offset)
    _fill_enclosed(values, mask, radii[-1], inv_offset)

    out = values.astype(np.float32)
    out[depth.valid_mask] = depth.data[depth.valid_mask]  # bit-exact preservation
    out[~mask] = 0.0
    return DepthMap(out)
