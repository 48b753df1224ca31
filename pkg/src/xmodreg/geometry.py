"""Pinhole camera algebra and rigid transforms.

Conventions used throughout the engine:

* image pixel (u, v): u runs along width (columns), v along height (rows),
  and integer coordinates address pixel centers;
* camera frame: x right, y down, z forward, depth is the camera-frame z;
* a ``Pose`` stores the rigid map ``p_out = R @ p_in + t``.  Where a pose
  describes a camera, it maps camera-frame coordinates into the cloud
  (world) frame, i.e. it is the pose of the camera within that frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TypeAlias

import numpy as np

from .errors import BehindCameraError, InvalidInputError

Vec3: TypeAlias = np.ndarray
Mat3: TypeAlias = np.ndarray
Mat4: TypeAlias = np.ndarray
Points: TypeAlias = np.ndarray  # (N, 3) float64

# Compositions are exact enough that orthonormality drifts only a few ulp per
# multiply; re-projecting to SO(3) this often keeps the 1e-9 invariant with a
# wide margin.
_REORTHO_CHAIN = 100
_ORTHO_TOL = 1e-9


def _as_f64(a, shape=None, name: str = "array") -> np.ndarray:
    out = np.asarray(a, dtype=np.float64)
    if shape is not None and out.shape != shape:
        raise InvalidInputError(f"{name}: expected shape {shape}, got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise InvalidInputError(f"{name}: non-finite values")
    return out


def orthonormalize_rotation(m: Mat3) -> Mat3:
    """Nearest rotation in the Frobenius sense (SVD polar projection)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    r = u @ vt
    if np.linalg.det(r) < 0.0:
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics plus the image extent they were calibrated for."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0.0 and self.fy > 0.0):
            raise InvalidInputError("focal lengths must be positive")
        if not (self.width > 0 and self.height > 0):
            raise InvalidInputError("image extent must be positive")
        for v in (self.fx, self.fy, self.cx, self.cy):
            if not np.isfinite(v):
                raise InvalidInputError("intrinsics must be finite")

    @property
    def matrix(self) -> Mat3:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def scaled(self, sx: float, sy: float) -> "CameraIntrinsics":
        """Intrinsics after resizing the image by (sx, sy)."""
        return CameraIntrinsics(
            fx=self.fx * sx,
            fy=self.fy * sy,
            cx=(self.cx + 0.5) * sx - 0.5,
            cy=(self.cy + 0.5) * sy - 0.5,
            width=int(round(self.width * sx)),
            height=int(round(self.height * sy)),
        )


@dataclass(frozen=True)
class Pose:
    """Rigid transform ``p -> rotation @ p + translation``.

    The rotation is validated to be orthonormal with determinant +1 within
    1e-9 on construction.  Long composition chains are re-projected onto
    SO(3) automatically so the invariant survives arbitrary chaining.
    """

    rotation: Mat3
    translation: Vec3
    _chain: int = field(default=0, repr=False, compare=False)

    def __post_init__(self):
        r = _as_f64(self.rotation, (3, 3), "rotation")
        t = _as_f64(self.translation, (3,), "translation")
        err = np.max(np.abs(r.T @ r - np.eye(3)))
        if err >= _ORTHO_TOL or abs(np.linalg.det(r) - 1.0) >= _ORTHO_TOL:
            raise InvalidInputError(
                f"rotation is not orthonormal with det +1 (deviation {err:.3e})"
            )
        r = r.copy()
        t = t.copy()
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(m: Mat4) -> "Pose":
        m = _as_f64(m, (4, 4), "pose matrix")
        if np.max(np.abs(m[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > 1e-12:
            raise InvalidInputError("last row of a pose matrix must be 0 0 0 1")
        return Pose(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> Mat4:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "Pose") -> "Pose":
        """Apply ``other`` first: ``self.compose(other).apply(p) == self.apply(other.apply(p))``."""
        r = self.rotation @ other.rotation
        t = self.rotation @ other.translation + self.translation
        chain = self._chain + other._chain + 1
        if chain > _REORTHO_CHAIN:
            r = orthonormalize_rotation(r)
            chain = 0
        return Pose(r, t, chain)

    def __matmul__(self, other: "Pose") -> "Pose":
        return self.compose(other)

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation, self._chain)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform a (3,) point or an (N, 3) batch."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation


@dataclass(frozen=True)
class PointCloud:
    """An (N, 3) float64 point set with all coordinates finite."""

    points: Points

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3:
            raise InvalidInputError(f"point cloud must be (N, 3), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise InvalidInputError("point cloud contains non-finite coordinates")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    def __len__(self) -> int:
        return self.points.shape[0]


def unproject_pixel(pixel, depth, intr: CameraIntrinsics) -> np.ndarray:
    """Lift pixel(s) with depth(s) to camera-frame 3D.

    ``pixel`` is (2,) or (N, 2); ``depth`` a scalar or (N,).  Depth must be
    strictly positive.
    """
    p = np.asarray(pixel, dtype=np.float64)
    d = np.asarray(depth, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    d = np.atleast_1d(d)
    if p.shape[1] != 2 or d.shape[0] != p.shape[0]:
        raise InvalidInputError("pixel/depth shapes do not agree")
    if not np.all(np.isfinite(p)) or not np.all(np.isfinite(d)):
        raise InvalidInputError("non-finite pixel or depth")
    if np.any(d <= 0.0):
        raise InvalidInputError("depth must be positive to unproject")
    x = (p[:, 0] - intr.cx) / intr.fx * d
    y = (p[:, 1] - intr.cy) / intr.fy * d
    out = np.stack([x, y, d], axis=1)
    return out[0] if single else out


def project_point(point, intr: CameraIntrinsics):
    """Project camera-frame point(s) to continuous pixel coordinates.

    Returns ``(pixels, depths)``.  Raises :class:`BehindCameraError` when any
    z is not strictly positive.
    """
    q = np.asarray(point, dtype=np.float64)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    if q.shape[1] != 3:
        raise InvalidInputError(f"points must be (N, 3), got {q.shape}")
    z = q[:, 2]
    if np.any(z <= 0.0):
        raise BehindCameraError("point has non-positive depth")
    u = intr.fx * q[:, 0] / z + intr.cx
    v = intr.fy * q[:, 1] / z + intr.cy
    px = np.stack([u, v], axis=1)
    if single:
        return px[0], float(z[0])
    return px, z.copy()


def transform_points(cloud: PointCloud, pose: Pose) -> PointCloud:
    return PointCloud(pose.apply(cloud.points))


def voxel_downsample(cloud: PointCloud, voxel: float):
    """Centroid-per-cell voxel grid filter.

    Returns ``(kept, index_map)`` where ``kept`` holds one centroid per
    occupied cell and ``index_map[i]`` is the kept index that original point
    ``i`` collapsed into.  Both are invariant to the input point order (cells
    are emitted in lexicographic cell order).
    """
    if not (voxel > 0.0) or not np.isfinite(voxel):
        raise InvalidInputError("voxel size must be positive and finite")
    pts = cloud.points
    if len(cloud) == 0:
        return PointCloud(np.zeros((0, 3))), np.zeros(0, dtype=np.int64)
    cells = np.floor(pts / voxel).astype(np.int64)
    uniq, inverse = np.unique(cells, axis=0, return_inverse=True)
    inverse = inverse.astype(np.int64).ravel()
    n_cells = uniq.shape[0]
    sums = np.zeros((n_cells, 3))
    np.add.at(sums, inverse, pts)
    counts = np.bincount(inverse, minlength=n_cells).astype(np.float64)
    centroids = sums / counts[:, None]
    return PointCloud(centroids), inverse
