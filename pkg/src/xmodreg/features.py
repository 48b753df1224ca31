"""Descriptor construction: PCA-reduced layer tensors fused with 3D lookups.

The dense per-layer tensors (written by the feature extractor as FRGF files)
are reduced per layer with a shared PCA, upsampled to a common grid, sampled
at keypoints, concatenated and normalized.  Geometric per-point features are
attached to keypoints by nearest-3D-neighbor lookup with a distance cutoff.
The two blocks are combined by a weighted concatenation.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np
from scipy.spatial import cKDTree

from .depth import DepthMap
from .errors import ConfigurationError, InsufficientDataError, InvalidInputError
from .geometry import CameraIntrinsics, PointCloud, unproject_pixel


@dataclass(frozen=True)
class FeatureLayer:
    """One (C, H, W) float32 activation tensor with its layer id."""

    layer_id: int
    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float32)
        if d.ndim != 3 or min(d.shape) < 1:
            raise InvalidInputError(f"layer tensor must be (C, H, W), got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise InvalidInputError("layer tensor contains non-finite values")
        d = d.copy()
        d.setflags(write=False)
        object.__setattr__(self, "data", d)


@dataclass(frozen=True)
class FeatureMap:
    """A stack of layer tensors from one modality.

    ``grid`` is the (H, W) target resolution descriptors are assembled on;
    it is a pipeline parameter, not part of the on-disk container, so it may
    be None until the caller assigns it.
    """

    layers: tuple
    modality: str
    grid: tuple | None = None

    def __post_init__(self):
        if self.modality not in ("rgb", "depth"):
            raise InvalidInputError(f"unknown modality {self.modality!r}")
        layers = tuple(self.layers)
        ids = [l.layer_id for l in layers]
        if len(layers) == 0:
            raise InvalidInputError("feature map needs at least one layer")
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise InvalidInputError("layer ids must be strictly increasing")
        object.__setattr__(self, "layers", layers)
        if self.grid is not None:
            h, w = self.grid
            if h < 1 or w < 1:
                raise InvalidInputError("grid extent must be positive")
            object.__setattr__(self, "grid", (int(h), int(w)))

    def layer_ids(self):
        return [l.layer_id for l in self.layers]

    def get_layer(self, layer_id: int) -> FeatureLayer:
        for l in self.layers:
            if l.layer_id == layer_id:
                return l
        raise ConfigurationError(f"layer {layer_id} not present (have {self.layer_ids()})")

    def with_grid(self, grid) -> "FeatureMap":
        return FeatureMap(self.layers, self.modality, grid)


@dataclass(frozen=True)
class KeypointSet:
    """Integer (u, v) keypoints on an image of known extent."""

    pixels: np.ndarray
    stride: int
    width: int
    height: int

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.int64)
        if p.ndim != 2 or p.shape[1] != 2:
            raise InvalidInputError(f"keypoints must be (N, 2), got {p.shape}")
        if p.shape[0] and (
            p[:, 0].min() < 0 or p[:, 0].max() >= self.width
            or p[:, 1].min() < 0 or p[:, 1].max() >= self.height
        ):
            raise InvalidInputError("keypoint outside image bounds")
        if np.unique(p, axis=0).shape[0] != p.shape[0]:
            raise InvalidInputError("duplicate keypoints")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "pixels", p)

    def __len__(self) -> int:
        return self.pixels.shape[0]

    def take(self, index) -> "KeypointSet":
        return KeypointSet(self.pixels[index], self.stride, self.width, self.height)


@dataclass(frozen=True)
class DescriptorSet:
    """Per-keypoint descriptors, aligned 1:1 with a KeypointSet.

    ``zero_geometry_mask`` marks keypoints whose geometric feature had to be
    zeroed (invalid depth, or no 3D point within the cutoff).  ``points``
    optionally carries the 3D location each keypoint lifts to, used on the
    depth side to hand correspondences their cloud coordinates.
    """

    descriptors: np.ndarray
    keypoints: KeypointSet
    zero_geometry_mask: np.ndarray
    points: np.ndarray | None = None

    def __post_init__(self):
        d = np.asarray(self.descriptors, dtype=np.float64)
        m = np.asarray(self.zero_geometry_mask, dtype=bool)
        n = len(self.keypoints)
        if d.ndim != 2 or d.shape[0] != n or m.shape != (n,):
            raise InvalidInputError("descriptor/keypoint/mask lengths do not agree")
        if not np.all(np.isfinite(d)):
            raise InvalidInputError("descriptors contain non-finite values")
        object.__setattr__(self, "descriptors", d)
        object.__setattr__(self, "zero_geometry_mask", m)
        if self.points is not None:
            p = np.asarray(self.points, dtype=np.float64)
            if p.shape != (n, 3):
                raise InvalidInputError("points must align with keypoints")
            object.__setattr__(self, "points", p)

    def __len__(self) -> int:
        return self.descriptors.shape[0]


# ---------------------------------------------------------------------------
# PCA


@dataclass(frozen=True)
class PcaBasis:
    """Mean + principal directions of a fitting set.

    ``eigenvalues`` are scatter-matrix eigenvalues (squared singular values of
    the centered data) in descending order.  When the data rank falls short of
    the requested dimension the missing components are zero rows and
    ``rank_deficient`` is set.
    """

    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    rank_deficient: bool

    def project(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) @ self.components.T


def pca_reduce(features: np.ndarray, target_dim: int):
    """Reduce (N, D) vectors to (N, target_dim).

    Components are ordered by descending eigenvalue; each one is sign-fixed so
    its largest-magnitude entry is positive, which makes the decomposition
    deterministic.  Returns ``(reduced, basis)``.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidInputError(f"features must be (N, D), got {x.shape}")
    n, dim = x.shape
    if n < 2:
        raise InsufficientDataError("PCA needs at least two samples")
    if not (1 <= target_dim <= dim):
        raise InvalidInputError(f"target_dim must be in [1, {dim}], got {target_dim}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("features contain non-finite values")

    mean = x.mean(axis=0)
    centered = x - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    tol = max(n, dim) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))

    k = target_dim
    components = np.zeros((k, dim))
    eigenvalues = np.zeros(k)
    keep = min(rank, k)
    components[:keep] = vt[:keep]
    eigenvalues[:keep] = s[:keep] ** 2
    for row in components[:keep]:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0.0:
            row *= -1.0
    basis = PcaBasis(mean, components, eigenvalues, rank_deficient=rank < k)
    return centered @ components.T, basis


def fit_joint_pca(fm_a: FeatureMap, fm_b: FeatureMap, layer_ids, target_dim: int) -> dict:
    """Fit one PCA basis per layer on the union of both maps' spatial vectors.

    Layers whose channel count already equals ``target_dim`` need no
    reduction and are left out of the returned dict; the descriptor assembly
    uses their cell vectors verbatim.
    """
    bases = {}
    for lid in layer_ids:
        la = fm_a.get_layer(lid)
        lb = fm_b.get_layer(lid)
        if la.data.shape[0] == target_dim and lb.data.shape[0] == target_dim:
            continue
        _, basis = pca_reduce(
            np.vstack([_layer_vectors(la), _layer_vectors(lb)]), target_dim
        )
        bases[lid] = basis
    return bases


def _layer_vectors(layer: FeatureLayer) -> np.ndarray:
    c, h, w = layer.data.shape
    return layer.data.reshape(c, h * w).T.astype(np.float64)


# ---------------------------------------------------------------------------
# Resampling


def _axis_coords(target: int, source: int) -> np.ndarray:
    # half-pixel-center mapping (the align_corners=False convention)
    c = (np.arange(target, dtype=np.float64) + 0.5) * (source / target) - 0.5
    return np.clip(c, 0.0, source - 1.0)


def upsample_layer(data: np.ndarray, target) -> np.ndarray:
    """Bilinear upsampling of (C, h, w) to (C, H, W) with H >= h, W >= w."""
    d = np.asarray(data, dtype=np.float64)
    if d.ndim != 3:
        raise InvalidInputError(f"expected (C, h, w), got {d.shape}")
    th, tw = int(target[0]), int(target[1])
    _, h, w = d.shape
    if th < h or tw < w:
        raise InvalidInputError("target must be at least the source size in both axes")
    ys = _axis_coords(th, h)
    xs = _axis_coords(tw, w)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = ys - y0
    wx = xs - x0
    rows = d[:, y0, :] * (1.0 - wy)[None, :, None] + d[:, y1, :] * wy[None, :, None]
    out = rows[:, :, x0] * (1.0 - wx)[None, None, :] + rows[:, :, x1] * wx[None, None, :]
    return out


def bilinear_sample(data: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample (C, H, W) at continuous (x, y) locations, edge-clamped; returns (N, C)."""
    d = np.asarray(data, dtype=np.float64)
    _, h, w = d.shape
    x = np.clip(np.asarray(xs, dtype=np.float64), 0.0, w - 1.0)
    y = np.clip(np.asarray(ys, dtype=np.float64), 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    v00 = d[:, y0, x0]
    v01 = d[:, y0, x1]
    v10 = d[:, y1, x0]
    v11 = d[:, y1, x1]
    top = v00 * (1.0 - fx) + v01 * fx
    bot = v10 * (1.0 - fx) + v11 * fx
    return (top * (1.0 - fy) + bot * fy).T


# ---------------------------------------------------------------------------
# Keypoints and descriptor assembly


def _grid_positions(size: int, stride: int) -> np.ndarray:
    # tile centers; the last tile clamps into bounds so tiny images still get one
    n = ceil(size / stride)
    pos = np.arange(n, dtype=np.int64) * stride + stride // 2
    return np.minimum(pos, size - 1)


def sample_grid_keypoints(width: int, height: int, stride: int) -> KeypointSet:
    """Regular keypoint grid at (stride/2 + i*stride), row-major order."""
    if stride < 1:
        raise InvalidInputError("stride must be >= 1")
    if width < 1 or height < 1:
        raise InvalidInputError("image extent must be positive")
    us = _grid_positions(width, stride)
    vs = _grid_positions(height, stride)
    uu, vv = np.meshgrid(us, vs)
    pixels = np.stack([uu.ravel(), vv.ravel()], axis=1)
    return KeypointSet(pixels, stride, width, height)


def normalize_rows(x: np.ndarray) -> np.ndarray:
    """L2-normalize rows; all-zero rows are left zero."""
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    return x / safe


def assemble_diffusion_descriptors(
    fm: FeatureMap,
    kps: KeypointSet,
    pca_dim: int = 128,
    layer_ids=(0, 4, 6),
    bases: dict | None = None,
    grid: tuple | None = None,
) -> DescriptorSet:
    """PCA -> upsample -> sample -> concat -> L2 normalize, in that order.

    ``bases`` should come from :func:`fit_joint_pca` when descriptors from two
    maps are meant to live in one space; without it each layer is fit on this
    map alone.
    """
    grid = grid if grid is not None else fm.grid
    if grid is None:
        raise ConfigurationError("no target grid: set FeatureMap.grid or pass grid=")
    gh, gw = int(grid[0]), int(grid[1])
    if len(kps) == 0:
        raise InsufficientDataError("no keypoints to describe")

    gx = (kps.pixels[:, 0] + 0.5) * (gw / kps.width) - 0.5
    gy = (kps.pixels[:, 1] + 0.5) * (gh / kps.height) - 0.5

    blocks = []
    for lid in layer_ids:
        layer = fm.get_layer(lid)
        if layer.data.shape[0] == pca_dim:
            # already at the target width, nothing to reduce
            reduced = _layer_vectors(layer)
        elif bases is not None:
            if lid not in bases:
                raise ConfigurationError(f"no PCA basis supplied for layer {lid}")
            basis = bases[lid]
            reduced = basis.project(_layer_vectors(layer))
        else:
            reduced, _ = pca_reduce(_layer_vectors(layer), pca_dim)
        c, h, w = layer.data.shape
        volume = reduced.T.reshape(reduced.shape[1], h, w)
        up = upsample_layer(volume, (gh, gw))
        blocks.append(bilinear_sample(up, gx, gy))

    desc = normalize_rows(np.concatenate(blocks, axis=1))
    return DescriptorSet(desc, kps, np.zeros(len(kps), dtype=bool))


def lookup_geometric(
    kps: KeypointSet,
    depth: DepthMap,
    intr: CameraIntrinsics,
    cloud: PointCloud,
    vectors: np.ndarray,
    tau_g: float,
) -> DescriptorSet:
    """Attach per-point features to keypoints by nearest-3D lookup.

    Keypoints are lifted through their depth (camera frame); the nearest
    featured point within ``tau_g`` donates its L2-normalized vector.  Misses
    and invalid-depth keypoints get a zero vector and a set mask bit.  The
    kd-tree is an implementation detail: results equal brute-force search.
    """
    vec = np.asarray(vectors, dtype=np.float64)
    if vec.ndim != 2 or vec.shape[0] != len(cloud):
        raise InvalidInputError("per-point vectors must align with the cloud")
    if len(cloud) == 0:
        raise InsufficientDataError("no featured points to look up")
    if not (tau_g > 0.0):
        raise InvalidInputError("tau_g must be positive")

    n = len(kps)
    dim = vec.shape[1]
    desc = np.zeros((n, dim))
    mask = np.ones(n, dtype=bool)

    d = depth.at(kps.pixels)
    valid = d > 0.0
    if np.any(valid):
        lifted = unproject_pixel(kps.pixels[valid].astype(np.float64), d[valid], intr)
        dist, idx = cKDTree(cloud.points).query(lifted, k=1)
        hit = dist <= tau_g
        rows = np.flatnonzero(valid)[hit]
        fetched = normalize_rows(vec[idx[hit]])
        desc[rows] = fetched
        nonzero = np.linalg.norm(fetched, axis=1) > 0.0
        mask[rows[nonzero]] = False
    return DescriptorSet(desc, kps, mask)


def fuse(diffusion: DescriptorSet, geometric: DescriptorSet, w: float) -> DescriptorSet:
    """Weighted concatenation ``[w * F_diff, (1 - w) * F_geo]``."""
    if not (0.0 <= w <= 1.0):
        raise InvalidInputError(f"w must lie in [0, 1], got {w}")
    if len(diffusion) != len(geometric) or not np.array_equal(
        diffusion.keypoints.pixels, geometric.keypoints.pixels
    ):
        raise InvalidInputError("descriptor sets are not aligned on the same keypoints")
    fused = np.concatenate(
        [w * diffusion.descriptors, (1.0 - w) * geometric.descriptors], axis=1
    )
    points = diffusion.points if diffusion.points is not None else geometric.points
    if diffusion.points is not None and geometric.points is not None:
        if not np.array_equal(diffusion.points, geometric.points):
            raise InvalidInputError("descriptor sets disagree on keypoint 3D locations")
    return DescriptorSet(fused, diffusion.keypoints, geometric.zero_geometry_mask, points)
