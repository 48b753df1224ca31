"""End-to-end image-to-cloud pair registration.

`register_pair` runs the full chain: render the cloud into a depth map at
the given viewpoint, densify it, sample grid keypoints on both modalities,
build per-keypoint descriptors (joint PCA so both sides share one space),
optionally fuse in geometric features, match by mutual nearest neighbor,
and solve for the camera pose with RANSAC.  Every stage is timed and the
whole run is a pure function of (inputs, config), including the RANSAC
stream.

The returned pose maps image-camera coordinates into the cloud frame, the
same convention the solvers use.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .config import PipelineConfig, default_config
from .depth import DepthMap, densify, render_depth
from .errors import ConfigurationError, InsufficientDataError, InvalidInputError
from .features import (
    DescriptorSet,
    FeatureMap,
    assemble_diffusion_descriptors,
    fit_joint_pca,
    fuse,
    lookup_geometric,
    sample_grid_keypoints,
)
from .geometry import (
    CameraIntrinsics,
    PointCloud,
    Pose,
    transform_points,
    unproject_pixel,
)
from .matching import CorrespondenceSet, mutual_nn_match
from .metrics import PairMetrics, pair_metrics
from .solvers import RegistrationResult, ransac


@dataclass(frozen=True)
class StageTiming:
    """Wall time and summary counters for one pipeline stage."""

    name: str
    ms: float
    counters: dict


@dataclass(frozen=True)
class PairInputs:
    """One registration problem, fully in memory.

    ``view_pose`` is the camera pose (camera frame -> cloud frame) at which
    the cloud is rendered for the depth modality.  ``img_depth`` is the
    image's metric depth estimate; it enables the Kabsch path and image-side
    geometric lookup.  The two featured point sets are optional: the image
    side's lives in the image camera frame (lifted from its depth estimate),
    the cloud side's in the cloud frame (typically a voxel-downsampled subset
    of ``cloud``).  Without them, matching runs on the dense descriptors
    alone.
    """

    img_features: FeatureMap
    img_intrinsics: CameraIntrinsics
    dep_features: FeatureMap
    dep_intrinsics: CameraIntrinsics
    cloud: PointCloud
    view_pose: Pose = field(default_factory=Pose.identity)
    img_depth: DepthMap | None = None
    dep_depth: DepthMap | None = None
    img_geom_cloud: PointCloud | None = None
    img_geom_vectors: np.ndarray | None = None
    cloud_geom_cloud: PointCloud | None = None
    cloud_geom_vectors: np.ndarray | None = None
    gt_pose: Pose | None = None
    gt_img_depth: DepthMap | None = None

    def __post_init__(self):
        if (self.img_geom_cloud is None) != (self.img_geom_vectors is None):
            raise InvalidInputError(
                "image-side geometry needs both the lifted cloud and its vectors"
            )
        if (self.cloud_geom_cloud is None) != (self.cloud_geom_vectors is None):
            raise InvalidInputError(
                "cloud-side geometry needs both the featured points and their vectors"
            )

    @property
    def has_geometry(self) -> bool:
        return self.img_geom_cloud is not None and self.cloud_geom_cloud is not None


@dataclass(frozen=True)
class MatchOutput:
    correspondences: CorrespondenceSet
    rendered_depth: DepthMap
    densified_depth: DepthMap
    img_descriptors: DescriptorSet
    dep_descriptors: DescriptorSet
    used_geometry: bool
    timings: tuple


@dataclass(frozen=True)
class RegistrationReport:
    result: RegistrationResult
    correspondences: CorrespondenceSet
    metrics: PairMetrics | None
    timings: tuple
    used_geometry: bool


def _grid_for(fm: FeatureMap, intr: CameraIntrinsics, stride: int):
    if fm.grid is not None:
        return fm.grid
    return (-(-intr.height // stride), -(-intr.width // stride))


class _Clock:
    def __init__(self):
        self.timings = []
        self._t = time.perf_counter()

    def lap(self, name: str, **counters) -> None:
        now = time.perf_counter()
        self.timings.append(StageTiming(name, (now - self._t) * 1e3, counters))
        self._t = now


def match_pair(inputs: PairInputs, config: PipelineConfig | None = None) -> MatchOutput:
    """Produce putative pixel-to-point correspondences for one pair."""
    cfg = config if config is not None else default_config()
    clock = _Clock()

    rendered = inputs.dep_depth
    if rendered is None:
        rendered = render_depth(inputs.cloud, inputs.view_pose, inputs.dep_intrinsics)
    clock.lap(
        "render",
        points=len(inputs.cloud),
        valid_px=int(rendered.valid_mask.sum()),
    )

    dense = densify(
        rendered,
        mode=cfg.densify_mode,
        radius=cfg.densify_radius,
        max_scene_depth=cfg.max_scene_depth,
    )
    clock.lap("densify", valid_px=int(dense.valid_mask.sum()))

    kps_img = sample_grid_keypoints(
        inputs.img_intrinsics.width, inputs.img_intrinsics.height, cfg.stride
    )
    kps_dep_full = sample_grid_keypoints(
        inputs.dep_intrinsics.width, inputs.dep_intrinsics.height, cfg.stride
    )
    # depth-side keypoints without depth have neither geometry nor meaningful
    # rendering underneath them; drop them before describing
    kept = np.flatnonzero(dense.at(kps_dep_full.pixels) > 0.0)
    if kept.size == 0:
        raise InsufficientDataError("every depth-side keypoint lies on invalid depth")
    kps_dep = kps_dep_full.take(kept)
    clock.lap("keypoints", image=len(kps_img), depth=len(kps_dep))

    bases = fit_joint_pca(
        inputs.img_features, inputs.dep_features, cfg.layers, cfg.pca_dim
    )
    img_set = assemble_diffusion_descriptors(
        inputs.img_features,
        kps_img,
        pca_dim=cfg.pca_dim,
        layer_ids=cfg.layers,
        bases=bases,
        grid=_grid_for(inputs.img_features, inputs.img_intrinsics, cfg.stride),
    )
    dep_set = assemble_diffusion_descriptors(
        inputs.dep_features,
        kps_dep,
        pca_dim=cfg.pca_dim,
        layer_ids=cfg.layers,
        bases=bases,
        grid=_grid_for(inputs.dep_features, inputs.dep_intrinsics, cfg.stride),
    )
    clock.lap("descriptors", dim=img_set.descriptors.shape[1])

    if (inputs.img_geom_cloud is None) != (inputs.cloud_geom_cloud is None):
        raise ConfigurationError(
            "geometry supplied for one side only; provide both or neither"
        )
    if cfg.w == 0.0 and not inputs.has_geometry:
        raise ConfigurationError(
            "w=0 requests geometry-only matching but no per-point vectors were given"
        )

    used_geometry = False
    # at w=1 the geometric block would be scaled to zero; skipping it entirely
    # leaves every descriptor distance unchanged
    if cfg.w < 1.0 and inputs.has_geometry:
        if inputs.img_depth is None:
            raise ConfigurationError(
                "geometric fusion needs img_depth to lift image keypoints"
            )
        featured_cam = transform_points(
            inputs.cloud_geom_cloud, inputs.view_pose.inverse()
        )
        geo_dep = lookup_geometric(
            kps_dep, dense, inputs.dep_intrinsics, featured_cam,
            inputs.cloud_geom_vectors, cfg.tau_g,
        )
        geo_img = lookup_geometric(
            kps_img, inputs.img_depth, inputs.img_intrinsics,
            inputs.img_geom_cloud, inputs.img_geom_vectors, cfg.tau_g,
        )
        img_set = fuse(img_set, geo_img, cfg.w)
        dep_set = fuse(dep_set, geo_dep, cfg.w)
        used_geometry = True
        clock.lap(
            "geometric",
            zero_img=int(geo_img.zero_geometry_mask.sum()),
            zero_dep=int(geo_dep.zero_geometry_mask.sum()),
        )

    d = dense.at(kps_dep.pixels)
    cam = unproject_pixel(kps_dep.pixels.astype(np.float64), d, inputs.dep_intrinsics)
    dep_set = replace(dep_set, points=inputs.view_pose.apply(cam))

    corrs = mutual_nn_match(img_set, dep_set)
    clock.lap("match", matches=len(corrs))

    return MatchOutput(
        correspondences=corrs,
        rendered_depth=rendered,
        densified_depth=dense,
        img_descriptors=img_set,
        dep_descriptors=dep_set,
        used_geometry=used_geometry,
        timings=tuple(clock.timings),
    )


def solve_pair(
    corrs: CorrespondenceSet,
    config: PipelineConfig,
    intr: CameraIntrinsics,
    img_depth: DepthMap | None = None,
    solver: str = "auto",
    workers: int = 1,
) -> RegistrationResult:
    """RANSAC over matched correspondences.

    ``auto`` picks Kabsch when a metric image depth is available (3D-3D
    residuals tolerate feature noise better) and PnP otherwise.
    """
    if solver not in ("auto", "kabsch", "pnp"):
        raise ConfigurationError(f"unknown solver {solver!r}")
    kind = solver
    if kind == "auto":
        kind = "kabsch" if img_depth is not None else "pnp"
    return ransac(
        corrs,
        config.solver_config(kind),
        kind,
        intr=intr,
        image_depth=img_depth,
        workers=workers,
    )


def register_pair(
    inputs: PairInputs,
    config: PipelineConfig | None = None,
    solver: str = "auto",
    workers: int = 1,
) -> RegistrationReport:
    """Match one pair and estimate the camera pose in the cloud frame."""
    cfg = config if config is not None else default_config()
    mo = match_pair(inputs, cfg)

    clock = _Clock()
    result = solve_pair(
        mo.correspondences,
        cfg,
        inputs.img_intrinsics,
        img_depth=inputs.img_depth,
        solver=solver,
        workers=workers,
    )
    clock.lap(
        "solve",
        solver=result.solver_used,
        inliers=result.inlier_count,
        total=len(mo.correspondences),
        success=result.success,
    )

    metrics = None
    if inputs.gt_pose is not None and inputs.gt_img_depth is not None:
        metrics = pair_metrics(
            mo.correspondences,
            result.pose if result.success else None,
            inputs.gt_pose,
            inputs.gt_img_depth,
            inputs.img_intrinsics,
            cfg.thresholds(),
        )
        clock.lap("metrics", ir=metrics.inlier_ratio, rr_hit=metrics.rr_hit)

    return RegistrationReport(
        result=result,
        correspondences=mo.correspondences,
        metrics=metrics,
        timings=mo.timings + tuple(clock.timings),
        used_geometry=mo.used_geometry,
    )
