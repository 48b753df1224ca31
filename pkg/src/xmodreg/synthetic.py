"""Synthetic registration pairs with planted correspondence structure.

The generator builds a smooth depth field seen from one camera, lifts a
subset of its pixels into a cloud posed by a random rigid transform, and
plants per-cell descriptors so that ground truth is known exactly: inlier
cells share a descriptor across modalities, outlier cells share theirs with
a far-away partner cell instead.  Matching therefore pairs every keypoint,
and the fraction of correct pairs equals the planted inlier fraction, which
makes measured inlier ratios directly checkable.

The image-side depth can be distorted (multiplicative scale plus additive
Gaussian) to mimic the error profile of metric monocular depth estimators;
ground-truth depth stays exact for evaluation.  Everything is a pure
function of ``SynthSpec.rng_seed``.
"""

from __future__ import annotations

import concurrent.futures
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import PipelineConfig, default_config, override_config, write_config
from .depth import DepthMap
from .errors import InvalidInputError
from .features import FeatureLayer, FeatureMap, normalize_rows, sample_grid_keypoints
from .geometry import CameraIntrinsics, PointCloud, Pose, unproject_pixel
from .matching import CorrespondenceSet
from .metrics import BenchmarkMetrics, MetricThresholds, PairMetrics, aggregate
from .pipeline import PairInputs, register_pair

LABEL_COLUMNS = ("u", "v", "du", "dv", "inlier")


@dataclass(frozen=True)
class SynthSpec:
    """Knobs for one synthetic pair.

    ``depth_scale`` and ``depth_noise_sigma`` distort only the image-side
    depth estimate; ``descriptor_noise_sigma`` perturbs the planted dense
    descriptors per side (Gaussian, then re-normalized); ``inlier_fraction``
    controls how many keypoint cells carry a correct cross-modality match.
    By default the geometric vectors follow the same inlier/outlier plan, so
    measured inlier ratios track the planted fraction at any fusion weight;
    ``geometry_clean=True`` instead plants geometry correctly everywhere,
    the setup for studying how fusion rescues a noisy dense descriptor.
    """

    n_points: int = 4000
    scene_extent: float = 4.0
    pose_magnitude: tuple = (30.0, 1.0)
    descriptor_dim: int = 32
    inlier_fraction: float = 1.0
    descriptor_noise_sigma: float = 0.0
    depth_scale: float = 1.0
    depth_noise_sigma: float = 0.0
    geometric_dim: int = 16
    geometry_clean: bool = False
    image_height: int = 128
    image_width: int = 176
    stride: int = 16
    rng_seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.inlier_fraction <= 1.0):
            raise InvalidInputError("inlier_fraction must lie in [0, 1]")
        if self.descriptor_dim < 1 or self.geometric_dim < 1:
            raise InvalidInputError("descriptor dimensions must be >= 1")
        if not (self.scene_extent > 0.0 and self.depth_scale > 0.0):
            raise InvalidInputError("scene_extent and depth_scale must be positive")
        if self.descriptor_noise_sigma < 0.0 or self.depth_noise_sigma < 0.0:
            raise InvalidInputError("noise sigmas must be non-negative")
        rot, tr = self.pose_magnitude
        if rot < 0.0 or tr < 0.0:
            raise InvalidInputError("pose magnitudes must be non-negative")
        if self.stride < 1 or self.image_height < 1 or self.image_width < 1:
            raise InvalidInputError("image geometry must be positive")
        if self.n_points < self.cell_count:
            raise InvalidInputError(
                f"n_points must cover all {self.cell_count} keypoint cells"
            )
        if self.n_points > self.image_height * self.image_width:
            raise InvalidInputError("n_points exceeds the number of pixels")

    @property
    def grid(self):
        gh = -(-self.image_height // self.stride)
        gw = -(-self.image_width // self.stride)
        return gh, gw

    @property
    def cell_count(self) -> int:
        gh, gw = self.grid
        return gh * gw


@dataclass(frozen=True)
class PairBundle:
    """One generated pair, plus its ground truth and a matching config."""

    spec: SynthSpec
    config: PipelineConfig
    intrinsics: CameraIntrinsics
    cloud: PointCloud
    cloud_vectors: np.ndarray
    gt_pose: Pose
    img_depth: DepthMap
    gt_img_depth: DepthMap
    img_features: FeatureMap
    dep_features: FeatureMap
    img_geom_cloud: PointCloud
    img_geom_vectors: np.ndarray
    labels: np.ndarray

    def inputs(self) -> PairInputs:
        """Assemble the registration problem the way the pipeline expects it."""
        return PairInputs(
            img_features=self.img_features,
            img_intrinsics=self.intrinsics,
            dep_features=self.dep_features,
            dep_intrinsics=self.intrinsics,
            cloud=self.cloud,
            view_pose=self.gt_pose,
            img_depth=self.img_depth,
            img_geom_cloud=self.img_geom_cloud,
            img_geom_vectors=self.img_geom_vectors,
            cloud_geom_cloud=self.cloud,
            cloud_geom_vectors=self.cloud_vectors,
            gt_pose=self.gt_pose,
            gt_img_depth=self.gt_img_depth,
        )

    def planted_correspondences(self) -> CorrespondenceSet:
        """The inlier pairing itself, usable as a perfect match set."""
        rows = self.labels[self.labels[:, 4] == 1]
        d = self.gt_img_depth.at(rows[:, :2])
        cam = unproject_pixel(rows[:, :2].astype(np.float64), d, self.intrinsics)
        return CorrespondenceSet(
            rows[:, :2], rows[:, 2:4], self.gt_pose.apply(cam),
            np.zeros(rows.shape[0]),
        )


def _random_rotation(rng: np.random.Generator, max_deg: float) -> np.ndarray:
    axis = rng.normal(size=3)
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        axis, norm = np.array([0.0, 0.0, 1.0]), 1.0
    axis = axis / norm
    angle = math.radians(rng.uniform(0.0, max_deg))
    k = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def _random_pose(rng: np.random.Generator, magnitude) -> Pose:
    r = _random_rotation(rng, magnitude[0])
    direction = rng.normal(size=3)
    norm = np.linalg.norm(direction)
    if norm < 1e-12:
        direction, norm = np.array([1.0, 0.0, 0.0]), 1.0
    t = direction / norm * rng.uniform(0.0, magnitude[1])
    return Pose(r, t)


def _depth_field(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    h, w = spec.image_height, spec.image_width
    uu, vv = np.meshgrid(np.arange(w), np.arange(h))
    p1, p2, p3 = rng.uniform(0.0, 2.0 * np.pi, size=3)
    base = 0.6 * spec.scene_extent
    relief = (
        0.05 * np.sin(2 * np.pi * uu / w + p1) * np.cos(2 * np.pi * vv / h + p2)
        + 0.04 * np.sin(2 * np.pi * vv / h + p3)
    )
    return (base * (1.0 + relief)).astype(np.float32)


def _outlier_partners(spec: SynthSpec, rng: np.random.Generator):
    """Choose inlier cells and pair each outlier cell with a distant partner.

    Returns ``(partner, is_inlier)`` where ``partner[c]`` is the depth-side
    cell the image-side cell ``c`` will (wrongly) match, ``partner[c] = c``
    for inliers, and -1 when no partner could be planted.  Partners sit at
    least half the outlier list apart, so the wrong matches land far away in
    3D and never count as inliers under any sane tau_c.
    """
    n = spec.cell_count
    order = rng.permutation(n)
    n_in = int(round(spec.inlier_fraction * n))
    outliers = np.sort(order[n_in:])

    partner = np.arange(n)
    m = outliers.size
    if m == 1:
        partner[outliers[0]] = -1
    elif m > 1:
        partner[outliers] = np.roll(outliers, -(max(1, m // 2)))
    is_inlier = np.ones(n, dtype=bool)
    is_inlier[outliers] = False
    return partner, is_inlier


def _planted_pair(n: int, dim: int, partner: np.ndarray, sigma: float,
                  rng: np.random.Generator):
    """Unit vectors per cell for both sides, decoys placed at partner cells."""
    base = normalize_rows(rng.normal(size=(n, dim)))
    dep_base = base.copy()
    moved = partner != np.arange(n)
    dep_base[partner[moved & (partner >= 0)]] = base[moved & (partner >= 0)]
    orphan = np.flatnonzero(partner < 0)
    if orphan.size:
        dep_base[orphan] = normalize_rows(rng.normal(size=(orphan.size, dim)))

    def side(vectors):
        if sigma > 0.0:
            return normalize_rows(vectors + sigma * rng.normal(size=(n, dim)))
        return vectors.copy()

    return side(base), side(dep_base)


def _cell_tensor(vectors: np.ndarray, grid) -> np.ndarray:
    gh, gw = grid
    return vectors.T.reshape(vectors.shape[1], gh, gw).astype(np.float32)


def generate_pair(spec: SynthSpec, profile: str = "indoor", out_dir=None) -> PairBundle:
    """Build one synthetic pair; optionally write it as a self-describing dir."""
    rng = np.random.default_rng(spec.rng_seed)
    h, w = spec.image_height, spec.image_width
    gh, gw = spec.grid

    # a wide-angle camera keeps adjacent keypoint cells >= ~0.4 m apart in 3D,
    # comfortably beyond the indoor inlier threshold
    intr = CameraIntrinsics(
        fx=0.42 * w, fy=0.42 * w, cx=w / 2.0, cy=h / 2.0, width=w, height=h
    )
    gt_pose = _random_pose(rng, spec.pose_magnitude)
    field32 = _depth_field(spec, rng)
    gt_img_depth = DepthMap(field32)

    noisy = field32.astype(np.float64) * spec.depth_scale
    if spec.depth_noise_sigma > 0.0:
        noisy = noisy + rng.normal(0.0, spec.depth_noise_sigma, size=noisy.shape)
    img_depth = DepthMap(np.maximum(noisy, 1e-3).astype(np.float32))

    kps = sample_grid_keypoints(w, h, spec.stride)
    kp_ids = kps.pixels[:, 1] * w + kps.pixels[:, 0]
    others = np.setdiff1d(np.arange(h * w, dtype=np.int64), kp_ids)
    filler = rng.choice(others, size=spec.n_points - kp_ids.size, replace=False)
    pixel_ids = np.concatenate([kp_ids, np.sort(filler)])
    pixels = np.stack([pixel_ids % w, pixel_ids // w], axis=1)

    d_true = gt_img_depth.at(pixels)
    cam_points = unproject_pixel(pixels.astype(np.float64), d_true, intr)
    cloud = PointCloud(gt_pose.apply(cam_points))

    partner, is_inlier = _outlier_partners(spec, rng)
    img_vec, dep_vec = _planted_pair(
        spec.cell_count, spec.descriptor_dim, partner,
        spec.descriptor_noise_sigma, rng,
    )
    img_features = FeatureMap(
        (FeatureLayer(0, _cell_tensor(img_vec, (gh, gw))),), "rgb", (gh, gw)
    )
    dep_features = FeatureMap(
        (FeatureLayer(0, _cell_tensor(dep_vec, (gh, gw))),), "depth", (gh, gw)
    )

    if spec.geometry_clean:
        gvec_img = normalize_rows(
            rng.normal(size=(spec.cell_count, spec.geometric_dim))
        )
        gvec_dep = gvec_img
    else:
        gvec_img, gvec_dep = _planted_pair(
            spec.cell_count, spec.geometric_dim, partner, 0.0, rng
        )
    cell_of = (pixels[:, 1] // spec.stride) * gw + (pixels[:, 0] // spec.stride)
    cloud_vectors = gvec_dep[cell_of]
    img_geom_vectors = gvec_img[cell_of]
    d_noisy = img_depth.at(pixels)
    img_geom_cloud = PointCloud(
        unproject_pixel(pixels.astype(np.float64), d_noisy, intr)
    )

    labels = np.zeros((spec.cell_count, 5), dtype=np.int64)
    labels[:, 0:2] = kps.pixels
    for c in range(spec.cell_count):
        if is_inlier[c]:
            labels[c, 2:4] = kps.pixels[c]
            labels[c, 4] = 1
        elif partner[c] >= 0:
            labels[c, 2:4] = kps.pixels[partner[c]]
        else:
            labels[c, 2:4] = -1

    config = override_config(
        default_config(profile),
        image_height=h,
        image_width=w,
        grid_height=gh,
        grid_width=gw,
        stride=spec.stride,
        layers=(0,),
        pca_dim=spec.descriptor_dim,
    )

    bundle = PairBundle(
        spec=spec,
        config=config,
        intrinsics=intr,
        cloud=cloud,
        cloud_vectors=cloud_vectors,
        gt_pose=gt_pose,
        img_depth=img_depth,
        gt_img_depth=gt_img_depth,
        img_features=img_features,
        dep_features=dep_features,
        img_geom_cloud=img_geom_cloud,
        img_geom_vectors=img_geom_vectors,
        labels=labels,
    )
    if out_dir is not None:
        write_bundle(bundle, out_dir)
    return bundle


def write_bundle(bundle: PairBundle, out_dir) -> None:
    """Write the standard file layout consumed by the register/eval commands."""
    from . import formats

    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    formats.write_ply(root / "scene.ply", bundle.cloud)
    formats.write_frgd(root / "depth.frgd", bundle.img_depth)
    formats.write_frgd(root / "depth_gt.frgd", bundle.gt_img_depth)
    formats.write_frgf(root / "feats_rgb.frgf", bundle.img_features)
    formats.write_frgf(root / "feats_dep.frgf", bundle.dep_features)
    formats.write_frgp(root / "points_img.frgp", bundle.img_geom_cloud,
                       bundle.img_geom_vectors)
    formats.write_frgp(root / "points_cloud.frgp", bundle.cloud,
                       bundle.cloud_vectors)
    formats.write_pose_text(root / "gt_pose.txt", bundle.gt_pose)
    formats.write_pose_text(root / "view_pose.txt", bundle.gt_pose)
    formats.write_intrinsics_json(root / "k_img.json", bundle.intrinsics)
    formats.write_intrinsics_json(root / "k_dep.json", bundle.intrinsics)
    write_config(root / "config.cfg", bundle.config)
    with open(root / "labels.csv", "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LABEL_COLUMNS)
        writer.writerows(bundle.labels.tolist())


# ---------------------------------------------------------------------------
# Sweeps


@dataclass(frozen=True)
class RunVariant:
    """One pipeline configuration to sweep over."""

    solver: str = "auto"
    w: float | None = None
    iterations: int | None = None

    @property
    def label(self) -> str:
        parts = [self.solver]
        if self.w is not None:
            parts.append(f"w={self.w:g}")
        if self.iterations is not None:
            parts.append(f"iters={self.iterations}")
        return ",".join(parts)


@dataclass(frozen=True)
class SweepRow:
    seed: int
    variant: RunVariant
    solver_used: str
    success: bool
    metrics: PairMetrics


def _run_cell(spec: SynthSpec, variant: RunVariant, profile: str) -> SweepRow:
    bundle = generate_pair(spec, profile)
    overrides = {}
    if variant.w is not None:
        overrides["w"] = variant.w
    if variant.iterations is not None:
        overrides["iterations"] = variant.iterations
    cfg = override_config(bundle.config, **overrides) if overrides else bundle.config
    report = register_pair(bundle.inputs(), cfg, solver=variant.solver)
    return SweepRow(
        seed=spec.rng_seed,
        variant=variant,
        solver_used=report.result.solver_used,
        success=report.result.success,
        metrics=report.metrics,
    )


def sweep(specs, variants, profile: str = "indoor", workers: int = 1):
    """Register every spec under every variant; rows in (spec, variant) order."""
    jobs = [(spec, variant) for spec in specs for variant in variants]
    if workers > 1 and len(jobs) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda j: _run_cell(j[0], j[1], profile), jobs))
    else:
        rows = [_run_cell(spec, variant, profile) for spec, variant in jobs]
    return rows


def aggregate_sweep(rows, thresholds: MetricThresholds):
    """Group sweep rows by variant label and aggregate each group."""
    groups: dict = {}
    for row in rows:
        groups.setdefault(row.variant.label, []).append(row.metrics)
    return {
        label: aggregate(pairs, thresholds) for label, pairs in groups.items()
    }


def write_sweep_csv(path, rows) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["seed", "variant", "solver_used", "success",
             "inlier_ratio", "inlier_count", "fmr_hit", "rr_hit", "re_deg", "te_m"]
        )
        for row in rows:
            m = row.metrics
            writer.writerow(
                [row.seed, row.variant.label, row.solver_used, int(row.success),
                 f"{m.inlier_ratio:.17g}", m.inlier_count, int(m.fmr_hit),
                 int(m.rr_hit), f"{m.re_deg:.17g}", f"{m.te_m:.17g}"]
            )
