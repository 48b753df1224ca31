"""Cross-modality registration of camera images against 3D point clouds.

The package aligns an RGB image to a point cloud by matching dense
per-pixel features against per-point features, then recovering a rigid
camera pose with a RANSAC loop around either a 3D-3D (Kabsch) or a 2D-3D
(perspective-n-point) minimal solver.  Feature extraction itself lives in a
separate tool; this package consumes its output files.
"""

from .config import (
    ENV_PROFILE,
    PROFILES,
    PipelineConfig,
    default_config,
    override_config,
    parse_config_text,
    read_config,
    write_config,
)
from .depth import DepthMap, densify, depth_to_points, diamond_kernel, render_depth
from .errors import (
    BehindCameraError,
    ConfigurationError,
    DegenerateInputError,
    FormatError,
    InsufficientDataError,
    InvalidInputError,
    NonConvergenceError,
    XmodregError,
)
from .features import (
    DescriptorSet,
    FeatureLayer,
    FeatureMap,
    KeypointSet,
    PcaBasis,
    assemble_diffusion_descriptors,
    bilinear_sample,
    fit_joint_pca,
    fuse,
    lookup_geometric,
    normalize_rows,
    pca_reduce,
    sample_grid_keypoints,
    upsample_layer,
)
from .formats import (
    CORR_HEADER,
    read_correspondences,
    read_depth_png,
    read_frgd,
    read_frgf,
    read_frgp,
    read_intrinsics_json,
    read_ply,
    read_pose_text,
    write_correspondences,
    write_depth_png,
    write_frgd,
    write_frgf,
    write_frgp,
    write_intrinsics_json,
    write_ply,
    write_pose_text,
)
from .geometry import (
    CameraIntrinsics,
    PointCloud,
    Pose,
    orthonormalize_rotation,
    project_point,
    transform_points,
    unproject_pixel,
    voxel_downsample,
)
from .matching import CorrespondenceSet, mutual_nn_match
from .metrics import (
    FAILED_RE_DEG,
    FAILED_TE_M,
    BenchmarkMetrics,
    MetricThresholds,
    PairMetrics,
    aggregate,
    correspondence_inliers,
    metrics_to_dict,
    pair_metrics,
    pose_errors,
    write_pair_csv,
)
from .pipeline import (
    MatchOutput,
    PairInputs,
    RegistrationReport,
    StageTiming,
    match_pair,
    register_pair,
    solve_pair,
)
from .solvers import (
    PnPResult,
    RegistrationResult,
    SolverConfig,
    kabsch_closed_form,
    pnp_minimal,
    ransac,
)
from .synthetic import (
    LABEL_COLUMNS,
    PairBundle,
    RunVariant,
    SweepRow,
    SynthSpec,
    aggregate_sweep,
    generate_pair,
    sweep,
    write_bundle,
    write_sweep_csv,
)

__version__ = "0.1.0"

__all__ = [
    "ENV_PROFILE",
    "PROFILES",
    "PipelineConfig",
    "default_config",
    "override_config",
    "parse_config_text",
    "read_config",
    "write_config",
    "DepthMap",
    "densify",
    "depth_to_points",
    "diamond_kernel",
    "render_depth",
    "XmodregError",
    "InvalidInputError",
    "BehindCameraError",
    "DegenerateInputError",
    "InsufficientDataError",
    "NonConvergenceError",
    "ConfigurationError",
    "FormatError",
    "DescriptorSet",
    "FeatureLayer",
    "FeatureMap",
    "KeypointSet",
    "PcaBasis",
    "assemble_diffusion_descriptors",
    "bilinear_sample",
    "fit_joint_pca",
    "fuse",
    "lookup_geometric",
    "normalize_rows",
    "pca_reduce",
    "sample_grid_keypoints",
    "upsample_layer",
    "CORR_HEADER",
    "read_correspondences",
    "read_depth_png",
    "read_frgd",
    "read_frgf",
    "read_frgp",
    "read_intrinsics_json",
    "read_ply",
    "read_pose_text",
    "write_correspondences",
    "write_depth_png",
    "write_frgd",
    "write_frgf",
    "write_frgp",
    "write_intrinsics_json",
    "write_ply",
    "write_pose_text",
    "CameraIntrinsics",
    "PointCloud",
    "Pose",
    "orthonormalize_rotation",
    "project_point",
    "transform_points",
    "unproject_pixel",
    "voxel_downsample",
    "CorrespondenceSet",
    "mutual_nn_match",
    "FAILED_RE_DEG",
    "FAILED_TE_M",
    "BenchmarkMetrics",
    "MetricThresholds",
    "PairMetrics",
    "aggregate",
    "correspondence_inliers",
    "metrics_to_dict",
    "pair_metrics",
    "pose_errors",
    "write_pair_csv",
    "MatchOutput",
    "PairInputs",
    "RegistrationReport",
    "StageTiming",
    "match_pair",
    "register_pair",
    "solve_pair",
    "PnPResult",
    "RegistrationResult",
    "SolverConfig",
    "kabsch_closed_form",
    "pnp_minimal",
    "ransac",
    "LABEL_COLUMNS",
    "PairBundle",
    "RunVariant",
    "SweepRow",
    "SynthSpec",
    "aggregate_sweep",
    "generate_pair",
    "sweep",
    "write_bundle",
    "write_sweep_csv",
    "__version__",
]
