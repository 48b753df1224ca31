"""Registration quality metrics.

Per pair: inlier ratio / count of the putative correspondences under the
ground-truth pose, and rotation / translation errors of the estimated pose.
Across pairs: FMR (fraction of pairs whose inlier ratio clears a threshold),
mean IR, mean inlier number, and RR (fraction of pairs registered within
rotation and translation bounds).  A failed registration scores 180 degrees
and infinite translation error, so it can never count as registered.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np

from .depth import DepthMap
from .errors import InsufficientDataError, InvalidInputError
from .geometry import CameraIntrinsics, Pose, unproject_pixel
from .matching import CorrespondenceSet

FAILED_RE_DEG = 180.0
FAILED_TE_M = math.inf


@dataclass(frozen=True)
class MetricThresholds:
    """Inlier distance, registration bounds, and the FMR cutoff."""

    tau_c: float
    rr_rotation_deg: float
    rr_translation: float
    fmr_fraction: float = 0.05

    def __post_init__(self):
        for name in ("tau_c", "rr_rotation_deg", "rr_translation", "fmr_fraction"):
            if not (getattr(self, name) > 0.0):
                raise InvalidInputError(f"{name} must be positive")


@dataclass(frozen=True)
class PairMetrics:
    inlier_ratio: float
    inlier_count: int
    fmr_hit: bool
    rr_hit: bool
    re_deg: float
    te_m: float


@dataclass(frozen=True)
class BenchmarkMetrics:
    fmr: float
    ir: float
    inlier_number: float
    rr: float
    n_pairs: int


def pose_errors(est: Pose, gt: Pose):
    """(rotation error in degrees, translation error in meters).

    The rotation error is the geodesic angle of ``gt^T est``.  It is computed
    from both the trace and the skew part, which keeps tiny angles exact
    where the bare arccos of the trace would drown them in rounding.
    """
    rel = gt.rotation.T @ est.rotation
    c = np.clip((np.trace(rel) - 1.0) / 2.0, -1.0, 1.0)
    s = 0.5 * math.sqrt(
        (rel[2, 1] - rel[1, 2]) ** 2
        + (rel[0, 2] - rel[2, 0]) ** 2
        + (rel[1, 0] - rel[0, 1]) ** 2
    )
    re = math.degrees(math.atan2(s, c))
    te = float(np.linalg.norm(est.translation - gt.translation))
    return re, te


def correspondence_inliers(
    corrs: CorrespondenceSet,
    gt_pose: Pose,
    gt_depth: DepthMap,
    intr: CameraIntrinsics,
    tau_c: float,
) -> np.ndarray:
    """True where a correspondence is within tau_c of its ground-truth lift.

    Image pixels are lifted through the sensor ground-truth depth and carried
    into the cloud frame by the ground-truth pose; pixels without valid
    ground-truth depth can never be inliers.
    """
    if not (tau_c > 0.0):
        raise InvalidInputError("tau_c must be positive")
    n = len(corrs)
    flags = np.zeros(n, dtype=bool)
    if n == 0:
        return flags
    d = gt_depth.at(corrs.img_pixels)
    valid = d > 0.0
    if valid.any():
        lifted = unproject_pixel(
            corrs.img_pixels[valid].astype(np.float64), d[valid], intr
        )
        world = gt_pose.apply(lifted)
        flags[valid] = np.linalg.norm(world - corrs.points[valid], axis=1) <= tau_c
    return flags


def pair_metrics(
    corrs: CorrespondenceSet,
    est_pose: Pose | None,
    gt_pose: Pose,
    gt_depth: DepthMap,
    intr: CameraIntrinsics,
    thresholds: MetricThresholds,
) -> PairMetrics:
    """Score one pair; ``est_pose=None`` marks a failed registration."""
    flags = correspondence_inliers(corrs, gt_pose, gt_depth, intr, thresholds.tau_c)
    ratio = float(flags.mean()) if len(corrs) else 0.0
    count = int(flags.sum())
    if est_pose is None:
        re, te = FAILED_RE_DEG, FAILED_TE_M
    else:
        re, te = pose_errors(est_pose, gt_pose)
    return PairMetrics(
        inlier_ratio=ratio,
        inlier_count=count,
        fmr_hit=ratio > thresholds.fmr_fraction,
        rr_hit=(re <= thresholds.rr_rotation_deg) and (te <= thresholds.rr_translation),
        re_deg=re,
        te_m=te,
    )


def aggregate(pairs, thresholds: MetricThresholds) -> BenchmarkMetrics:
    """Benchmark summary over per-pair records.

    Hits are recomputed from the stored ratios and errors against the
    thresholds given here, so one set of pair records can be re-aggregated
    under different thresholds (threshold sweeps).
    """
    pairs = list(pairs)
    if not pairs:
        raise InsufficientDataError("no pairs to aggregate")
    ratios = np.array([p.inlier_ratio for p in pairs])
    counts = np.array([p.inlier_count for p in pairs], dtype=np.float64)
    res = np.array([p.re_deg for p in pairs])
    tes = np.array([p.te_m for p in pairs])
    registered = (res <= thresholds.rr_rotation_deg) & (tes <= thresholds.rr_translation)
    return BenchmarkMetrics(
        fmr=float(np.mean(ratios > thresholds.fmr_fraction)),
        ir=float(ratios.mean()),
        inlier_number=float(counts.mean()),
        rr=float(registered.mean()),
        n_pairs=len(pairs),
    )


def metrics_to_dict(m: BenchmarkMetrics, thresholds: MetricThresholds) -> dict:
    return {
        "fmr": m.fmr,
        "ir": m.ir,
        "in": m.inlier_number,
        "rr": m.rr,
        "n_pairs": m.n_pairs,
        "thresholds": asdict(thresholds),
    }


def write_pair_csv(path, names, pairs) -> None:
    """Per-pair metrics table: one row per pair, stable column order."""
    names = list(names)
    pairs = list(pairs)
    if len(names) != len(pairs):
        raise InvalidInputError("names and pair records must align")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pair", "inlier_ratio", "inlier_count", "fmr_hit", "rr_hit", "re_deg", "te_m"])
        for name, p in zip(names, pairs):
            w.writerow(
                [
                    name,
                    f"{p.inlier_ratio:.6f}",
                    p.inlier_count,
                    int(p.fmr_hit),
                    int(p.rr_hit),
                    f"{p.re_deg:.6f}",
                    "inf" if math.isinf(p.te_m) else f"{p.te_m:.6f}",
                ]
            )
