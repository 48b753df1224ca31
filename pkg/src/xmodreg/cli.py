"""Command-line front end.

Subcommands cover the full workflow: `synth` generates benchmark pairs,
`match` and `solve` run single stages, `register` runs them end to end,
`eval` aggregates metrics over finished runs, and `sweep` fans a synthetic
study over parameter variants.  Structured logs go to stderr as JSON lines;
the one-line machine-readable result of `register`/`solve` goes to stdout.

Exit codes: 0 on success, 2 for input or configuration problems, 3 when
registration itself fails (too few matches, degenerate geometry, or not
enough inliers).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import formats
from .config import (
    ENV_PROFILE,
    PROFILES,
    PipelineConfig,
    default_config,
    override_config,
    read_config,
)
from .errors import (
    ConfigurationError,
    DegenerateInputError,
    FormatError,
    InsufficientDataError,
    InvalidInputError,
    NonConvergenceError,
    XmodregError,
)
from .geometry import Pose
from .metrics import aggregate, metrics_to_dict, pair_metrics, write_pair_csv
from .pipeline import PairInputs, match_pair, solve_pair
from .synthetic import (
    RunVariant,
    SynthSpec,
    aggregate_sweep,
    generate_pair,
    sweep,
    write_sweep_csv,
)

_INPUT_ERRORS = (FormatError, InvalidInputError, ConfigurationError, OSError)
_SOLVE_ERRORS = (DegenerateInputError, InsufficientDataError, NonConvergenceError)


def _log(event: str, **fields) -> None:
    print(json.dumps({"event": event, **fields}, sort_keys=True), file=sys.stderr)


def _parse_seed(text: str):
    if text == "auto":
        return None
    try:
        return int(text)
    except ValueError:
        raise ConfigurationError(f"seed must be an integer or 'auto', got {text!r}")


def _parse_image_size(text: str):
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise ConfigurationError(f"image size must look like 512x704, got {text!r}")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--config", help="config file (key=value; includes profile)")
    g.add_argument("--profile", choices=sorted(PROFILES),
                   help=f"scene profile (default: ${ENV_PROFILE} or indoor)")
    p.add_argument("--w", type=float, help="fusion weight override")
    p.add_argument("--seed", help="RANSAC seed (integer or 'auto')")
    p.add_argument("--iters", type=int, help="RANSAC iteration count override")


def _add_pair_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pair", help="directory in the synth layout; fills defaults "
                                  "for all other inputs")
    p.add_argument("--rgb-feats", help="image-side FRGF feature file")
    p.add_argument("--dep-feats", help="depth-side FRGF feature file")
    p.add_argument("--cloud", help="scene point cloud (PLY)")
    p.add_argument("--k-img", help="image camera intrinsics (JSON)")
    p.add_argument("--k-dep", help="depth camera intrinsics (JSON)")
    p.add_argument("--view-pose", help="depth render viewpoint pose file "
                                       "(default: identity)")
    p.add_argument("--img-depth", help="image-side metric depth (FRGD); enables "
                                       "Kabsch and geometric fusion")
    p.add_argument("--dep-depth", help="precomputed rendered depth (FRGD); "
                                       "skips rendering")
    p.add_argument("--img-points", help="image-side featured points (FRGP)")
    p.add_argument("--cloud-points", help="cloud-side featured points (FRGP)")
    p.add_argument("--gt-pose", help="ground-truth pose file (adds metrics)")
    p.add_argument("--gt-img-depth", help="ground-truth image depth (FRGD)")


_PAIR_DEFAULTS = {
    "rgb_feats": "feats_rgb.frgf",
    "dep_feats": "feats_dep.frgf",
    "cloud": "scene.ply",
    "k_img": "k_img.json",
    "k_dep": "k_dep.json",
    "view_pose": "view_pose.txt",
    "img_depth": "depth.frgd",
    "img_points": "points_img.frgp",
    "cloud_points": "points_cloud.frgp",
    "gt_pose": "gt_pose.txt",
    "gt_img_depth": "depth_gt.frgd",
}


def _fill_pair_defaults(args) -> None:
    if not args.pair:
        return
    root = Path(args.pair)
    for attr, name in _PAIR_DEFAULTS.items():
        if getattr(args, attr) is None and (root / name).exists():
            setattr(args, attr, str(root / name))
    if args.config is None and args.profile is None and (root / "config.cfg").exists():
        args.config = str(root / "config.cfg")


def _resolve_config(args) -> PipelineConfig:
    if getattr(args, "config", None):
        cfg = read_config(args.config)
    else:
        profile = getattr(args, "profile", None) or os.environ.get(ENV_PROFILE)
        cfg = default_config(profile or "indoor")
    overrides = {}
    if getattr(args, "w", None) is not None:
        overrides["w"] = args.w
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = _parse_seed(args.seed)
    if getattr(args, "iters", None) is not None:
        overrides["iterations"] = args.iters
    return override_config(cfg, **overrides) if overrides else cfg


def _load_inputs(args) -> PairInputs:
    required = ("rgb_feats", "dep_feats", "cloud", "k_img", "k_dep")
    missing = [r for r in required if getattr(args, r) is None]
    if missing:
        flags = ", ".join("--" + m.replace("_", "-") for m in missing)
        raise ConfigurationError(f"missing required inputs: {flags}")

    img_geom = formats.read_frgp(args.img_points) if args.img_points else (None, None)
    cloud_geom = (
        formats.read_frgp(args.cloud_points) if args.cloud_points else (None, None)
    )
    return PairInputs(
        img_features=formats.read_frgf(args.rgb_feats),
        img_intrinsics=formats.read_intrinsics_json(args.k_img),
        dep_features=formats.read_frgf(args.dep_feats),
        dep_intrinsics=formats.read_intrinsics_json(args.k_dep),
        cloud=formats.read_ply(args.cloud),
        view_pose=(
            formats.read_pose_text(args.view_pose)
            if args.view_pose else Pose.identity()
        ),
        img_depth=formats.read_frgd(args.img_depth) if args.img_depth else None,
        dep_depth=formats.read_frgd(args.dep_depth) if args.dep_depth else None,
        img_geom_cloud=img_geom[0],
        img_geom_vectors=img_geom[1],
        cloud_geom_cloud=cloud_geom[0],
        cloud_geom_vectors=cloud_geom[1],
        gt_pose=formats.read_pose_text(args.gt_pose) if args.gt_pose else None,
        gt_img_depth=(
            formats.read_frgd(args.gt_img_depth) if args.gt_img_depth else None
        ),
    )


def _emit_timings(timings) -> None:
    for t in timings:
        _log("stage", stage=t.name, ms=round(t.ms, 3), **t.counters)


def _write_report(out: Path, payload: dict) -> None:
    with open(out / "report.json", "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _metrics_payload(metrics):
    if metrics is None:
        return None
    return {
        "inlier_ratio": metrics.inlier_ratio,
        "inlier_count": metrics.inlier_count,
        "fmr_hit": metrics.fmr_hit,
        "rr_hit": metrics.rr_hit,
        "re_deg": metrics.re_deg,
        "te_m": metrics.te_m,
    }


# ---------------------------------------------------------------------------
# subcommands


def _cmd_register(args) -> int:
    try:
        _fill_pair_defaults(args)
        cfg = _resolve_config(args)
        inputs = _load_inputs(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    except _INPUT_ERRORS as exc:
        _log("error", stage="load", error=type(exc).__name__, message=str(exc))
        return 2

    # run the match stage first and persist its output, so a failed solve
    # still leaves the correspondences on disk and `register` is literally
    # the composition of `match` and `solve`
    try:
        mo = match_pair(inputs, cfg)
    except _SOLVE_ERRORS as exc:
        _log("error", stage="match", error=type(exc).__name__, message=str(exc))
        return 3
    except _INPUT_ERRORS as exc:
        _log("error", stage="match", error=type(exc).__name__, message=str(exc))
        return 2
    _emit_timings(mo.timings)
    formats.write_correspondences(out / "corr.txt", mo.correspondences)

    t0 = time.perf_counter()
    try:
        result = solve_pair(mo.correspondences, cfg, inputs.img_intrinsics,
                            img_depth=inputs.img_depth, solver=args.solver,
                            workers=args.workers)
    except _SOLVE_ERRORS as exc:
        _log("error", stage="solve", error=type(exc).__name__, message=str(exc))
        _write_report(out, {
            "success": False,
            "error": type(exc).__name__,
            "total": len(mo.correspondences),
            "used_geometry": mo.used_geometry,
        })
        return 3
    except _INPUT_ERRORS as exc:
        _log("error", stage="solve", error=type(exc).__name__, message=str(exc))
        return 2
    solve_ms = (time.perf_counter() - t0) * 1e3
    _log("stage", stage="solve", ms=round(solve_ms, 3),
         solver=result.solver_used, inliers=result.inlier_count,
         success=result.success)

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

    if result.success:
        formats.write_pose_text(out / "pose.txt", result.pose)
    _write_report(out, {
        "success": result.success,
        "solver": result.solver_used,
        "inliers": result.inlier_count,
        "total": len(mo.correspondences),
        "seed": result.seed,
        "used_geometry": mo.used_geometry,
        "metrics": _metrics_payload(metrics),
        "timings": [
            {"stage": t.name, "ms": t.ms, **t.counters} for t in mo.timings
        ] + [{"stage": "solve", "ms": solve_ms}],
    })
    print(json.dumps({
        "solver": result.solver_used,
        "inliers": result.inlier_count,
        "total": len(mo.correspondences),
        "success": result.success,
        "seed": result.seed,
    }, sort_keys=True))
    return 0 if result.success else 3


def _cmd_match(args) -> int:
    try:
        _fill_pair_defaults(args)
        cfg = _resolve_config(args)
        inputs = _load_inputs(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    except _INPUT_ERRORS as exc:
        _log("error", stage="load", error=type(exc).__name__, message=str(exc))
        return 2

    try:
        mo = match_pair(inputs, cfg)
    except _SOLVE_ERRORS as exc:
        _log("error", stage="match", error=type(exc).__name__, message=str(exc))
        return 3
    except _INPUT_ERRORS as exc:
        _log("error", stage="match", error=type(exc).__name__, message=str(exc))
        return 2

    _emit_timings(mo.timings)
    formats.write_correspondences(out / "corr.txt", mo.correspondences)
    _write_report(out, {
        "matches": len(mo.correspondences),
        "used_geometry": mo.used_geometry,
        "timings": [
            {"stage": t.name, "ms": t.ms, **t.counters} for t in mo.timings
        ],
    })
    return 0


def _cmd_solve(args) -> int:
    try:
        cfg = _resolve_config(args)
        corrs = formats.read_correspondences(args.corr)
        intr = formats.read_intrinsics_json(args.k_img)
        img_depth = formats.read_frgd(args.img_depth) if args.img_depth else None
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    except _INPUT_ERRORS as exc:
        _log("error", stage="load", error=type(exc).__name__, message=str(exc))
        return 2

    try:
        result = solve_pair(corrs, cfg, intr, img_depth=img_depth,
                            solver=args.solver, workers=args.workers)
    except _SOLVE_ERRORS as exc:
        _log("error", stage="solve", error=type(exc).__name__, message=str(exc))
        return 3
    except _INPUT_ERRORS as exc:
        _log("error", stage="solve", error=type(exc).__name__, message=str(exc))
        return 2

    if result.success:
        formats.write_pose_text(out / "pose.txt", result.pose)
    _write_report(out, {
        "success": result.success,
        "solver": result.solver_used,
        "inliers": result.inlier_count,
        "total": len(corrs),
        "seed": result.seed,
    })
    print(json.dumps({
        "solver": result.solver_used,
        "inliers": result.inlier_count,
        "total": len(corrs),
        "success": result.success,
        "seed": result.seed,
    }, sort_keys=True))
    return 0 if result.success else 3


def _spec_from_args(args, seed: int) -> SynthSpec:
    h, w = _parse_image_size(args.image)
    return SynthSpec(
        n_points=args.n_points,
        scene_extent=args.extent,
        pose_magnitude=(args.max_rotation, args.max_translation),
        descriptor_dim=args.dim,
        inlier_fraction=args.inlier_fraction,
        descriptor_noise_sigma=args.noise_sigma,
        depth_scale=args.depth_scale,
        depth_noise_sigma=args.depth_noise,
        geometric_dim=args.geometric_dim,
        geometry_clean=args.geometry_clean,
        image_height=h,
        image_width=w,
        stride=args.stride,
        rng_seed=seed,
    )


def _add_spec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-points", type=int, default=4000)
    p.add_argument("--extent", type=float, default=4.0, help="scene depth scale (m)")
    p.add_argument("--max-rotation", type=float, default=30.0, help="degrees")
    p.add_argument("--max-translation", type=float, default=1.0, help="meters")
    p.add_argument("--dim", type=int, default=32, help="descriptor dimension")
    p.add_argument("--geometric-dim", type=int, default=16)
    p.add_argument("--geometry-clean", action="store_true",
                   help="plant geometric vectors without outliers")
    p.add_argument("--inlier-fraction", type=float, default=1.0)
    p.add_argument("--noise-sigma", type=float, default=0.0,
                   help="descriptor noise before re-normalization")
    p.add_argument("--depth-scale", type=float, default=1.0,
                   help="multiplicative image-depth distortion")
    p.add_argument("--depth-noise", type=float, default=0.0,
                   help="additive image-depth noise sigma (m)")
    p.add_argument("--image", default="128x176", help="image size HxW")
    p.add_argument("--stride", type=int, default=16)


def _cmd_synth(args) -> int:
    try:
        profile = args.profile or os.environ.get(ENV_PROFILE) or "indoor"
        out = Path(args.out)
        for i in range(args.count):
            seed = args.seed + i
            spec = _spec_from_args(args, seed)
            pair_dir = out if args.count == 1 else out / f"pair_{i:04d}"
            generate_pair(spec, profile=profile, out_dir=pair_dir)
            _log("pair", seed=seed, dir=str(pair_dir))
    except _INPUT_ERRORS as exc:
        _log("error", stage="synth", error=type(exc).__name__, message=str(exc))
        return 2
    return 0


def _cmd_eval(args) -> int:
    try:
        cfg = _resolve_config(args)
        results = Path(args.results)
        gt = Path(args.gt)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        pair_dirs = sorted(
            p for p in results.iterdir() if (p / "report.json").exists()
        )
    except _INPUT_ERRORS as exc:
        _log("error", stage="load", error=type(exc).__name__, message=str(exc))
        return 2
    if not pair_dirs:
        _log("error", stage="load", error="InsufficientDataError",
             message=f"no pair results under {results}")
        return 2

    names, pairs, skipped = [], [], 0
    thresholds = cfg.thresholds()
    for pair_dir in pair_dirs:
        name = pair_dir.name
        gt_dir = gt / name
        try:
            gt_pose = formats.read_pose_text(gt_dir / "gt_pose.txt")
            gt_depth = formats.read_frgd(gt_dir / "depth_gt.frgd")
            intr = formats.read_intrinsics_json(gt_dir / "k_img.json")
            with open(pair_dir / "report.json", "r", encoding="ascii") as fh:
                report = json.load(fh)
            corrs = formats.read_correspondences(pair_dir / "corr.txt")
            est = None
            if report.get("success"):
                est = formats.read_pose_text(pair_dir / "pose.txt")
        except _INPUT_ERRORS + (json.JSONDecodeError, KeyError) as exc:
            _log("warning", pair=name, message=f"skipped: {exc}")
            skipped += 1
            continue
        names.append(name)
        pairs.append(pair_metrics(corrs, est, gt_pose, gt_depth, intr, thresholds))

    if not pairs:
        _log("error", stage="eval", error="InsufficientDataError",
             message="every pair was skipped")
        return 2

    summary = aggregate(pairs, thresholds)
    payload = metrics_to_dict(summary, thresholds)
    payload["skipped"] = skipped
    with open(out / "aggregate.json", "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_pair_csv(out / "pairs.csv", names, pairs)
    _log("eval", pairs=len(pairs), skipped=skipped, rr=summary.rr, fmr=summary.fmr)
    print(json.dumps(payload, sort_keys=True))
    return 0


def _parse_float_list(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"expected a comma-separated float list, got {text!r}")


def _cmd_sweep(args) -> int:
    try:
        profile = args.profile or os.environ.get(ENV_PROFILE) or "indoor"
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        specs = [_spec_from_args(args, args.seed + i) for i in range(args.seeds)]
        solvers = [s.strip() for s in args.solver_list.split(",") if s.strip()]
        weights = _parse_float_list(args.w_list) if args.w_list else [None]
        variants = [
            RunVariant(solver=s, w=w, iterations=args.iters)
            for s in solvers for w in weights
        ]
        rows = sweep(specs, variants, profile=profile, workers=args.jobs)
    except _INPUT_ERRORS as exc:
        _log("error", stage="sweep", error=type(exc).__name__, message=str(exc))
        return 2

    write_sweep_csv(out / "cells.csv", rows)
    thresholds = default_config(profile).thresholds()
    summary = {
        label: metrics_to_dict(m, thresholds)
        for label, m in aggregate_sweep(rows, thresholds).items()
    }
    with open(out / "summary.json", "w", encoding="ascii") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for label, payload in sorted(summary.items()):
        _log("variant", variant=label, rr=payload["rr"], ir=payload["ir"])
    print(json.dumps(summary, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xmodreg",
        description="Cross-modality image-to-point-cloud registration.",
    )
    from . import __version__

    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register", help="match one pair and solve for its pose")
    _add_pair_flags(p)
    _add_config_flags(p)
    p.add_argument("--solver", choices=["auto", "kabsch", "pnp"], default="auto")
    p.add_argument("--workers", type=int, default=1, help="RANSAC scoring threads")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_register)

    p = sub.add_parser("match", help="produce correspondences only")
    _add_pair_flags(p)
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_match)

    p = sub.add_parser("solve", help="solve a correspondence file for a pose")
    p.add_argument("--corr", required=True, help="correspondence file")
    p.add_argument("--k-img", required=True, help="image intrinsics (JSON)")
    p.add_argument("--img-depth", help="image-side depth (FRGD), enables Kabsch")
    _add_config_flags(p)
    p.add_argument("--solver", choices=["auto", "kabsch", "pnp"], default="auto")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("synth", help="generate synthetic benchmark pairs")
    _add_spec_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1, help="number of pairs")
    p.add_argument("--profile", choices=sorted(PROFILES))
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("eval", help="aggregate metrics over finished runs")
    p.add_argument("--results", required=True, help="directory of register outputs")
    p.add_argument("--gt", required=True, help="directory of ground-truth pair dirs")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="synthetic study over parameter variants")
    _add_spec_flags(p)
    p.add_argument("--seed", type=int, default=0, help="base seed")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds")
    p.add_argument("--w-list", help="comma-separated fusion weights")
    p.add_argument("--solver-list", default="auto", help="comma-separated solvers")
    p.add_argument("--iters", type=int, help="RANSAC iterations per cell")
    p.add_argument("--jobs", type=int, default=1, help="parallel cells")
    p.add_argument("--profile", choices=sorted(PROFILES))
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except XmodregError as exc:
        _log("error", error=type(exc).__name__, message=str(exc))
        return 2


if __name__ == "__main__":
    sys.exit(main())
