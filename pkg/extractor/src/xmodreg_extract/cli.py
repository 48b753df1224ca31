"""Command line for producing engine input files.

``rgb`` and ``depth`` write FRGF feature layers, ``zoe`` writes an FRGD
metric depth map, ``points`` writes an FRGP featured point set.  Images are
read with Pillow, depth maps and clouds with the engine readers.  Progress
goes to stderr as JSON lines; a one-line summary of the written artifact
goes to stdout.  Exit codes: 0 success, 2 bad input or configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

import xmodreg
from xmodreg import XmodregError

from .config import ENV_PROFILE, PROFILES, default_config, override_config, read_config
from .errors import ExtractError, InvalidInputError
from .extract import (
    estimate_depth,
    extract_depth_features,
    extract_point_features,
    extract_rgb_features,
)


def _log(event: str, **fields) -> None:
    print(json.dumps({"event": event, **fields}, sort_keys=True), file=sys.stderr)


def _read_image(path) -> np.ndarray:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except (OSError, UnidentifiedImageError) as exc:
        raise InvalidInputError(f"cannot read image {path}: {exc}") from exc


def _resolve_config(args):
    if args.config:
        cfg = read_config(args.config)
    else:
        profile = args.profile or os.environ.get(ENV_PROFILE) or "indoor"
        cfg = default_config(profile)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.backend is not None:
        overrides["backend"] = args.backend
    return override_config(cfg, **overrides) if overrides else cfg


def _prepare_out(args) -> Path:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def _emit_feature_summary(out: Path, fm) -> None:
    print(json.dumps({
        "written": str(out),
        "modality": fm.modality,
        "layers": [
            {"id": l.layer_id, "channels": l.data.shape[0],
             "height": l.data.shape[1], "width": l.data.shape[2]}
            for l in fm.layers
        ],
    }, sort_keys=True))


def _cmd_rgb(args) -> int:
    cfg = _resolve_config(args)
    image = _read_image(args.image)
    _log("extract", kind="rgb", backend=cfg.backend,
         input=str(args.image), size=list(image.shape[:2]))
    fm = extract_rgb_features(image, cfg)
    out = _prepare_out(args)
    xmodreg.write_frgf(out, fm)
    _emit_feature_summary(out, fm)
    return 0


def _cmd_depth(args) -> int:
    cfg = _resolve_config(args)
    depth = xmodreg.read_frgd(args.depth)
    _log("extract", kind="depth", backend=cfg.backend,
         input=str(args.depth), size=[depth.height, depth.width])
    fm = extract_depth_features(depth, cfg)
    out = _prepare_out(args)
    xmodreg.write_frgf(out, fm)
    _emit_feature_summary(out, fm)
    return 0


def _cmd_zoe(args) -> int:
    cfg = _resolve_config(args)
    image = _read_image(args.image)
    _log("extract", kind="zoe", backend=cfg.backend,
         input=str(args.image), size=list(image.shape[:2]))
    depth = estimate_depth(image, cfg)
    out = _prepare_out(args)
    xmodreg.write_frgd(out, depth)
    print(json.dumps({
        "written": str(out),
        "height": depth.height,
        "width": depth.width,
        "min": float(depth.data.min()),
        "max": float(depth.data.max()),
    }, sort_keys=True))
    return 0


def _cmd_points(args) -> int:
    cfg = _resolve_config(args)
    cloud = xmodreg.read_ply(args.cloud)
    _log("extract", kind="points", backend=cfg.backend,
         input=str(args.cloud), points=len(cloud))
    kept, vectors = extract_point_features(cloud, cfg)
    out = _prepare_out(args)
    xmodreg.write_frgp(out, kept, vectors)
    print(json.dumps({
        "written": str(out),
        "points": len(kept),
        "dim": int(vectors.shape[1]),
    }, sort_keys=True))
    return 0


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--config", help="config file (key=value; includes profile)")
    g.add_argument("--profile", choices=sorted(PROFILES),
                   help=f"scene profile (default: ${ENV_PROFILE} or indoor)")
    p.add_argument("--seed", type=int, help="feature stream seed override")
    p.add_argument("--backend", choices=["procedural", "checkpoint"],
                   help="extraction backend override")
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xmodreg-extract",
        description="Produce feature, depth, and point files for the engine.",
    )
    from . import __version__

    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rgb", help="feature layers for an RGB image (FRGF)")
    p.add_argument("--image", required=True, help="image file (any Pillow format)")
    _add_common_flags(p)
    p.set_defaults(func=_cmd_rgb)

    p = sub.add_parser("depth", help="feature layers for a depth map (FRGF)")
    p.add_argument("--depth", required=True, help="completed depth map (FRGD)")
    _add_common_flags(p)
    p.set_defaults(func=_cmd_depth)

    p = sub.add_parser("zoe", help="metric depth estimate for an image (FRGD)")
    p.add_argument("--image", required=True, help="image file (any Pillow format)")
    _add_common_flags(p)
    p.set_defaults(func=_cmd_zoe)

    p = sub.add_parser("points", help="per-point features for a cloud (FRGP)")
    p.add_argument("--cloud", required=True, help="point cloud (PLY)")
    _add_common_flags(p)
    p.set_defaults(func=_cmd_points)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ExtractError, XmodregError, OSError) as exc:
        _log("error", error=type(exc).__name__, message=str(exc))
        return 2


if __name__ == "__main__":
    sys.exit(main())
