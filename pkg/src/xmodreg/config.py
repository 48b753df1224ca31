"""Pipeline configuration: profile defaults plus explicit overrides.

Two profiles ship with the engine.  ``indoor`` is tuned for room-scale RGB-D
scenes, ``outdoor`` for street-scale LiDAR scenes; they differ in tolerances,
image/grid extents and depth handling.  A config file is plain ``key=value``
text; the ``profile`` key picks the defaults and every other key overrides
one field.  Unknown keys are rejected rather than ignored.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigurationError, FormatError
from .metrics import MetricThresholds
from .solvers import SolverConfig

ENV_PROFILE = "XMODREG_PROFILE"


@dataclass(frozen=True)
class PipelineConfig:
    profile: str
    # evaluation
    tau_c: float
    rr_rotation_deg: float
    rr_translation: float
    fmr_fraction: float
    # solvers
    kabsch_tolerance: float
    pnp_tolerance_px: float
    iterations: int
    seed: int | None  # None: derive from correspondence content
    # geometric features
    tau_g: float
    voxel: float
    # image / descriptor grid
    image_height: int
    image_width: int
    grid_height: int
    grid_width: int
    stride: int
    # descriptor assembly
    w: float
    pca_dim: int
    layers: tuple
    # depth handling
    densify_mode: str
    densify_radius: int
    max_scene_depth: float
    depth_png_scale: float

    def __post_init__(self):
        positive = (
            "tau_c", "rr_rotation_deg", "rr_translation", "kabsch_tolerance",
            "pnp_tolerance_px", "tau_g", "voxel", "max_scene_depth", "depth_png_scale",
        )
        for name in positive:
            if not (getattr(self, name) > 0.0):
                raise ConfigurationError(f"{name} must be positive")
        if not (0.0 < self.fmr_fraction < 1.0):
            raise ConfigurationError("fmr_fraction must lie in (0, 1)")
        if not (0.0 <= self.w <= 1.0):
            raise ConfigurationError("w must lie in [0, 1]")
        for name in ("iterations", "stride", "pca_dim", "densify_radius",
                     "image_height", "image_width", "grid_height", "grid_width"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.densify_mode not in ("fast", "multiscale"):
            raise ConfigurationError(f"unknown densify_mode {self.densify_mode!r}")
        layers = tuple(int(l) for l in self.layers)
        if not layers or any(l < 0 for l in layers) or len(set(layers)) != len(layers):
            raise ConfigurationError("layers must be distinct non-negative ids")
        if list(layers) != sorted(layers):
            raise ConfigurationError("layers must be ascending")
        object.__setattr__(self, "layers", layers)
        if self.seed is not None:
            object.__setattr__(self, "seed", int(self.seed))

    @property
    def grid(self):
        return (self.grid_height, self.grid_width)

    def thresholds(self) -> MetricThresholds:
        return MetricThresholds(
            tau_c=self.tau_c,
            rr_rotation_deg=self.rr_rotation_deg,
            rr_translation=self.rr_translation,
            fmr_fraction=self.fmr_fraction,
        )

    def solver_config(self, kind: str, iterations: int | None = None,
                      seed="unset") -> SolverConfig:
        if kind == "kabsch":
            tol, k = self.kabsch_tolerance, 3
        elif kind == "pnp":
            tol, k = self.pnp_tolerance_px, 4
        else:
            raise ConfigurationError(f"unknown solver kind {kind!r}")
        return SolverConfig(
            iterations=self.iterations if iterations is None else iterations,
            tolerance=tol,
            sample_size=k,
            rng_seed=self.seed if seed == "unset" else seed,
        )


_COMMON = dict(
    fmr_fraction=0.05,
    pnp_tolerance_px=10.0,
    iterations=50000,
    seed=0,
    stride=16,
    w=0.5,
    pca_dim=128,
    layers=(0, 4, 6),
    densify_radius=3,
)

PROFILES = {
    "indoor": dict(
        _COMMON,
        profile="indoor",
        tau_c=0.3,
        rr_rotation_deg=20.0,
        rr_translation=0.5,
        kabsch_tolerance=0.2,
        tau_g=0.5,
        voxel=0.025,
        image_height=512,
        image_width=704,
        grid_height=32,
        grid_width=44,
        densify_mode="fast",
        max_scene_depth=10.0,
        depth_png_scale=1000.0,
    ),
    "outdoor": dict(
        _COMMON,
        profile="outdoor",
        tau_c=3.0,
        rr_rotation_deg=10.0,
        rr_translation=3.0,
        kabsch_tolerance=4.0,
        tau_g=5.0,
        voxel=0.3,
        image_height=512,
        image_width=1280,
        grid_height=32,
        grid_width=80,
        densify_mode="multiscale",
        max_scene_depth=80.0,
        depth_png_scale=256.0,
    ),
}


def default_config(profile: str = "indoor") -> PipelineConfig:
    if profile not in PROFILES:
        raise ConfigurationError(
            f"unknown profile {profile!r} (have {sorted(PROFILES)})"
        )
    return PipelineConfig(**PROFILES[profile])


_INT_KEYS = {
    "iterations", "stride", "pca_dim", "densify_radius",
    "image_height", "image_width", "grid_height", "grid_width",
}
_FLOAT_KEYS = {
    "tau_c", "rr_rotation_deg", "rr_translation", "fmr_fraction",
    "kabsch_tolerance", "pnp_tolerance_px", "tau_g", "voxel", "w",
    "max_scene_depth", "depth_png_scale",
}
_STR_KEYS = {"densify_mode"}


def _parse_value(key: str, raw: str):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key == "seed":
            return None if raw == "auto" else int(raw)
        if key == "layers":
            return tuple(int(p) for p in raw.split(",") if p.strip() != "")
        if key in _STR_KEYS:
            return raw
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {raw!r}") from exc
    raise ConfigurationError(f"unknown config key {key!r}")


def parse_config_text(text: str) -> PipelineConfig:
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigurationError(f"line {lineno}: expected key=value, got {body!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        pairs.append((lineno, key, raw))

    profile = "indoor"
    for _, key, raw in pairs:
        if key == "profile":
            profile = raw
    values = dict(PROFILES.get(profile) or {})
    if not values:
        raise ConfigurationError(f"unknown profile {profile!r}")
    for lineno, key, raw in pairs:
        if key == "profile":
            continue
        if key not in values:
            raise ConfigurationError(f"line {lineno}: unknown config key {key!r}")
        values[key] = _parse_value(key, raw)
    return PipelineConfig(**values)


def read_config(path) -> PipelineConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def write_config(path, cfg: PipelineConfig) -> None:
    """Write the full effective configuration (reads back identically)."""
    lines = [f"profile={cfg.profile}"]
    for f in dataclasses.fields(cfg):
        if f.name == "profile":
            continue
        v = getattr(cfg, f.name)
        if f.name == "seed":
            v = "auto" if v is None else v
        elif f.name == "layers":
            v = ",".join(str(l) for l in v)
        elif isinstance(v, float):
            v = format(v, ".17g")
        lines.append(f"{f.name}={v}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def override_config(cfg: PipelineConfig, **kwargs) -> PipelineConfig:
    """Replace selected fields, re-running validation."""
    unknown = set(kwargs) - {f.name for f in dataclasses.fields(cfg)}
    if unknown:
        raise ConfigurationError(f"unknown config fields {sorted(unknown)}")
    return dataclasses.replace(cfg, **kwargs)
