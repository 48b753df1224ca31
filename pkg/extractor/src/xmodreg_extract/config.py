"""Extractor configuration.

A profile picks the scene-dependent defaults (working image size, text
prompts, point voxel size); everything else has one shared default.  The
text format is the same key=value dialect the engine uses, so one file can
sit next to an engine config in a run directory without surprises.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigurationError

ENV_PROFILE = "XMODREG_PROFILE"

# decoder layer id -> (channels, downsampling factor of the working image)
LAYER_CHANNELS = {
    0: 1280, 1: 1280, 2: 1280,
    3: 1280, 4: 1280, 5: 1280,
    6: 1280,
    7: 640, 8: 640,
}
LAYER_DOWNSAMPLE = {
    0: 64, 1: 64, 2: 64,
    3: 32, 4: 32, 5: 32,
    6: 16,
    7: 16, 8: 16,
}

_NEGATIVE_PROMPT = "lowres, bad anatomy, bad hands, cropped, worst quality"

_COMMON = dict(
    backend="procedural",
    t_hat=150,
    layers=(0, 4, 6),
    guidance_scale=4.0,
    schedule_begin=1000,
    schedule_stride=50,
    negative_prompt=_NEGATIVE_PROMPT,
    seed=0,
    point_feature_dim=32,
    sd_checkpoint="",
    controlnet_checkpoint="",
    depth_checkpoint="",
    point_checkpoint="",
    runtime_module="xmodreg_extract_runtime",
)

PROFILES = {
    "indoor": dict(
        _COMMON,
        profile="indoor",
        image_height=512,
        image_width=704,
        voxel=0.025,
        prompt="best quality, a photo of a room, furniture, household items",
    ),
    "outdoor": dict(
        _COMMON,
        profile="outdoor",
        image_height=512,
        image_width=1280,
        voxel=0.3,
        prompt="a vehicle camera photo of street view, trees, cars, people, "
               "house, road, sky",
    ),
}


@dataclass(frozen=True)
class ExtractorConfig:
    profile: str
    backend: str
    t_hat: int
    layers: tuple
    guidance_scale: float
    schedule_begin: int
    schedule_stride: int
    prompt: str
    negative_prompt: str
    seed: int
    image_height: int
    image_width: int
    voxel: float
    point_feature_dim: int
    sd_checkpoint: str
    controlnet_checkpoint: str
    depth_checkpoint: str
    point_checkpoint: str
    runtime_module: str

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ConfigurationError(f"unknown profile {self.profile!r}")
        if self.backend not in ("procedural", "checkpoint"):
            raise ConfigurationError(f"unknown backend {self.backend!r}")
        if self.schedule_stride < 1 or self.schedule_begin < self.schedule_stride:
            raise ConfigurationError(
                "schedule must satisfy begin >= stride >= 1, got "
                f"{self.schedule_begin}/{self.schedule_stride}"
            )
        if self.t_hat not in self.schedule():
            raise ConfigurationError(
                f"t_hat={self.t_hat} is not on the sampling schedule "
                f"{self.schedule_begin}..0 step {self.schedule_stride}"
            )
        layers = tuple(int(l) for l in self.layers)
        if not layers:
            raise ConfigurationError("at least one layer is required")
        if any(l not in LAYER_CHANNELS for l in layers):
            raise ConfigurationError(
                f"layers must be within 0..{max(LAYER_CHANNELS)}, got {layers}"
            )
        if any(b <= a for a, b in zip(layers, layers[1:])):
            raise ConfigurationError("layers must be strictly increasing")
        object.__setattr__(self, "layers", layers)
        if not (self.guidance_scale >= 0.0):
            raise ConfigurationError("guidance_scale must be >= 0")
        for name in ("image_height", "image_width"):
            v = getattr(self, name)
            if v < 64 or v % 64:
                # the coarsest decoder layer is 64x smaller than the input
                raise ConfigurationError(f"{name} must be a positive multiple of 64")
        if not (self.voxel > 0.0):
            raise ConfigurationError("voxel must be positive")
        if self.point_feature_dim < 1:
            raise ConfigurationError("point_feature_dim must be >= 1")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")

    def schedule(self) -> tuple:
        """Denoising steps, high to low; t_hat must be one of them."""
        return tuple(range(self.schedule_begin, 0, -self.schedule_stride))

    def layer_shape(self, layer_id: int) -> tuple:
        """(channels, height, width) of one decoder layer at the working size."""
        down = LAYER_DOWNSAMPLE[layer_id]
        return (
            LAYER_CHANNELS[layer_id],
            self.image_height // down,
            self.image_width // down,
        )


def default_config(profile: str = "indoor") -> ExtractorConfig:
    values = PROFILES.get(profile)
    if values is None:
        raise ConfigurationError(f"unknown profile {profile!r}")
    return ExtractorConfig(**values)


def override_config(cfg: ExtractorConfig, **overrides) -> ExtractorConfig:
    return dataclasses.replace(cfg, **overrides)


_INT_KEYS = frozenset((
    "t_hat", "schedule_begin", "schedule_stride", "seed",
    "image_height", "image_width", "point_feature_dim",
))
_FLOAT_KEYS = frozenset(("guidance_scale", "voxel"))
_STR_KEYS = frozenset((
    "backend", "prompt", "negative_prompt",
    "sd_checkpoint", "controlnet_checkpoint", "depth_checkpoint",
    "point_checkpoint", "runtime_module",
))


def _parse_value(key: str, raw: str):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key == "layers":
            return tuple(int(p) for p in raw.split(",") if p.strip() != "")
        if key in _STR_KEYS:
            return raw
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {raw!r}") from exc
    raise ConfigurationError(f"unknown config key {key!r}")


def parse_config_text(text: str) -> ExtractorConfig:
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
    return ExtractorConfig(**values)


def read_config(path) -> ExtractorConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def write_config(path, cfg: ExtractorConfig) -> None:
    """Write the full effective configuration (reads back identically)."""
    lines = [f"profile={cfg.profile}"]
    for f in dataclasses.fields(cfg):
        if f.name == "profile":
            continue
        v = getattr(cfg, f.name)
        if f.name == "layers":
            v = ",".join(str(l) for l in v)
        elif isinstance(v, float):
            v = format(v, ".17g")
        lines.append(f"{f.name}={v}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
