"""Producers of engine input files: feature layers, metric depth, and
per-point descriptors, from a procedural reference backend or pretrained
models behind a runtime plugin."""

from .backend import (
    CheckpointBackend,
    ProceduralBackend,
    get_backend,
    normalize_depth,
)
from .config import (
    ENV_PROFILE,
    LAYER_CHANNELS,
    LAYER_DOWNSAMPLE,
    PROFILES,
    ExtractorConfig,
    default_config,
    override_config,
    parse_config_text,
    read_config,
    write_config,
)
from .errors import ConfigurationError, ExtractError, InvalidInputError
from .extract import (
    estimate_depth,
    extract_depth_features,
    extract_point_features,
    extract_rgb_features,
)

__version__ = "0.1.0"

__all__ = [
    "ENV_PROFILE",
    "LAYER_CHANNELS",
    "LAYER_DOWNSAMPLE",
    "PROFILES",
    "CheckpointBackend",
    "ConfigurationError",
    "ExtractError",
    "ExtractorConfig",
    "InvalidInputError",
    "ProceduralBackend",
    "__version__",
    "default_config",
    "estimate_depth",
    "extract_depth_features",
    "extract_point_features",
    "extract_rgb_features",
    "get_backend",
    "normalize_depth",
    "override_config",
    "parse_config_text",
    "read_config",
    "write_config",
]
