"""Extraction backends.

Two implementations of the same four operations:

* ``ProceduralBackend`` synthesizes activation-shaped tensors from image
  and depth content with keyed pseudo-random projections.  It needs no
  models, is bit-reproducible from the config seed, and honors every
  contract the engine relies on (layer shapes, value finiteness, modality
  tags, depth positivity).  It is the tested reference and the default.
* ``CheckpointBackend`` validates the configured checkpoint paths and
  delegates to a runtime plugin module that wraps the actual pretrained
  networks.  The plugin is resolved by import name (``runtime_module``
  config key) so heavyweight model dependencies never burden this package.

Both backends consume working-size inputs prepared by :mod:`.extract`.
"""

from __future__ import annotations

import hashlib
import importlib
import os

import numpy as np

from xmodreg import DepthMap, FeatureLayer, FeatureMap, PointCloud, voxel_downsample

from .config import ExtractorConfig
from .errors import ConfigurationError


def _stream(*tags) -> np.random.Generator:
    """A generator keyed by a stable hash of the tag tuple."""
    digest = hashlib.sha256(repr(tags).encode("ascii")).digest()
    key = int.from_bytes(digest[:8], "little")
    return np.random.Generator(np.random.Philox(key=key))


def _pool(channel: np.ndarray, h: int, w: int) -> np.ndarray:
    """Block-mean one (H, W) map down to (h, w); extents divide exactly."""
    H, W = channel.shape
    return channel.reshape(h, H // h, w, W // w).mean(axis=(1, 3))


def _gradient_maps(base: np.ndarray):
    gy, gx = np.gradient(base)
    return gx.astype(np.float32), gy.astype(np.float32)


def _rgb_base_maps(image: np.ndarray) -> np.ndarray:
    """(K, H, W) stack of luminance, opponent colors, and gradients."""
    r, g, b = image[..., 0], image[..., 1], image[..., 2]
    lum = (0.299 * r + 0.587 * g + 0.114 * b).astype(np.float32)
    gx, gy = _gradient_maps(lum)
    return np.stack([
        lum,
        (r - lum).astype(np.float32),
        (b - lum).astype(np.float32),
        gx,
        gy,
        np.square(lum - lum.mean(), dtype=np.float32),
    ])


def _depth_base_maps(normalized: np.ndarray) -> np.ndarray:
    gx, gy = _gradient_maps(normalized)
    return np.stack([
        normalized,
        gx,
        gy,
        np.square(normalized, dtype=np.float32),
        np.square(gx, dtype=np.float32) + np.square(gy, dtype=np.float32),
    ])


def normalize_depth(depth: DepthMap) -> np.ndarray:
    """Min-max normalize valid depth to [0, 1]; invalid pixels become 0.

    The result is invariant to a positive rescaling of the depth values,
    so features built on it do not depend on the metric unit.
    """
    data = depth.data
    mask = depth.valid_mask
    if not mask.any():
        return np.zeros_like(data, dtype=np.float32)
    lo = data[mask].min()
    hi = data[mask].max()
    out = np.zeros_like(data, dtype=np.float32)
    if hi > lo:
        out[mask] = (data[mask] - lo) / (hi - lo)
    else:
        out[mask] = 0.5
    return out


def _layer_tensor(maps: np.ndarray, cfg: ExtractorConfig, layer_id: int,
                  *tags) -> np.ndarray:
    """Synthesize one (C, h, w) activation tensor from pooled base maps."""
    c, h, w = cfg.layer_shape(layer_id)
    pooled = np.stack([_pool(m, h, w) for m in maps]).reshape(len(maps), h * w)
    rng = _stream(cfg.seed, layer_id, cfg.t_hat, cfg.schedule_begin,
                  cfg.schedule_stride, *tags)
    mix = rng.normal(size=(c, len(maps))) / np.sqrt(len(maps))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(c, 1))
    out = np.sin(4.0 * (mix @ pooled) + phase)
    # larger extraction steps sit deeper in the noising process
    sigma = 0.1 * cfg.t_hat / cfg.schedule_begin
    out = out + sigma * rng.standard_normal(out.shape)
    return out.astype(np.float32).reshape(c, h, w)


class ProceduralBackend:
    """Deterministic model-free stand-in producing contract-true outputs."""

    def rgb_features(self, image: np.ndarray, cfg: ExtractorConfig) -> FeatureMap:
        maps = _rgb_base_maps(image)
        layers = tuple(
            FeatureLayer(l, _layer_tensor(maps, cfg, l, "rgb"))
            for l in cfg.layers
        )
        return FeatureMap(layers, "rgb")

    def depth_features(self, depth: DepthMap, cfg: ExtractorConfig) -> FeatureMap:
        maps = _depth_base_maps(normalize_depth(depth))
        omega = cfg.guidance_scale
        layers = []
        for l in cfg.layers:
            cond = _layer_tensor(maps, cfg, l, "cond", cfg.prompt)
            uncond = _layer_tensor(maps, cfg, l, "uncond", cfg.negative_prompt)
            layers.append(FeatureLayer(l, (omega + 1.0) * cond - omega * uncond))
        return FeatureMap(tuple(layers), "depth")

    def estimate_depth(self, image: np.ndarray, cfg: ExtractorConfig) -> DepthMap:
        from PIL import Image

        r, g, b = image[..., 0], image[..., 1], image[..., 2]
        lum = (0.299 * r + 0.587 * g + 0.114 * b).astype(np.float32)
        h, w = lum.shape
        small = Image.fromarray(lum, mode="F").resize(
            (max(1, w // 16), max(1, h // 16)), Image.BILINEAR
        )
        smooth = np.asarray(
            small.resize((w, h), Image.BILINEAR), dtype=np.float32
        ).clip(0.0, 1.0)
        if cfg.profile == "outdoor":
            lo, hi = 4.0, 60.0
        else:
            lo, hi = 1.0, 7.0
        # brighter surfaces read as nearer
        return DepthMap(hi - (hi - lo) * smooth)

    def point_features(self, cloud: PointCloud, cfg: ExtractorConfig):
        order = np.lexsort(
            (cloud.points[:, 2], cloud.points[:, 1], cloud.points[:, 0])
        )
        kept, _ = voxel_downsample(PointCloud(cloud.points[order]), cfg.voxel)
        p = kept.points - kept.points.mean(axis=0)
        scale = max(float(np.sqrt(np.mean(np.sum(p * p, axis=1)))), 1e-9)
        p = p / scale
        x, y, z = p[:, 0], p[:, 1], p[:, 2]
        phi = np.stack([
            x, y, z, x * x, y * y, z * z, x * y, y * z, z * x,
            np.sqrt(np.sum(p * p, axis=1)),
        ], axis=1)
        rng = _stream(cfg.seed, "points", cfg.point_feature_dim, cfg.voxel)
        proj = rng.normal(size=(cfg.point_feature_dim, phi.shape[1]))
        proj /= np.sqrt(phi.shape[1])
        return kept, np.tanh(phi @ proj.T)


_REQUIRED_CHECKPOINTS = {
    "rgb_features": ("sd_checkpoint",),
    "depth_features": ("sd_checkpoint", "controlnet_checkpoint"),
    "estimate_depth": ("depth_checkpoint",),
    "point_features": ("point_checkpoint",),
}


class CheckpointBackend:
    """Pretrained-model path: validate checkpoints, delegate to the runtime.

    The runtime plugin is any importable module exposing the four backend
    operations with the same signatures.  Checkpoint paths are checked
    before the import so a misconfigured run fails with the actionable
    error first.
    """

    def _delegate(self, op: str, cfg: ExtractorConfig):
        for key in _REQUIRED_CHECKPOINTS[op]:
            path = getattr(cfg, key)
            if not path:
                raise ConfigurationError(
                    f"{op} with backend=checkpoint requires {key} to be set"
                )
            if not os.path.exists(path):
                raise ConfigurationError(f"{key} does not exist: {path}")
        try:
            runtime = importlib.import_module(cfg.runtime_module)
        except ImportError as exc:
            raise ConfigurationError(
                f"runtime module {cfg.runtime_module!r} is not installed; "
                "install a model runtime or use backend=procedural"
            ) from exc
        fn = getattr(runtime, op, None)
        if fn is None:
            raise ConfigurationError(
                f"runtime module {cfg.runtime_module!r} does not provide {op}"
            )
        return fn

    def rgb_features(self, image: np.ndarray, cfg: ExtractorConfig) -> FeatureMap:
        return self._delegate("rgb_features", cfg)(image, cfg)

    def depth_features(self, depth: DepthMap, cfg: ExtractorConfig) -> FeatureMap:
        return self._delegate("depth_features", cfg)(depth, cfg)

    def estimate_depth(self, image: np.ndarray, cfg: ExtractorConfig) -> DepthMap:
        return self._delegate("estimate_depth", cfg)(image, cfg)

    def point_features(self, cloud: PointCloud, cfg: ExtractorConfig):
        return self._delegate("point_features", cfg)(cloud, cfg)


def get_backend(cfg: ExtractorConfig):
    if cfg.backend == "checkpoint":
        return CheckpointBackend()
    return ProceduralBackend()
