"""The four extraction operations.

Inputs are validated and brought to the profile's working size here, so
backends always see the same shapes: feature extraction runs on the resized
image or depth map, monocular depth estimation runs at the native image
resolution, and point features run on the cloud as given.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from xmodreg import DepthMap, FeatureMap, PointCloud

from .backend import get_backend
from .config import ExtractorConfig, default_config
from .errors import InvalidInputError


def _check_image(image) -> np.ndarray:
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise InvalidInputError(
            f"image must be (H, W, 3) uint8, got {img.dtype} {img.shape}"
        )
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise InvalidInputError("image is empty")
    return img


def _working_image(image: np.ndarray, cfg: ExtractorConfig) -> np.ndarray:
    h, w = cfg.image_height, cfg.image_width
    if image.shape[:2] != (h, w):
        resized = Image.fromarray(image, mode="RGB").resize((w, h), Image.BILINEAR)
        image = np.asarray(resized)
    return image.astype(np.float32) / 255.0


def _working_depth(depth: DepthMap, cfg: ExtractorConfig) -> DepthMap:
    h, w = cfg.image_height, cfg.image_width
    if (depth.height, depth.width) == (h, w):
        return depth
    # nearest keeps invalid pixels exactly 0 instead of bleeding into values
    resized = Image.fromarray(depth.data, mode="F").resize((w, h), Image.NEAREST)
    return DepthMap(np.asarray(resized, dtype=np.float32))


def extract_rgb_features(image, config: ExtractorConfig | None = None) -> FeatureMap:
    """Activation-style feature layers for an RGB image, modality ``rgb``."""
    cfg = config if config is not None else default_config()
    img = _working_image(_check_image(image), cfg)
    return get_backend(cfg).rgb_features(img, cfg)


def extract_depth_features(depth: DepthMap,
                           config: ExtractorConfig | None = None) -> FeatureMap:
    """Feature layers for a depth map, modality ``depth``.

    The map should be completed (densified) first; remaining invalid pixels
    enter the conditioning image as 0.
    """
    cfg = config if config is not None else default_config()
    if not isinstance(depth, DepthMap):
        raise InvalidInputError("depth must be a DepthMap")
    return get_backend(cfg).depth_features(_working_depth(depth, cfg), cfg)


def estimate_depth(image, config: ExtractorConfig | None = None) -> DepthMap:
    """Metric depth for an RGB image at its native resolution, every pixel
    valid, so the engine can lift pixels to 3D and solve 3D-3D."""
    cfg = config if config is not None else default_config()
    img = _check_image(image).astype(np.float32) / 255.0
    return get_backend(cfg).estimate_depth(img, cfg)


def extract_point_features(cloud: PointCloud,
                           config: ExtractorConfig | None = None):
    """Per-point feature vectors on the voxel-downsampled cloud.

    Returns ``(kept, vectors)`` where ``kept`` is the downsampled cloud and
    ``vectors`` is (len(kept), point_feature_dim).  The result depends only
    on the point set, not on its ordering.
    """
    cfg = config if config is not None else default_config()
    if not isinstance(cloud, PointCloud):
        raise InvalidInputError("cloud must be a PointCloud")
    if len(cloud) == 0:
        raise InvalidInputError("cloud is empty")
    return get_backend(cfg).point_features(cloud, cfg)
