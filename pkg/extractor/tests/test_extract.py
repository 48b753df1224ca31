"""Extraction operations: shapes, determinism, invariances, backends."""

import sys
from types import SimpleNamespace

import numpy as np
import pytest

from xmodreg import DepthMap, FeatureMap, PointCloud, read_frgd, read_frgp, write_frgd, write_frgp
from xmodreg_extract import (
    LAYER_CHANNELS,
    LAYER_DOWNSAMPLE,
    ConfigurationError,
    InvalidInputError,
    default_config,
    estimate_depth,
    extract_depth_features,
    extract_point_features,
    extract_rgb_features,
    normalize_depth,
    override_config,
)

# a small working size keeps full-stack extraction cheap in tests
SMALL = override_config(default_config(), image_height=128, image_width=192)


def small(**overrides):
    return override_config(SMALL, **overrides)


def random_image(seed, h=100, w=140):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def random_depth(seed, h=128, w=192, holes=True):
    rng = np.random.default_rng(seed)
    d = rng.uniform(0.5, 6.0, size=(h, w)).astype(np.float32)
    if holes:
        d[rng.random((h, w)) < 0.2] = 0.0
    return DepthMap(d)


class TestRgbFeatures:
    def test_layer_shapes_follow_the_table(self):
        cfg = small(layers=tuple(range(9)))
        fm = extract_rgb_features(random_image(0), cfg)
        assert fm.layer_ids() == list(range(9))
        for layer in fm.layers:
            c, h, w = cfg.layer_shape(layer.layer_id)
            assert layer.data.shape == (c, h, w)
            assert c == LAYER_CHANNELS[layer.layer_id]
            down = LAYER_DOWNSAMPLE[layer.layer_id]
            assert (h * down, w * down) == (128, 192)

    def test_indoor_working_size_shapes(self):
        fm = extract_rgb_features(random_image(1), default_config("indoor"))
        shapes = {l.layer_id: l.data.shape for l in fm.layers}
        assert shapes == {
            0: (1280, 8, 11),
            4: (1280, 16, 22),
            6: (1280, 32, 44),
        }

    def test_modality_and_type(self):
        fm = extract_rgb_features(random_image(2), SMALL)
        assert isinstance(fm, FeatureMap)
        assert fm.modality == "rgb"

    def test_constant_black_image_is_finite(self):
        fm = extract_rgb_features(np.zeros((64, 64, 3), dtype=np.uint8), SMALL)
        for layer in fm.layers:
            assert np.isfinite(layer.data).all()

    def test_same_seed_is_bit_identical(self):
        img = random_image(3)
        a = extract_rgb_features(img, SMALL)
        b = extract_rgb_features(img, SMALL)
        for la, lb in zip(a.layers, b.layers):
            assert np.array_equal(la.data, lb.data)

    def test_seed_changes_features(self):
        img = random_image(4)
        a = extract_rgb_features(img, SMALL)
        b = extract_rgb_features(img, small(seed=1))
        assert not np.array_equal(a.layers[0].data, b.layers[0].data)

    def test_step_changes_features(self):
        img = random_image(5)
        a = extract_rgb_features(img, SMALL)
        b = extract_rgb_features(img, small(t_hat=500))
        assert not np.array_equal(a.layers[0].data, b.layers[0].data)

    def test_content_changes_features(self):
        a = extract_rgb_features(random_image(6), SMALL)
        b = extract_rgb_features(random_image(7), SMALL)
        assert not np.array_equal(a.layers[0].data, b.layers[0].data)

    def test_input_is_resized_to_working_size(self):
        fm = extract_rgb_features(random_image(8, h=37, w=51), SMALL)
        assert fm.layers[0].data.shape == SMALL.layer_shape(SMALL.layers[0])

    def test_rejects_wrong_dtype(self):
        with pytest.raises(InvalidInputError):
            extract_rgb_features(np.zeros((8, 8, 3), dtype=np.float32), SMALL)

    def test_rejects_wrong_shape(self):
        with pytest.raises(InvalidInputError):
            extract_rgb_features(np.zeros((8, 8), dtype=np.uint8), SMALL)


class TestDepthFeatures:
    def test_modality_and_shapes(self):
        fm = extract_depth_features(random_depth(0), SMALL)
        assert fm.modality == "depth"
        assert fm.layer_ids() == list(SMALL.layers)
        for layer in fm.layers:
            assert layer.data.shape == SMALL.layer_shape(layer.layer_id)

    def test_invariant_to_depth_rescaling(self):
        # conditioning is min-max normalized, so the metric unit cancels
        d = random_depth(1)
        a = extract_depth_features(d, SMALL)
        b = extract_depth_features(DepthMap(d.data * 2.0), SMALL)
        for la, lb in zip(a.layers, b.layers):
            assert np.array_equal(la.data, lb.data)

    def test_all_invalid_map_is_finite(self):
        fm = extract_depth_features(DepthMap(np.zeros((128, 192), np.float32)), SMALL)
        for layer in fm.layers:
            assert np.isfinite(layer.data).all()

    def test_constant_depth_is_finite(self):
        fm = extract_depth_features(DepthMap(np.full((128, 192), 2.0, np.float32)), SMALL)
        for layer in fm.layers:
            assert np.isfinite(layer.data).all()

    def test_guidance_scale_changes_features(self):
        d = random_depth(2)
        a = extract_depth_features(d, SMALL)
        b = extract_depth_features(d, small(guidance_scale=0.0))
        assert not np.array_equal(a.layers[0].data, b.layers[0].data)

    def test_deterministic(self):
        d = random_depth(3)
        a = extract_depth_features(d, SMALL)
        b = extract_depth_features(d, SMALL)
        for la, lb in zip(a.layers, b.layers):
            assert np.array_equal(la.data, lb.data)

    def test_off_size_input_is_resized(self):
        fm = extract_depth_features(random_depth(4, h=60, w=80), SMALL)
        assert fm.layers[0].data.shape == SMALL.layer_shape(SMALL.layers[0])

    def test_rejects_non_depthmap(self):
        with pytest.raises(InvalidInputError):
            extract_depth_features(np.ones((128, 192), np.float32), SMALL)


class TestNormalizeDepth:
    def test_range_and_invalid_pixels(self):
        d = random_depth(5)
        nd = normalize_depth(d)
        assert nd.min() >= 0.0 and nd.max() <= 1.0
        assert (nd[~d.valid_mask] == 0.0).all()
        assert nd[d.valid_mask].max() == 1.0
        assert nd[d.valid_mask].min() == 0.0

    def test_constant_valid_region_maps_to_half(self):
        data = np.zeros((4, 4), np.float32)
        data[1:3, 1:3] = 7.0
        nd = normalize_depth(DepthMap(data))
        assert (nd[1:3, 1:3] == 0.5).all()
        assert nd.sum() == 4 * 0.5

    def test_all_invalid_is_zero(self):
        nd = normalize_depth(DepthMap(np.zeros((3, 3), np.float32)))
        assert (nd == 0.0).all()


class TestEstimateDepth:
    def test_native_resolution_all_valid(self):
        img = random_image(10, h=123, w=77)
        z = estimate_depth(img, default_config("indoor"))
        assert (z.height, z.width) == (123, 77)
        assert z.valid_mask.all()
        assert (z.data > 0.0).all()

    def test_indoor_range(self):
        z = estimate_depth(random_image(11), default_config("indoor"))
        assert 0.5 <= float(np.median(z.data)) <= 10.0
        assert z.data.max() <= 10.0

    def test_outdoor_reads_deeper(self):
        img = random_image(12)
        indoor = estimate_depth(img, default_config("indoor"))
        outdoor = estimate_depth(img, default_config("outdoor"))
        assert np.median(outdoor.data) > np.median(indoor.data)

    def test_brighter_means_nearer(self):
        bright = np.full((64, 64, 3), 250, dtype=np.uint8)
        dark = np.full((64, 64, 3), 5, dtype=np.uint8)
        cfg = default_config("indoor")
        near = estimate_depth(bright, cfg)
        far = estimate_depth(dark, cfg)
        assert np.median(near.data) < np.median(far.data)

    def test_deterministic(self):
        img = random_image(13)
        a = estimate_depth(img, SMALL)
        b = estimate_depth(img, SMALL)
        assert np.array_equal(a.data, b.data)

    def test_round_trips_through_engine_format(self, tmp_path):
        z = estimate_depth(random_image(14), SMALL)
        write_frgd(tmp_path / "z.frgd", z)
        back = read_frgd(tmp_path / "z.frgd")
        assert np.array_equal(back.data, z.data)


class TestPointFeatures:
    def test_dim_and_finiteness(self):
        cloud = PointCloud(np.random.default_rng(0).uniform(-2, 2, (500, 3)))
        kept, vec = extract_point_features(cloud, SMALL)
        assert vec.shape == (len(kept), SMALL.point_feature_dim)
        assert np.isfinite(vec).all()
        assert len(kept) <= len(cloud)

    def test_order_invariance(self):
        rng = np.random.default_rng(1)
        cloud = PointCloud(rng.uniform(-2, 2, (800, 3)))
        shuffled = PointCloud(cloud.points[rng.permutation(len(cloud))])
        kept_a, vec_a = extract_point_features(cloud, SMALL)
        kept_b, vec_b = extract_point_features(shuffled, SMALL)
        assert np.array_equal(kept_a.points, kept_b.points)
        assert np.array_equal(vec_a, vec_b)

    def test_seed_changes_vectors_not_points(self):
        cloud = PointCloud(np.random.default_rng(2).uniform(-2, 2, (300, 3)))
        kept_a, vec_a = extract_point_features(cloud, SMALL)
        kept_b, vec_b = extract_point_features(cloud, small(seed=9))
        assert np.array_equal(kept_a.points, kept_b.points)
        assert not np.array_equal(vec_a, vec_b)

    def test_coarse_voxel_merges_points(self):
        cloud = PointCloud(np.random.default_rng(3).uniform(-1, 1, (2000, 3)))
        kept, _ = extract_point_features(cloud, small(voxel=1.0))
        assert len(kept) < 100

    def test_custom_dimension(self):
        cloud = PointCloud(np.random.default_rng(4).uniform(-1, 1, (100, 3)))
        _, vec = extract_point_features(cloud, small(point_feature_dim=7))
        assert vec.shape[1] == 7

    def test_empty_cloud_rejected(self):
        with pytest.raises(InvalidInputError):
            extract_point_features(PointCloud(np.zeros((0, 3))), SMALL)

    def test_round_trips_through_engine_format(self, tmp_path):
        cloud = PointCloud(np.random.default_rng(5).uniform(-2, 2, (200, 3)))
        kept, vec = extract_point_features(cloud, SMALL)
        write_frgp(tmp_path / "p.frgp", kept, vec)
        back_cloud, back_vec = read_frgp(tmp_path / "p.frgp")
        assert back_cloud.points == pytest.approx(kept.points, abs=1e-6)
        assert back_vec == pytest.approx(vec, abs=1e-6)


class TestCheckpointBackend:
    def test_unset_checkpoint_names_the_key(self):
        cfg = small(backend="checkpoint")
        with pytest.raises(ConfigurationError, match="sd_checkpoint"):
            extract_rgb_features(random_image(20), cfg)

    def test_missing_file_is_reported(self, tmp_path):
        cfg = small(backend="checkpoint", sd_checkpoint=str(tmp_path / "absent.pt"))
        with pytest.raises(ConfigurationError, match="does not exist"):
            extract_rgb_features(random_image(21), cfg)

    def test_missing_runtime_module(self, tmp_path):
        ckpt = tmp_path / "sd.pt"
        ckpt.write_bytes(b"\x00")
        cfg = small(backend="checkpoint", sd_checkpoint=str(ckpt),
                    runtime_module="definitely_not_installed_runtime")
        with pytest.raises(ConfigurationError, match="not installed"):
            extract_rgb_features(random_image(22), cfg)

    def test_depth_requires_both_checkpoints(self, tmp_path):
        ckpt = tmp_path / "sd.pt"
        ckpt.write_bytes(b"\x00")
        cfg = small(backend="checkpoint", sd_checkpoint=str(ckpt))
        with pytest.raises(ConfigurationError, match="controlnet_checkpoint"):
            extract_depth_features(random_depth(23), cfg)

    def test_delegates_to_runtime_with_working_inputs(self, tmp_path, monkeypatch):
        ckpt = tmp_path / "sd.pt"
        ckpt.write_bytes(b"\x00")
        seen = {}
        marker = object()

        def fake_rgb(image, cfg):
            seen["shape"] = image.shape
            seen["dtype"] = image.dtype
            seen["cfg"] = cfg
            return marker

        monkeypatch.setitem(
            sys.modules, "fake_extract_runtime",
            SimpleNamespace(rgb_features=fake_rgb),
        )
        cfg = small(backend="checkpoint", sd_checkpoint=str(ckpt),
                    runtime_module="fake_extract_runtime")
        out = extract_rgb_features(random_image(24, h=30, w=40), cfg)
        assert out is marker
        assert seen["shape"] == (cfg.image_height, cfg.image_width, 3)
        assert seen["dtype"] == np.float32
        assert seen["cfg"] is cfg

    def test_runtime_without_the_operation(self, tmp_path, monkeypatch):
        ckpt = tmp_path / "zoe.pt"
        ckpt.write_bytes(b"\x00")
        monkeypatch.setitem(
            sys.modules, "hollow_runtime", SimpleNamespace(),
        )
        cfg = small(backend="checkpoint", depth_checkpoint=str(ckpt),
                    runtime_module="hollow_runtime")
        with pytest.raises(ConfigurationError, match="does not provide"):
            estimate_depth(random_image(25), cfg)
