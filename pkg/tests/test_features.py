"""Descriptor construction tests: PCA, resampling, keypoints, lookup, fusion.

Derived expectations are either frozen literals computed by hand or come
from independent re-implementations (eigendecomposition of the scatter
matrix, brute-force nearest neighbor) local to this file.
"""

import numpy as np
import pytest

from xmodreg import (
    CameraIntrinsics,
    ConfigurationError,
    DepthMap,
    DescriptorSet,
    FeatureLayer,
    FeatureMap,
    InsufficientDataError,
    InvalidInputError,
    KeypointSet,
    PointCloud,
    assemble_diffusion_descriptors,
    bilinear_sample,
    fit_joint_pca,
    fuse,
    lookup_geometric,
    normalize_rows,
    pca_reduce,
    sample_grid_keypoints,
    unproject_pixel,
    upsample_layer,
)


def make_map(layers, modality="rgb", grid=None):
    return FeatureMap(tuple(FeatureLayer(i, d) for i, d in layers), modality, grid)


class TestPcaReduce:
    def test_full_dimension_is_lossless(self, rng):
        x = rng.normal(size=(50, 12))
        reduced, basis = pca_reduce(x, 12)
        recon = basis.mean + reduced @ basis.components
        assert np.max(np.abs(recon - x)) < 1e-6

    def test_line_collapses_to_one_exact_dimension(self):
        t = np.array([0.0, 1.0, 2.0, 3.0])
        x = np.stack([t, 2.0 * t], axis=1)  # all points on y = 2x
        reduced, basis = pca_reduce(x, 1)
        d_in = np.abs(t[:, None] - t[None, :]) * np.sqrt(5.0)
        d_out = np.abs(reduced[:, 0][:, None] - reduced[:, 0][None, :])
        np.testing.assert_allclose(d_out, d_in, atol=1e-9)
        assert not basis.rank_deficient

    def test_reconstruction_error_equals_discarded_spectrum(self, rng):
        x = rng.normal(size=(500, 40)) @ np.diag(rng.uniform(0.2, 3.0, 40))
        k = 8
        reduced, basis = pca_reduce(x, k)
        recon = basis.mean + reduced @ basis.components
        mse = np.sum((x - recon) ** 2) / x.shape[0]

        # oracle: eigenvalues of the scatter matrix, computed independently
        centered = x - x.mean(axis=0)
        lam = np.sort(np.linalg.eigvalsh(centered.T @ centered))[::-1]
        expected = lam[k:].sum() / x.shape[0]
        assert mse == pytest.approx(expected, rel=1e-9)
        np.testing.assert_allclose(basis.eigenvalues, lam[:k], rtol=1e-9)

    def test_sign_convention_and_row_order_invariance(self, rng):
        x = rng.normal(size=(80, 10))
        _, b1 = pca_reduce(x, 4)
        _, b2 = pca_reduce(x[rng.permutation(80)], 4)
        for row in b1.components:
            assert row[np.argmax(np.abs(row))] > 0.0
        np.testing.assert_allclose(b2.components, b1.components, atol=1e-9)
        np.testing.assert_allclose(b2.eigenvalues, b1.eigenvalues, rtol=1e-9)

    def test_rank_deficient_data_pads_with_zeros(self, rng):
        basis_vecs = rng.normal(size=(2, 5))
        coeffs = rng.normal(size=(30, 2))
        x = coeffs @ basis_vecs  # rank 2 in a 5-dim space
        reduced, basis = pca_reduce(x, 4)
        assert basis.rank_deficient
        np.testing.assert_array_equal(basis.components[2:], 0.0)
        np.testing.assert_allclose(reduced[:, 2:], 0.0, atol=1e-9)

    def test_input_validation(self, rng):
        with pytest.raises(InvalidInputError):
            pca_reduce(rng.normal(size=(10, 4)), 0)
        with pytest.raises(InvalidInputError):
            pca_reduce(rng.normal(size=(10, 4)), 5)
        with pytest.raises(InsufficientDataError):
            pca_reduce(rng.normal(size=(1, 4)), 2)
        bad = np.ones((5, 3))
        bad[0, 0] = np.nan
        with pytest.raises(InvalidInputError):
            pca_reduce(bad, 2)


class TestResampling:
    def test_upsample_constant_stays_constant(self):
        data = np.full((3, 4, 5), 2.5)
        out = upsample_layer(data, (16, 20))
        np.testing.assert_array_equal(out, np.full((3, 16, 20), 2.5))

    def test_upsample_same_size_is_identity(self, rng):
        data = rng.normal(size=(2, 6, 7))
        np.testing.assert_array_equal(upsample_layer(data, (6, 7)), data)

    def test_upsample_two_by_two_frozen_grid(self):
        # source plane 1 + x + 2y; half-pixel-center coords for 2 -> 4 are
        # {0, 0.25, 0.75, 1} after edge clamping
        data = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        expected = np.array(
            [
                [1.0, 1.25, 1.75, 2.0],
                [1.5, 1.75, 2.25, 2.5],
                [2.5, 2.75, 3.25, 3.5],
                [3.0, 3.25, 3.75, 4.0],
            ]
        )
        np.testing.assert_allclose(upsample_layer(data, (4, 4))[0], expected, atol=1e-12)

    def test_upsample_rejects_shrinking(self):
        with pytest.raises(InvalidInputError):
            upsample_layer(np.zeros((1, 4, 4)), (2, 4))

    def test_bilinear_sample_hits_grid_points(self, rng):
        data = rng.normal(size=(3, 5, 6))
        xs = np.array([0.0, 2.0, 5.0])
        ys = np.array([0.0, 3.0, 4.0])
        out = bilinear_sample(data, xs, ys)
        np.testing.assert_array_equal(out, data[:, [0, 3, 4], [0, 2, 5]].T)

    def test_bilinear_sample_midpoint_averages(self):
        data = np.array([[[0.0, 2.0]]])
        out = bilinear_sample(data, np.array([0.5]), np.array([0.0]))
        assert out[0, 0] == pytest.approx(1.0)

    def test_bilinear_sample_clamps_to_edges(self, rng):
        data = rng.normal(size=(2, 3, 3))
        out = bilinear_sample(data, np.array([-5.0, 99.0]), np.array([-5.0, 99.0]))
        np.testing.assert_array_equal(out[0], data[:, 0, 0])
        np.testing.assert_array_equal(out[1], data[:, 2, 2])


class TestKeypoints:
    def test_four_by_four_stride_two(self):
        kps = sample_grid_keypoints(4, 4, 2)
        expected = np.array([[1, 1], [3, 1], [1, 3], [3, 3]])
        np.testing.assert_array_equal(kps.pixels, expected)

    def test_vga_stride_sixteen_counts_and_positions(self):
        kps = sample_grid_keypoints(640, 480, 16)
        assert len(kps) == (640 // 16) * (480 // 16) == 1200
        np.testing.assert_array_equal(kps.pixels[0], [8, 8])
        np.testing.assert_array_equal(kps.pixels[-1], [632, 472])
        us = np.unique(kps.pixels[:, 0])
        assert np.all(np.diff(us) == 16)

    def test_stride_larger_than_image_still_yields_one(self):
        kps = sample_grid_keypoints(5, 3, 8)
        assert len(kps) == 1
        np.testing.assert_array_equal(kps.pixels[0], [4, 2])

    def test_bounds_and_duplicates_rejected(self):
        with pytest.raises(InvalidInputError):
            KeypointSet(np.array([[5, 0]]), 1, 5, 5)
        with pytest.raises(InvalidInputError):
            KeypointSet(np.array([[1, 1], [1, 1]]), 1, 5, 5)

    def test_take_preserves_metadata(self):
        kps = sample_grid_keypoints(8, 8, 4)
        sub = kps.take(np.array([0, 3]))
        assert sub.stride == 4 and sub.width == 8 and sub.height == 8
        assert len(sub) == 2


class TestAssembly:
    def test_grid_sized_layer_passes_cell_through(self, rng):
        data = rng.normal(size=(16, 4, 5)).astype(np.float32)
        fm = make_map([(0, data)], grid=(4, 5))
        kps = KeypointSet(np.array([[2, 1]]), 1, 5, 4)
        out = assemble_diffusion_descriptors(fm, kps, pca_dim=16, layer_ids=(0,))
        cell = data[:, 1, 2].astype(np.float64)
        np.testing.assert_allclose(out.descriptors[0], cell / np.linalg.norm(cell), atol=1e-12)

    def test_two_identical_layers_duplicate_block(self, rng):
        data = rng.normal(size=(8, 3, 3)).astype(np.float32)
        fm = make_map([(0, data), (1, data)], grid=(3, 3))
        kps = KeypointSet(np.array([[1, 1]]), 1, 3, 3)
        out = assemble_diffusion_descriptors(fm, kps, pca_dim=8, layer_ids=(0, 1))
        d = out.descriptors[0]
        np.testing.assert_allclose(d[:8], d[8:], atol=1e-12)
        assert np.linalg.norm(d) == pytest.approx(1.0)

    def test_keypoint_between_cells_blends(self):
        # cells [1, 0] and [0, 1] on a 1x2 grid; pixel u=1 on a width-4 image
        # maps to grid x = 0.25
        data = np.array([[[1.0, 0.0]], [[0.0, 1.0]]], dtype=np.float32)
        fm = make_map([(0, data)], grid=(1, 2))
        kps = KeypointSet(np.array([[1, 0]]), 1, 4, 1)
        out = assemble_diffusion_descriptors(fm, kps, pca_dim=2, layer_ids=(0,))
        expected = np.array([0.75, 0.25]) / np.linalg.norm([0.75, 0.25])
        np.testing.assert_allclose(out.descriptors[0], expected, atol=1e-12)

    def test_descriptors_are_unit_norm(self, rng):
        data = rng.normal(size=(20, 6, 8)).astype(np.float32)
        fm = make_map([(0, data)], grid=(12, 16))
        kps = sample_grid_keypoints(64, 48, 8)
        out = assemble_diffusion_descriptors(fm, kps, pca_dim=5, layer_ids=(0,))
        np.testing.assert_allclose(np.linalg.norm(out.descriptors, axis=1), 1.0, atol=1e-6)

    def test_joint_basis_reduces_both_maps_identically(self, rng):
        da = rng.normal(size=(12, 4, 4)).astype(np.float32)
        db = rng.normal(size=(12, 4, 4)).astype(np.float32)
        fa = make_map([(0, da)], "rgb", grid=(4, 4))
        fb = make_map([(0, db)], "depth", grid=(4, 4))
        bases = fit_joint_pca(fa, fb, (0,), 3)
        assert set(bases) == {0}

        kps = KeypointSet(np.array([[2, 2]]), 1, 4, 4)
        out = assemble_diffusion_descriptors(fa, kps, pca_dim=3, layer_ids=(0,), bases=bases)
        cell = da[:, 2, 2].astype(np.float64)
        proj = bases[0].project(cell[None, :])[0]
        np.testing.assert_allclose(out.descriptors[0], proj / np.linalg.norm(proj), atol=1e-9)

    def test_joint_fit_skips_layers_already_at_target(self, rng):
        da = rng.normal(size=(4, 2, 2)).astype(np.float32)
        fa = make_map([(0, da)], "rgb")
        fb = make_map([(0, da)], "depth")
        assert fit_joint_pca(fa, fb, (0,), 4) == {}

    def test_missing_layer_and_grid_raise(self, rng):
        data = rng.normal(size=(4, 2, 2)).astype(np.float32)
        fm = make_map([(0, data)], grid=(2, 2))
        kps = KeypointSet(np.array([[0, 0]]), 1, 2, 2)
        with pytest.raises(ConfigurationError):
            assemble_diffusion_descriptors(fm, kps, pca_dim=4, layer_ids=(7,))
        with pytest.raises(ConfigurationError):
            assemble_diffusion_descriptors(make_map([(0, data)]), kps, pca_dim=4, layer_ids=(0,))

    def test_no_keypoints_raises(self, rng):
        data = rng.normal(size=(4, 2, 2)).astype(np.float32)
        fm = make_map([(0, data)], grid=(2, 2))
        kps = KeypointSet(np.zeros((0, 2), dtype=np.int64), 1, 2, 2)
        with pytest.raises(InsufficientDataError):
            assemble_diffusion_descriptors(fm, kps, pca_dim=4, layer_ids=(0,))


class TestLookupGeometric:
    def setup_method(self):
        self.intr = CameraIntrinsics(fx=100.0, fy=100.0, cx=8.0, cy=6.0, width=16, height=12)

    def test_exact_hit_returns_normalized_vector(self):
        kps = KeypointSet(np.array([[8, 6]]), 1, 16, 12)
        depth = DepthMap(np.full((12, 16), 2.0, dtype=np.float32))
        cloud = PointCloud(np.array([[0.0, 0.0, 2.0], [5.0, 5.0, 5.0]]))
        vecs = np.array([[3.0, 4.0], [1.0, 0.0]])
        out = lookup_geometric(kps, depth, self.intr, cloud, vecs, tau_g=0.1)
        np.testing.assert_allclose(out.descriptors[0], [0.6, 0.8], atol=1e-12)
        assert not out.zero_geometry_mask[0]

    def test_miss_beyond_cutoff_zeroes_and_masks(self):
        kps = KeypointSet(np.array([[8, 6]]), 1, 16, 12)
        depth = DepthMap(np.full((12, 16), 2.0, dtype=np.float32))
        cloud = PointCloud(np.array([[0.0, 0.0, 2.5]]))  # 0.5 m away
        out = lookup_geometric(kps, depth, self.intr, cloud, np.ones((1, 3)), tau_g=0.25)
        np.testing.assert_array_equal(out.descriptors[0], 0.0)
        assert out.zero_geometry_mask[0]

    def test_invalid_depth_keypoint_masked(self):
        kps = KeypointSet(np.array([[0, 0], [8, 6]]), 1, 16, 12)
        d = np.full((12, 16), 2.0, dtype=np.float32)
        d[0, 0] = 0.0
        out = lookup_geometric(
            kps, DepthMap(d), self.intr, PointCloud(np.array([[0.0, 0.0, 2.0]])),
            np.array([[1.0, 1.0]]), tau_g=0.1,
        )
        assert out.zero_geometry_mask[0] and not out.zero_geometry_mask[1]
        np.testing.assert_array_equal(out.descriptors[0], 0.0)

    def test_matches_brute_force_nearest(self, rng):
        kps = sample_grid_keypoints(16, 12, 2)
        depth = DepthMap(rng.uniform(0.5, 4.0, size=(12, 16)).astype(np.float32))
        cloud_pts = rng.uniform([-1, -1, 0.5], [1, 1, 4.0], size=(300, 3))
        vecs = rng.normal(size=(300, 5))
        tau = 0.35
        out = lookup_geometric(kps, depth, self.intr, PointCloud(cloud_pts), vecs, tau)

        lifted = unproject_pixel(
            kps.pixels.astype(np.float64), depth.at(kps.pixels), self.intr
        )
        for i, p in enumerate(lifted):
            d2 = np.linalg.norm(cloud_pts - p, axis=1)
            j = int(np.argmin(d2))
            if d2[j] <= tau:
                expected = vecs[j] / np.linalg.norm(vecs[j])
                np.testing.assert_allclose(out.descriptors[i], expected, atol=1e-9)
                assert not out.zero_geometry_mask[i]
            else:
                np.testing.assert_array_equal(out.descriptors[i], 0.0)
                assert out.zero_geometry_mask[i]

    def test_validation(self):
        kps = KeypointSet(np.array([[0, 0]]), 1, 16, 12)
        depth = DepthMap(np.ones((12, 16), dtype=np.float32))
        cloud = PointCloud(np.array([[0.0, 0.0, 1.0]]))
        with pytest.raises(InvalidInputError):
            lookup_geometric(kps, depth, self.intr, cloud, np.ones((2, 3)), 0.1)
        with pytest.raises(InsufficientDataError):
            lookup_geometric(kps, depth, self.intr, PointCloud(np.zeros((0, 3))), np.zeros((0, 3)), 0.1)
        with pytest.raises(InvalidInputError):
            lookup_geometric(kps, depth, self.intr, cloud, np.ones((1, 3)), 0.0)


class TestFuse:
    def make_sets(self, rng, n=6, d1=4, d2=3):
        kps = sample_grid_keypoints(2 * n, 2, 2).take(np.arange(n))
        diff = DescriptorSet(normalize_rows(rng.normal(size=(n, d1))), kps, np.zeros(n, bool))
        geo = DescriptorSet(normalize_rows(rng.normal(size=(n, d2))), kps, np.zeros(n, bool))
        return diff, geo

    def test_blocks_scaled_exactly(self, rng):
        diff, geo = self.make_sets(rng)
        out = fuse(diff, geo, 0.3)
        np.testing.assert_array_equal(out.descriptors[:, :4], 0.3 * diff.descriptors)
        np.testing.assert_array_equal(out.descriptors[:, 4:], 0.7 * geo.descriptors)

    def test_distance_splits_by_weight(self, rng):
        diff, geo = self.make_sets(rng, n=10)
        out = fuse(diff, geo, 0.5)
        i, j = 2, 7
        lhs = np.sum((out.descriptors[i] - out.descriptors[j]) ** 2)
        rhs = 0.25 * np.sum((diff.descriptors[i] - diff.descriptors[j]) ** 2) + 0.25 * np.sum(
            (geo.descriptors[i] - geo.descriptors[j]) ** 2
        )
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_w_bounds(self, rng):
        diff, geo = self.make_sets(rng)
        with pytest.raises(InvalidInputError):
            fuse(diff, geo, -0.1)
        with pytest.raises(InvalidInputError):
            fuse(diff, geo, 1.1)

    def test_misaligned_keypoints_rejected(self, rng):
        diff, geo = self.make_sets(rng)
        other = DescriptorSet(
            geo.descriptors, geo.keypoints.take(np.arange(len(geo))[::-1]), geo.zero_geometry_mask
        )
        with pytest.raises(InvalidInputError):
            fuse(diff, other, 0.5)

    def test_points_carried_through(self, rng):
        diff, geo = self.make_sets(rng)
        pts = rng.normal(size=(len(diff), 3))
        diff = DescriptorSet(diff.descriptors, diff.keypoints, diff.zero_geometry_mask, pts)
        out = fuse(diff, geo, 0.5)
        np.testing.assert_array_equal(out.points, pts)

    def test_geometry_mask_comes_from_geometric_side(self, rng):
        diff, geo = self.make_sets(rng)
        mask = np.zeros(len(geo), bool)
        mask[1] = True
        geo = DescriptorSet(geo.descriptors, geo.keypoints, mask)
        out = fuse(diff, geo, 0.5)
        np.testing.assert_array_equal(out.zero_geometry_mask, mask)
