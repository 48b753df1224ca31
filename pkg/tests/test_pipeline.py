"""End-to-end pair registration tests on planted synthetic scenes."""

import numpy as np
import pytest

from xmodreg import (
    ConfigurationError,
    InsufficientDataError,
    InvalidInputError,
    PairInputs,
    PointCloud,
    SynthSpec,
    generate_pair,
    match_pair,
    override_config,
    pose_errors,
    register_pair,
    solve_pair,
)

SMALL = dict(
    n_points=64,
    image_height=64,
    image_width=64,
    stride=16,
    descriptor_dim=8,
    geometric_dim=4,
)


def make_bundle(**kw):
    merged = dict(SMALL)
    merged.update(kw)
    return generate_pair(SynthSpec(**merged))


def fast(cfg, **kw):
    return override_config(cfg, iterations=500, **kw)


class TestRegisterPair:
    def test_noise_free_pair_recovers_exact_pose(self):
        bundle = make_bundle(rng_seed=0)
        report = register_pair(bundle.inputs(), fast(bundle.config))
        assert report.result.success
        re, te = pose_errors(report.result.pose, bundle.gt_pose)
        assert re < 1e-6
        assert te < 1e-9
        assert report.metrics.inlier_ratio == 1.0
        assert report.metrics.rr_hit

    def test_equals_match_then_solve(self):
        bundle = make_bundle(rng_seed=1)
        cfg = fast(bundle.config)
        inputs = bundle.inputs()
        report = register_pair(inputs, cfg)
        mo = match_pair(inputs, cfg)
        result = solve_pair(
            mo.correspondences, cfg, inputs.img_intrinsics, img_depth=inputs.img_depth
        )
        np.testing.assert_array_equal(
            report.result.pose.as_matrix(), result.pose.as_matrix()
        )
        np.testing.assert_array_equal(report.result.inlier_indices, result.inlier_indices)
        np.testing.assert_array_equal(
            report.correspondences.img_pixels, mo.correspondences.img_pixels
        )

    def test_rerun_is_bitwise_identical(self):
        bundle = make_bundle(rng_seed=2, inlier_fraction=0.6)
        cfg = fast(bundle.config)
        a = register_pair(bundle.inputs(), cfg)
        b = register_pair(bundle.inputs(), cfg)
        np.testing.assert_array_equal(a.result.pose.as_matrix(), b.result.pose.as_matrix())
        np.testing.assert_array_equal(a.result.inlier_indices, b.result.inlier_indices)

    def test_worker_count_does_not_change_result(self):
        bundle = make_bundle(rng_seed=3, inlier_fraction=0.5)
        cfg = fast(bundle.config)
        a = register_pair(bundle.inputs(), cfg, workers=1)
        b = register_pair(bundle.inputs(), cfg, workers=4)
        np.testing.assert_array_equal(a.result.pose.as_matrix(), b.result.pose.as_matrix())
        np.testing.assert_array_equal(a.result.inlier_indices, b.result.inlier_indices)

    def test_metrics_need_ground_truth(self):
        bundle = make_bundle(rng_seed=4)
        inputs = bundle.inputs()
        stripped = PairInputs(
            img_features=inputs.img_features,
            img_intrinsics=inputs.img_intrinsics,
            dep_features=inputs.dep_features,
            dep_intrinsics=inputs.dep_intrinsics,
            cloud=inputs.cloud,
            view_pose=inputs.view_pose,
            img_depth=inputs.img_depth,
        )
        report = register_pair(stripped, fast(bundle.config))
        assert report.metrics is None
        assert report.result.success

    def test_stage_timings_in_order(self):
        bundle = make_bundle(rng_seed=5)
        report = register_pair(bundle.inputs(), fast(bundle.config))
        names = [t.name for t in report.timings]
        assert names == [
            "render", "densify", "keypoints", "descriptors",
            "geometric", "match", "solve", "metrics",
        ]
        assert all(t.ms >= 0.0 for t in report.timings)


class TestSolverSelection:
    def test_auto_uses_kabsch_with_image_depth(self):
        bundle = make_bundle(rng_seed=6)
        report = register_pair(bundle.inputs(), fast(bundle.config))
        assert report.result.solver_used == "kabsch"

    def test_auto_falls_back_to_pnp_without_image_depth(self):
        bundle = make_bundle(rng_seed=6)
        inputs = bundle.inputs()
        no_depth = PairInputs(
            img_features=inputs.img_features,
            img_intrinsics=inputs.img_intrinsics,
            dep_features=inputs.dep_features,
            dep_intrinsics=inputs.dep_intrinsics,
            cloud=inputs.cloud,
            view_pose=inputs.view_pose,
            gt_pose=inputs.gt_pose,
            gt_img_depth=inputs.gt_img_depth,
        )
        report = register_pair(no_depth, fast(bundle.config))
        assert report.result.solver_used == "pnp"
        assert report.result.success
        re, _ = pose_errors(report.result.pose, bundle.gt_pose)
        assert re < 1e-4

    def test_explicit_solver_override(self):
        bundle = make_bundle(rng_seed=7)
        report = register_pair(bundle.inputs(), fast(bundle.config), solver="pnp")
        assert report.result.solver_used == "pnp"

    def test_unknown_solver_name(self):
        bundle = make_bundle(rng_seed=7)
        with pytest.raises(ConfigurationError):
            register_pair(bundle.inputs(), fast(bundle.config), solver="icp")


class TestGeometryHandling:
    def strip_geometry(self, inputs, keep_img=False, keep_cloud=False):
        return PairInputs(
            img_features=inputs.img_features,
            img_intrinsics=inputs.img_intrinsics,
            dep_features=inputs.dep_features,
            dep_intrinsics=inputs.dep_intrinsics,
            cloud=inputs.cloud,
            view_pose=inputs.view_pose,
            img_depth=inputs.img_depth,
            img_geom_cloud=inputs.img_geom_cloud if keep_img else None,
            img_geom_vectors=inputs.img_geom_vectors if keep_img else None,
            cloud_geom_cloud=inputs.cloud_geom_cloud if keep_cloud else None,
            cloud_geom_vectors=inputs.cloud_geom_vectors if keep_cloud else None,
            gt_pose=inputs.gt_pose,
            gt_img_depth=inputs.gt_img_depth,
        )

    def test_fusion_marks_used_geometry(self):
        bundle = make_bundle(rng_seed=8)
        report = register_pair(bundle.inputs(), fast(bundle.config))
        assert report.used_geometry

    def test_w_one_skips_fusion_and_matches_descriptor_only_run(self):
        bundle = make_bundle(rng_seed=8)
        with_geo = register_pair(bundle.inputs(), fast(bundle.config, w=1.0))
        without = register_pair(
            self.strip_geometry(bundle.inputs()), fast(bundle.config, w=1.0)
        )
        assert not with_geo.used_geometry
        np.testing.assert_array_equal(
            with_geo.correspondences.img_pixels, without.correspondences.img_pixels
        )
        np.testing.assert_array_equal(
            with_geo.result.pose.as_matrix(), without.result.pose.as_matrix()
        )

    def test_same_pairing_with_and_without_geometry_on_clean_pairs(self):
        bundle = make_bundle(rng_seed=9)
        fused = register_pair(bundle.inputs(), fast(bundle.config))
        plain = register_pair(
            self.strip_geometry(bundle.inputs()), fast(bundle.config)
        )
        np.testing.assert_array_equal(
            fused.correspondences.depth_pixels, plain.correspondences.depth_pixels
        )

    def test_half_supplied_geometry_is_rejected(self):
        bundle = make_bundle(rng_seed=9)
        inputs = bundle.inputs()
        with pytest.raises(InvalidInputError):
            PairInputs(
                img_features=inputs.img_features,
                img_intrinsics=inputs.img_intrinsics,
                dep_features=inputs.dep_features,
                dep_intrinsics=inputs.dep_intrinsics,
                cloud=inputs.cloud,
                img_geom_cloud=inputs.img_geom_cloud,
            )
        one_side = self.strip_geometry(inputs, keep_img=True)
        with pytest.raises(ConfigurationError):
            match_pair(one_side, fast(bundle.config))

    def test_geometry_only_matching_needs_vectors(self):
        bundle = make_bundle(rng_seed=10)
        with pytest.raises(ConfigurationError):
            match_pair(
                self.strip_geometry(bundle.inputs()), fast(bundle.config, w=0.0)
            )

    def test_fusion_needs_image_depth_to_lift_keypoints(self):
        bundle = make_bundle(rng_seed=10)
        inputs = bundle.inputs()
        no_depth = PairInputs(
            img_features=inputs.img_features,
            img_intrinsics=inputs.img_intrinsics,
            dep_features=inputs.dep_features,
            dep_intrinsics=inputs.dep_intrinsics,
            cloud=inputs.cloud,
            view_pose=inputs.view_pose,
            img_geom_cloud=inputs.img_geom_cloud,
            img_geom_vectors=inputs.img_geom_vectors,
            cloud_geom_cloud=inputs.cloud_geom_cloud,
            cloud_geom_vectors=inputs.cloud_geom_vectors,
        )
        with pytest.raises(ConfigurationError):
            match_pair(no_depth, fast(bundle.config))


class TestDepthSideHandling:
    def test_pre_rendered_depth_is_used_verbatim(self):
        bundle = make_bundle(rng_seed=11)
        inputs = bundle.inputs()
        mo = match_pair(inputs, fast(bundle.config))
        with_own = PairInputs(
            img_features=inputs.img_features,
            img_intrinsics=inputs.img_intrinsics,
            dep_features=inputs.dep_features,
            dep_intrinsics=inputs.dep_intrinsics,
            cloud=inputs.cloud,
            view_pose=inputs.view_pose,
            img_depth=inputs.img_depth,
            dep_depth=mo.rendered_depth,
            img_geom_cloud=inputs.img_geom_cloud,
            img_geom_vectors=inputs.img_geom_vectors,
            cloud_geom_cloud=inputs.cloud_geom_cloud,
            cloud_geom_vectors=inputs.cloud_geom_vectors,
        )
        mo2 = match_pair(with_own, fast(bundle.config))
        assert mo2.rendered_depth is mo.rendered_depth
        np.testing.assert_array_equal(
            mo2.correspondences.img_pixels, mo.correspondences.img_pixels
        )

    def test_keypoints_without_depth_are_dropped(self):
        bundle = make_bundle(rng_seed=12)
        inputs = bundle.inputs()
        # keep only cloud points that render into the left half of the image
        cam = inputs.view_pose.inverse().apply(inputs.cloud.points)
        from xmodreg import project_point

        px, _ = project_point(cam, inputs.dep_intrinsics)
        keep = px[:, 0] < 32
        half = PairInputs(
            img_features=inputs.img_features,
            img_intrinsics=inputs.img_intrinsics,
            dep_features=inputs.dep_features,
            dep_intrinsics=inputs.dep_intrinsics,
            cloud=PointCloud(inputs.cloud.points[keep]),
            view_pose=inputs.view_pose,
            img_depth=inputs.img_depth,
        )
        mo = match_pair(half, fast(bundle.config))
        assert len(mo.dep_descriptors) < 16
        assert np.all(mo.correspondences.depth_pixels[:, 0] < 32 + 16)

    def test_fully_invalid_depth_side_raises(self):
        bundle = make_bundle(rng_seed=13)
        inputs = bundle.inputs()
        empty = PairInputs(
            img_features=inputs.img_features,
            img_intrinsics=inputs.img_intrinsics,
            dep_features=inputs.dep_features,
            dep_intrinsics=inputs.dep_intrinsics,
            cloud=PointCloud(np.zeros((0, 3))),
            view_pose=inputs.view_pose,
            img_depth=inputs.img_depth,
        )
        with pytest.warns(UserWarning):
            with pytest.raises(InsufficientDataError):
                match_pair(empty, fast(bundle.config))
