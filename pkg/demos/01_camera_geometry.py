#!/usr/bin/env python3
"""Pinhole cameras, rigid poses, and point cloud basics.

Everything downstream (rendering, matching, solving) is built on the three
types shown here: CameraIntrinsics, Pose, and PointCloud.
"""

import numpy as np

from xmodreg import (
    CameraIntrinsics,
    PointCloud,
    Pose,
    pose_errors,
    project_point,
    unproject_pixel,
    voxel_downsample,
)


def main():
    rng = np.random.default_rng(0)

    # a 640x480 camera with identical focal lengths and a centered
    # principal point
    intr = CameraIntrinsics(fx=570.0, fy=570.0, cx=320.0, cy=240.0,
                            width=640, height=480)
    print("camera matrix:\n", intr.matrix)

    # project a batch of camera-frame points to pixels, then lift them back
    points = np.array([[0.0, 0.0, 2.0], [0.5, -0.25, 1.5], [-0.8, 0.4, 3.0]])
    pixels, depths = project_point(points, intr)
    print("\nprojected pixels:\n", pixels)
    print("depths:", depths)

    recovered = unproject_pixel(pixels, depths, intr)
    print("max project/unproject roundtrip error:",
          np.abs(recovered - points).max())

    # a pose maps camera coordinates into the cloud frame; composition and
    # inverse behave like 4x4 homogeneous matrices without ever leaving
    # the rotation manifold
    theta = np.radians(30.0)
    rot_z = np.array([
        [np.cos(theta), -np.sin(theta), 0.0],
        [np.sin(theta), np.cos(theta), 0.0],
        [0.0, 0.0, 1.0],
    ])
    a = Pose(rot_z, np.array([1.0, 0.0, 0.0]))
    b = Pose(np.eye(3), np.array([0.0, 2.0, 0.0]))
    ab = a @ b
    print("\ncomposed translation:", ab.translation)
    print("inverse undoes it:", (ab @ ab.inverse()).as_matrix()[:3, 3])

    identity_drift = pose_errors(ab @ ab.inverse(), Pose.identity())
    print("rotation/translation drift after compose+invert:", identity_drift)

    # rigid maps preserve distances; verify on a random cloud
    cloud = PointCloud(rng.normal(size=(500, 3)))
    moved = PointCloud(a.apply(cloud.points))
    d_before = np.linalg.norm(cloud.points[0] - cloud.points[1])
    d_after = np.linalg.norm(moved.points[0] - moved.points[1])
    print("\npairwise distance before/after a rigid move:",
          d_before, d_after)

    # voxel downsampling merges points that share a grid cell and reports
    # which cell each original point fell into
    dense = PointCloud(rng.uniform(0.0, 1.0, size=(5000, 3)))
    sparse, index_map = voxel_downsample(dense, voxel=0.2)
    print("\nvoxel downsample: %d -> %d points" % (len(dense), len(sparse)))
    print("every original point maps to a kept centroid:",
          index_map.min() >= 0 and index_map.max() < len(sparse))


if __name__ == "__main__":
    main()
