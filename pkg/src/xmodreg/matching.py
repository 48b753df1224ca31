"""Mutual nearest neighbor matching between two descriptor sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InvalidInputError
from .features import DescriptorSet


@dataclass(frozen=True)
class CorrespondenceSet:
    """Pixel-to-pixel matches with the depth side's 3D locations attached.

    Arrays are aligned row-wise: image pixel (u, v), depth pixel (u', v'),
    the cloud-frame point q the depth pixel lifts to, and the descriptor
    distance of the match.  Membership is one-to-one on both sides.
    """

    img_pixels: np.ndarray
    depth_pixels: np.ndarray
    points: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        ip = np.asarray(self.img_pixels, dtype=np.int64).reshape(-1, 2)
        dp = np.asarray(self.depth_pixels, dtype=np.int64).reshape(-1, 2)
        q = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        d = np.asarray(self.distances, dtype=np.float64).reshape(-1)
        n = ip.shape[0]
        if not (dp.shape[0] == q.shape[0] == d.shape[0] == n):
            raise InvalidInputError("correspondence arrays have mismatched lengths")
        if n:
            if np.unique(ip, axis=0).shape[0] != n or np.unique(dp, axis=0).shape[0] != n:
                raise InvalidInputError("correspondences are not one-to-one")
            if not (np.all(np.isfinite(q)) and np.all(np.isfinite(d))):
                raise InvalidInputError("non-finite correspondence data")
            if np.any(d < 0.0):
                raise InvalidInputError("negative descriptor distance")
        for a in (ip, dp, q, d):
            a.setflags(write=False)
        object.__setattr__(self, "img_pixels", ip)
        object.__setattr__(self, "depth_pixels", dp)
        object.__setattr__(self, "points", q)
        object.__setattr__(self, "distances", d)

    def __len__(self) -> int:
        return self.img_pixels.shape[0]

    @staticmethod
    def empty() -> "CorrespondenceSet":
        return CorrespondenceSet(
            np.zeros((0, 2), np.int64),
            np.zeros((0, 2), np.int64),
            np.zeros((0, 3)),
            np.zeros(0),
        )


def mutual_nn_match(img: DescriptorSet, dep: DescriptorSet) -> CorrespondenceSet:
    """Keep pairs that are each other's Euclidean nearest neighbor.

    Distance ties break toward the lowest index on either side; the result is
    ordered by ascending image keypoint index.  Either side being empty yields
    an empty set.  The depth side is expected to contain only keypoints with
    valid depth (the pipeline drops the rest before matching); its ``points``,
    when present, are carried into the correspondences.
    """
    if len(img) == 0 or len(dep) == 0:
        return CorrespondenceSet.empty()
    if img.descriptors.shape[1] != dep.descriptors.shape[1]:
        raise InvalidInputError("descriptor dimensions differ between the two sets")

    d = cdist(img.descriptors, dep.descriptors)  # (Ni, Nd)
    fwd = np.argmin(d, axis=1)  # first minimum = lowest index on ties
    bwd = np.argmin(d, axis=0)
    i = np.flatnonzero(bwd[fwd] == np.arange(len(img)))
    j = fwd[i]

    q = dep.points[j] if dep.points is not None else np.zeros((i.size, 3))
    return CorrespondenceSet(
        img.keypoints.pixels[i],
        dep.keypoints.pixels[j],
        q,
        d[i, j],
    )
