#!/usr/bin/env python3
"""From feature tensors to cross-modality correspondences.

Dense per-layer feature tensors are reduced with a PCA fitted jointly over
both modalities, sampled at grid keypoints, optionally fused with local
geometric descriptors, and finally matched by mutual nearest neighbor.
"""

import numpy as np

from xmodreg import (
    DescriptorSet,
    FeatureLayer,
    FeatureMap,
    assemble_diffusion_descriptors,
    fit_joint_pca,
    fuse,
    mutual_nn_match,
    normalize_rows,
    sample_grid_keypoints,
)


def planted_maps(rng, grid, dim, swap_cells=()):
    """Two feature maps whose cells agree except at ``swap_cells``."""
    gh, gw = grid
    n = gh * gw
    base = normalize_rows(rng.normal(size=(n, dim)))
    other = base.copy()
    for a, b in zip(swap_cells, reversed(swap_cells)):
        other[a] = base[b]

    def tensor(vectors):
        return vectors.T.reshape(dim, gh, gw).astype(np.float32)

    img = FeatureMap((FeatureLayer(0, tensor(base)),), "rgb", grid)
    dep = FeatureMap((FeatureLayer(0, tensor(other)),), "depth", grid)
    return img, dep


def main():
    rng = np.random.default_rng(11)
    grid = (4, 6)
    stride = 16
    width, height = grid[1] * stride, grid[0] * stride

    # plant 24 cells that agree across modalities, then swap two on the
    # depth side so they become wrong matches
    img_fm, dep_fm = planted_maps(rng, grid, dim=32, swap_cells=(3, 20))

    kps = sample_grid_keypoints(width, height, stride)
    print("keypoints: %d on a %dx%d grid, first at %s" %
          (len(kps), grid[0], grid[1], kps.pixels[0]))

    # the PCA basis is fitted over BOTH maps so the reduced coordinates
    # live in one shared space; layers already at the target width pass
    # through untouched
    bases = fit_joint_pca(img_fm, dep_fm, layer_ids=(0,), target_dim=16)
    img_set = assemble_diffusion_descriptors(
        img_fm, kps, pca_dim=16, layer_ids=(0,), bases=bases)
    dep_set = assemble_diffusion_descriptors(
        dep_fm, kps, pca_dim=16, layer_ids=(0,), bases=bases)
    print("descriptor dim after reduction:", img_set.descriptors.shape[1])

    matches = mutual_nn_match(img_set, dep_set)
    wrong = np.flatnonzero(
        np.any(matches.img_pixels != matches.depth_pixels, axis=1))
    print("matched %d of %d keypoints, %d land on the swapped cells"
          % (len(matches), len(kps), len(wrong)))

    # geometric descriptors are a second, independent signal; fusing both
    # at weight w scales the blocks [w * dense, (1 - w) * geometric]
    geo = normalize_rows(rng.normal(size=(len(kps), 8)))
    geo_img = DescriptorSet(geo, kps, np.zeros(len(kps), dtype=bool))
    geo_dep = DescriptorSet(geo, kps, np.zeros(len(kps), dtype=bool))

    for w in (0.0, 0.5, 1.0):
        fused_img = fuse(img_set, geo_img, w)
        fused_dep = fuse(dep_set, geo_dep, w)
        m = mutual_nn_match(fused_img, fused_dep)
        correct = np.all(m.img_pixels == m.depth_pixels, axis=1).mean()
        print("w=%.1f -> %d matches, %.0f%% correct" %
              (w, len(m), 100.0 * correct))
    # at w=0 the clean geometric channel decides alone and every cell
    # matches itself again; at w=1 the two swapped cells stay wrong


if __name__ == "__main__":
    main()
