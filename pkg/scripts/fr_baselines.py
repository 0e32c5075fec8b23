#!/usr/bin/env python3
"""Compare the trained FR hierarchy against two simpler baselines.

SMFR: one model, lower regions rendered from random point subsets of
matching size (strict subsetting, nothing retrained). MMFR: an independent
CE-pruned model per level with all parameters free (no subsetting; storage
grows with every level). Reports per-region quality and storage.

These baselines are experiment-only; the library API ships the subsetting
representation with selective multi-versioning.
"""

import sys

import numpy as np

from fovsplat import fixtures, render
from fovsplat.foveation import build_foveation_map
from fovsplat.hvs import build_pooling_map, hvsq
from fovsplat.pruning import TrainConfig, compute_ce, prune_step
from fovsplat.splat_io import fsplat_nbytes


def region_quality(model_for_level, fix, refs, fmap, pooling, hvs):
    vals = []
    for lv in range(1, 5):
        mask = fmap.rendered_mask(lv)
        model, level = model_for_level(lv)
        per_cam = [
            hvsq(ref, render(model, cam, level, fix.render_config).image, pooling, mask, hvs)
            for cam, ref in zip(fix.cameras, refs)
        ]
        vals.append(float(np.mean(per_cam)))
    return vals


def main() -> int:
    fix = fixtures.build_plane_fixture()
    l1 = fixtures.build_l1_model(fix).model
    fr = fixtures.build_fr_model(fix, l1).model
    refs = [render(fix.dense, c, 1, fix.render_config).image for c in fix.cameras]
    fmap = build_foveation_map(fixtures.FR_FOVEATION, fixtures.plane_display(), fix.render_config.tile_size)
    hvs = fixtures.FR_HVS
    pooling = build_pooling_map(fixtures.plane_display(), hvs.pooling_rate, hvs.min_radius, hvs.max_radius)
    sizes = fr.level_sizes

    # SMFR: random subsets of the level-1 model at the trained level sizes
    rng = np.random.default_rng(0)
    smfr_subsets = {1: l1}
    for lv in range(2, 5):
        keep = np.sort(rng.choice(l1.n_points, size=sizes[lv - 1], replace=False))
        smfr_subsets[lv] = l1.subset(keep)

    # MMFR: independent CE prunes of the level-1 model down to matching sizes
    mmfr = {1: l1}
    for lv in range(2, 5):
        m = mmfr[lv - 1].copy()
        while m.n_points > sizes[lv - 1]:
            frac = min(0.2, 1.0 - sizes[lv - 1] / m.n_points)
            if int(frac * m.n_points) < 1:
                break
            scores = compute_ce(m, fix.cameras, 1, fix.render_config)
            m = prune_step(m, scores, frac)
        mmfr[lv] = m

    methods = {
        "SMFR": lambda lv: (smfr_subsets[lv], 1),
        "MMFR": lambda lv: (mmfr[lv], 1),
        "ours": lambda lv: (fr, lv),
    }
    storage = {
        "SMFR": fsplat_nbytes(l1.n_points, l1.sh_degree, 0),
        "MMFR": sum(fsplat_nbytes(mmfr[lv].n_points, l1.sh_degree, 0) for lv in range(1, 5)),
        "ours": fsplat_nbytes(fr.n_points, fr.sh_degree, fr.n_overrides),
    }
    print(f"{'method':>6}  {'storage':>9}  " + "  ".join(f"{'L' + str(lv) + ' HVSQ':>10}" for lv in range(1, 5)))
    for name, getter in methods.items():
        vals = region_quality(getter, fix, refs, fmap, pooling, hvs)
        print(f"{name:>6}  {storage[name]:9d}  " + "  ".join(f"{v:10.3e}" for v in vals))
    return 0


if __name__ == "__main__":
    sys.exit(main())
