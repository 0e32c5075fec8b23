#!/usr/bin/env python3
"""Latency is predicted by tile intersections, not point count.

Builds a ladder of pruned models from the textured-plane fixture, plus
matched-point-count variants whose footprints differ (shrunken scales,
random prune), then simulates each workload and prints point count,
intersections, and pipeline cycles side by side with rank correlations.
"""

import sys

import numpy as np
from scipy.stats import spearmanr

from fovsplat import fixtures
from fovsplat.binning import bin_and_sort
from fovsplat.projection import project
from fovsplat.pruning import compute_ce, prune_step
from fovsplat.simulator import CostModel, SimFeatures, simulate


def model_suite(fix):
    """CE-prune ladder plus same-size variants with different footprints."""
    models = {"dense": fix.dense}
    current = fix.dense
    for i, frac in enumerate([0.15, 0.15, 0.15, 0.15, 0.15]):
        scores = compute_ce(current, fix.cameras, 1, fix.render_config)
        current = prune_step(current, scores, frac)
        models[f"ce-prune-{i + 1}"] = current

    mid = models["ce-prune-2"]
    shrunk = mid.copy()
    shrunk.scales = shrunk.scales * 0.7  # same points, smaller footprints
    models["shrunk-scales"] = shrunk

    rng = np.random.default_rng(0)
    keep = np.sort(rng.choice(fix.dense.n_points, size=mid.n_points, replace=False))
    models["random-prune"] = fix.dense.subset(keep)
    return models


def measure(models, fix):
    rows = []
    for name, model in models.items():
        points = model.n_points
        inter = 0
        cycles = 0
        for cam in fix.cameras:
            sp = project(model, cam, 1, fix.render_config)
            workloads, _ = bin_and_sort(sp, fix.render_config.tile_size, cam.width, cam.height)
            inter += sum(w.intersection_count for w in workloads)
            if workloads:
                cycles += simulate(workloads, CostModel(), SimFeatures()).makespan
        rows.append((name, points, inter, cycles))
    return rows


def main() -> int:
    fix = fixtures.build_plane_fixture()
    rows = measure(model_suite(fix), fix)
    print(f"{'model':>15}  {'points':>7}  {'intersections':>13}  {'cycles':>9}")
    for name, pts, inter, cyc in rows:
        print(f"{name:>15}  {pts:7d}  {inter:13d}  {cyc:9d}")
    pts = [r[1] for r in rows]
    inter = [r[2] for r in rows]
    cyc = [r[3] for r in rows]
    r_inter = spearmanr(inter, cyc).statistic
    r_pts = spearmanr(pts, cyc).statistic
    print(f"\nSpearman(intersections, cycles) = {r_inter:.4f}")
    print(f"Spearman(point count,  cycles) = {r_pts:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
