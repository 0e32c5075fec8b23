"""Canonical desk-scale fixtures shared by tests, scripts, and acceptance.

Everything here is deterministic: same seeds, same camera rigs, same
training schedules. The textured-plane chain is deliberately overcomplete
(about 900 points for a 96x96 view) so that level derivation has redundancy
to spend, mirroring how captured splat models are overparameterized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import Camera, DisplayGeometry
from .foveation import FoveationConfig, TrainFrResult, train_fr
from .hvs import HvsConfig
from .model import FrModel
from .projection import RenderConfig
from .pruning import PruneLoopResult, TrainConfig, fit_to_images, prune_loop
from .quality import psnr
from .rasterize import render
from .synthetic import make_synthetic_scene, oversized_splat_scene, plane_orbit_cameras, plane_target_image

# learning rates roughly 4x the capture-scale lineage defaults: desk-scale
# fits run for hundreds of steps, not tens of thousands
FAST_LR = dict(
    lr_position=6.4e-4,
    lr_scale=2e-2,
    lr_rotation=4e-3,
    lr_opacity=0.1,
    lr_sh=1e-2,
)

PLANE_POINTS = 900
PLANE_SEED = 1
PLANE_CAMERAS = 4
PLANE_RESOLUTION = 96

FR_DISPLAY_PPD = 4.0
FR_FOVEATION = FoveationConfig(
    level_count=4, region_starts=(0.0, 1.0, 4.0, 8.0), blend_band=0.75
)
FR_HVS = HvsConfig(pooling_rate=1.0)
FR_RENDER = RenderConfig(tile_size=8)


def plane_render_config() -> RenderConfig:
    return FR_RENDER


def plane_cameras(count: int = PLANE_CAMERAS) -> list[Camera]:
    return plane_orbit_cameras(count, width=PLANE_RESOLUTION, height=PLANE_RESOLUTION)


def plane_display(gaze=None) -> DisplayGeometry:
    return DisplayGeometry(PLANE_RESOLUTION, PLANE_RESOLUTION, FR_DISPLAY_PPD, gaze)


@dataclass
class PlaneFixture:
    dense: FrModel
    dense_psnr: float
    cameras: list[Camera]
    targets: list[np.ndarray]
    render_config: RenderConfig


def build_plane_fixture(points: int = PLANE_POINTS, seed: int = PLANE_SEED, fit_steps: int = 400) -> PlaneFixture:
    """Fit the overcomplete textured plane; the dense anchor of every chain."""
    scene = make_synthetic_scene("textured-plane", points, seed)
    cams = plane_cameras()
    rcfg = plane_render_config()
    targets = [plane_target_image(c) for c in cams]
    cfg = TrainConfig(iteration_budget=fit_steps, eval_interval=fit_steps, quality_loss="neg-psnr", **FAST_LR)
    dense = fit_to_images(scene, cams, targets, cfg, render_config=rcfg).model
    value = float(np.mean([psnr(render(dense, c, 1, rcfg).image, t) for c, t in zip(cams, targets)]))
    return PlaneFixture(dense=dense, dense_psnr=value, cameras=cams, targets=targets, render_config=rcfg)


def build_l1_model(fix: PlaneFixture, psnr_drop_db: float = 0.3, rounds: int = 2) -> PruneLoopResult:
    """Gentle CE prune of the dense fit; keeps redundancy for level derivation."""
    cfg = TrainConfig(
        quality_loss="neg-psnr",
        quality_threshold=-(fix.dense_psnr - psnr_drop_db),
        gamma=0.0,
        iteration_budget=100,
        eval_interval=25,
        outer_rounds=rounds,
        **FAST_LR,
    )
    return prune_loop(fix.dense, fix.cameras, fix.targets, cfg, render_config=fix.render_config)


def fr_train_config() -> TrainConfig:
    return TrainConfig(
        prune_fraction=0.1,
        iteration_budget=120,
        eval_interval=30,
        outer_rounds=10,
        prune_repeat_limit=15,
        lr_final_factor=0.15,
        lr_position=6.4e-4,
        lr_scale=2e-2,
        lr_rotation=4e-3,
        lr_opacity=0.3,
        lr_sh=5e-2,
    )


def build_fr_model(fix: PlaneFixture, l1: FrModel) -> TrainFrResult:
    """Derive levels 2..4 against the dense renders as references."""
    refs = [render(fix.dense, c, 1, fix.render_config).image for c in fix.cameras]
    return train_fr(
        l1,
        fix.cameras,
        refs,
        FR_FOVEATION,
        plane_display(),
        fr_train_config(),
        fix.render_config,
        FR_HVS,
    )


def build_oversized_fixture(seed: int = 3):
    """Scene with bloated low-value splats plus a fitted baseline, for scale decay."""
    model = oversized_splat_scene(point_count=150, seed=seed)
    cams = plane_cameras()
    rcfg = plane_render_config()
    targets = [plane_target_image(c) for c in cams]
    return model, cams, targets, rcfg
