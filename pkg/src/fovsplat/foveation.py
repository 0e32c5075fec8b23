"""Gaze-dependent quality regions, filtered multi-level rendering, blending,
and the derivation of coarser model levels under an HVS quality budget.

An image is split into annular quality regions around the gaze; region l is
rendered with the points whose quality bound m >= l (filtering keeps a splat
in a tile of level t iff t <= m). Pixels within half a blend band of a region
boundary are rendered at both adjacent levels and smoothstep-interpolated.
Level l+1 point sets are derived from level l by CE pruning under a region-
restricted HVSQ budget, re-training only that level's overrides.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .binning import TileWorkload, bin_and_sort, tile_grid_shape
from .camera import Camera, DisplayGeometry, eccentricity_map
from .hvs import (
    HvsConfig,
    PoolingMap,
    build_pooling_map,
    hvsq,
    hvsq_terms,
    hvsq_value_and_gradient,
    image_stats,
)
from .model import FrModel
from .projection import ProjectedSplats, RenderConfig, project
from .pruning import TrainConfig, compute_ce, finetune, prune_order
from .quality import QualityLoss, make_quality_loss
from .rasterize import rasterize, render
from .sh import sh_basis


@dataclass(frozen=True)
class FoveationConfig:
    level_count: int = 4
    region_starts: tuple[float, ...] = (0.0, 18.0, 27.0, 33.0)  # degrees
    blend_band: float = 2.0  # degrees, straddles each boundary symmetrically
    hvsq_slack: float = 0.1  # tau: per-level HVSQ may exceed the fovea's by this factor

    def __post_init__(self):
        if len(self.region_starts) != self.level_count:
            raise ValueError("need one region start per level")
        if self.region_starts[0] != 0.0:
            raise ValueError("region 1 must start at 0 degrees")
        if any(b <= a for a, b in zip(self.region_starts, self.region_starts[1:])):
            raise ValueError("region starts must be strictly increasing")
        if self.blend_band < 0:
            raise ValueError("blend band must be >= 0")
        gaps = [b - a for a, b in zip(self.region_starts[1:], self.region_starts[2:])]
        if gaps and self.blend_band > min(gaps):
            raise ValueError("blend band wider than a region; bands would overlap")


@dataclass
class FoveationMap:
    config: FoveationConfig
    display: DisplayGeometry
    tile_size: int
    region: np.ndarray  # (H, W) pixel-eccentricity region (HVSQ masks, fractions)
    primary: np.ndarray  # (H, W) rendered level: the tile's level, band-lowered
    secondary: np.ndarray  # (H, W) adjacent higher level inside bands, 0 outside
    blend: np.ndarray  # (H, W) weight of the higher level
    tile_level: np.ndarray  # (tyc, txc) level at tile centers
    tile_needs: np.ndarray  # (L, tyc, txc) levels each tile must rasterize

    def region_mask(self, level: int) -> np.ndarray:
        """Pixels whose eccentricity falls in region ``level`` (display geometry)."""
        return self.region == level

    def rendered_mask(self, level: int) -> np.ndarray:
        """Pixels the foveated pipeline actually shades at ``level``.

        Tile-granular assignment plus both sides of each blend band; this is
        the footprint level-``level`` quality is judged on.
        """
        return (self.primary == level) | (self.secondary == level)

    def region_fractions(self) -> list[float]:
        n = self.region.size
        return [float((self.region == lv).sum() / n) for lv in range(1, self.config.level_count + 1)]

    def stats_double_fraction(self) -> float:
        """Fraction of pixels rendered at two levels (inside blend bands)."""
        return float((self.secondary > 0).mean())

    def tiles_for_level(self, level: int) -> np.ndarray:
        return self.tile_needs[level - 1]


def _smoothstep(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _block_any(mask: np.ndarray, tile_size: int, grid: tuple[int, int]) -> np.ndarray:
    txc, tyc = grid
    h, w = mask.shape
    out = np.zeros((tyc, txc), dtype=bool)
    padded = np.zeros((tyc * tile_size, txc * tile_size), dtype=bool)
    padded[:h, :w] = mask
    blocks = padded.reshape(tyc, tile_size, txc, tile_size)
    return blocks.any(axis=(1, 3))


def build_foveation_map(
    config: FoveationConfig,
    display: DisplayGeometry,
    tile_size: int = 16,
) -> FoveationMap:
    """Levels are assigned per tile (from the tile center's eccentricity) so
    filtering stays a tile-granular mask; per-pixel blend weights refine the
    strips around region boundaries, where both adjacent levels render."""
    ecc = eccentricity_map(display)
    starts = np.asarray(config.region_starts)
    region = np.searchsorted(starts, ecc, side="right").astype(np.int16)

    grid = tile_grid_shape(display.width, display.height, tile_size)
    txc, tyc = grid
    cx = (np.arange(txc) + 0.5) * tile_size
    cy = (np.arange(tyc) + 0.5) * tile_size
    gx, gy = display.gaze
    tile_ecc = np.hypot(cx[None, :] - gx, cy[:, None] - gy) / display.pixels_per_degree
    tile_level = np.searchsorted(starts, tile_ecc, side="right").astype(np.int16)

    h, w = ecc.shape
    tile_y = (np.arange(h) // tile_size)[:, None]
    tile_x = (np.arange(w) // tile_size)[None, :]
    primary = tile_level[tile_y, tile_x].astype(np.int16)
    secondary = np.zeros_like(primary)
    blend = np.zeros(ecc.shape)
    if config.blend_band > 0:
        half = config.blend_band / 2.0
        for lv in range(2, config.level_count + 1):
            e = starts[lv - 1]
            band = np.abs(ecc - e) <= half
            primary[band] = lv - 1
            secondary[band] = lv
            blend[band] = _smoothstep((ecc[band] - (e - half)) / config.blend_band)

    needs = np.zeros((config.level_count, tyc, txc), dtype=bool)
    for lv in range(1, config.level_count + 1):
        needs[lv - 1] = _block_any((primary == lv) | (secondary == lv), tile_size, grid)
    return FoveationMap(
        config=config,
        display=display,
        tile_size=tile_size,
        region=region,
        primary=primary,
        secondary=secondary,
        blend=blend,
        tile_level=tile_level,
        tile_needs=needs,
    )


def filter_points(splats: ProjectedSplats, fmap: FoveationMap) -> dict[int, np.ndarray]:
    """Per-level participation masks: a splat takes part at level l iff l <= m."""
    return {
        lv: splats.quality_bound >= lv
        for lv in range(1, fmap.config.level_count + 1)
    }


def _subset_splats(splats: ProjectedSplats, rows: np.ndarray, level: int) -> ProjectedSplats:
    return ProjectedSplats(
        means2d=splats.means2d[rows],
        conics=splats.conics[rows],
        depths=splats.depths[rows],
        colors=splats.colors[rows],
        alphas=splats.alphas[rows],
        bboxes=splats.bboxes[rows],
        source_index=splats.source_index[rows],
        quality_bound=splats.quality_bound[rows],
        level=level,
        n_culled=splats.n_culled,
    )


def level_adjusted(splats: ProjectedSplats, model: FrModel, camera: Camera, level: int) -> ProjectedSplats:
    """Shared-geometry splats with the level's opacity / SH-DC overrides applied."""
    src = splats.source_index
    opac_eff, dc_eff = model.effective_params(level)
    dirs = model.positions[src] - camera.center
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    coeffs = model.sh[src].copy()
    coeffs[:, 0, :] = dc_eff[src]
    basis = sh_basis(dirs, model.sh_degree)
    colors = np.clip(0.5 + np.einsum("nk,nkc->nc", basis, coeffs), 0.0, 1.0)
    return ProjectedSplats(
        means2d=splats.means2d,
        conics=splats.conics,
        depths=splats.depths,
        colors=colors,
        alphas=opac_eff[src],
        bboxes=splats.bboxes,
        source_index=src,
        quality_bound=splats.quality_bound,
        level=level,
        n_culled=splats.n_culled,
    )


@dataclass
class FoveatedStats:
    per_level_intersections: dict[int, int]
    total_intersections: int
    double_rendered_fraction: float
    region_fractions: list[float]

    def to_dict(self) -> dict:
        return {
            "per_level_intersections": {str(k): v for k, v in self.per_level_intersections.items()},
            "total_intersections": self.total_intersections,
            "double_rendered_fraction": self.double_rendered_fraction,
            "region_fractions": self.region_fractions,
        }


@dataclass
class FoveatedRender:
    image: np.ndarray
    map: FoveationMap
    tile_workloads: list[TileWorkload]  # one entry per (tile, level) pass
    tile_grid: tuple[int, int]
    tile_size: int
    stats: FoveatedStats


def render_foveated(
    model: FrModel,
    camera: Camera,
    config: FoveationConfig,
    display: DisplayGeometry,
    render_config: RenderConfig = RenderConfig(),
    fmap: FoveationMap | None = None,
) -> FoveatedRender:
    """One projection pass, per-level filtering, per-region rasterization,
    and smoothstep blending across region boundaries."""
    if (camera.width, camera.height) != (display.width, display.height):
        raise ValueError("camera resolution must match the display geometry")
    if model.level_count < config.level_count:
        raise ValueError(
            f"model has {model.level_count} levels, foveation needs {config.level_count}"
        )
    if fmap is None:
        fmap = build_foveation_map(config, display, render_config.tile_size)
    splats = project(model, camera, 1, render_config)
    masks = filter_points(splats, fmap)

    h, w = display.height, display.width
    image = np.zeros((h, w, 3))
    weight_sum = np.zeros((h, w))
    per_level: dict[int, int] = {}
    passes: dict[tuple[int, int], list[TileWorkload]] = {}
    grid = tile_grid_shape(w, h, render_config.tile_size)

    lower_w = np.where(fmap.secondary > 0, 1.0 - fmap.blend, 1.0)
    for lv in range(1, config.level_count + 1):
        rows = np.flatnonzero(masks[lv])
        sub = level_adjusted(_subset_splats(splats, rows, lv), model, camera, lv)
        workloads, _ = bin_and_sort(sub, render_config.tile_size, w, h)
        needed = fmap.tiles_for_level(lv)
        workloads = [wk for wk in workloads if needed[wk.tile_id[1], wk.tile_id[0]]]
        out = rasterize(workloads, sub, render_config.background, w, h, render_config, grid)
        per_level[lv] = sum(wk.intersection_count for wk in workloads)
        for wk in workloads:
            passes.setdefault(wk.tile_id, []).append(wk)
        # empty-but-needed tiles still cost a pass in the stream (zero work);
        # they contribute background pixels, which rasterize() already wrote
        lv_weight = lower_w * (fmap.primary == lv) + fmap.blend * (fmap.secondary == lv)
        image += out.image * lv_weight[:, :, None]
        weight_sum += lv_weight
    assert np.allclose(weight_sum, 1.0), "level weights must partition each pixel"

    ordered: list[TileWorkload] = []
    txc, tyc = grid
    for ty in range(tyc):
        for tx in range(txc):
            ordered.extend(passes.get((tx, ty), []))
    stats = FoveatedStats(
        per_level_intersections=per_level,
        total_intersections=sum(per_level.values()),
        double_rendered_fraction=float((fmap.secondary > 0).mean()),
        region_fractions=fmap.region_fractions(),
    )
    return FoveatedRender(
        image=image,
        map=fmap,
        tile_workloads=ordered,
        tile_grid=grid,
        tile_size=render_config.tile_size,
        stats=stats,
    )


# -- level derivation ---------------------------------------------------------


@dataclass
class LevelReport:
    level: int
    points: int
    hvsq: float
    threshold: float
    reached_threshold: bool
    demote_rounds: int

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "points": self.points,
            "hvsq": self.hvsq,
            "threshold": self.threshold,
            "reached_threshold": self.reached_threshold,
            "demote_rounds": self.demote_rounds,
        }


def _demote_step(model: FrModel, scores, level: int, fraction: float) -> FrModel:
    """Push the lowest-CE points of ``level`` back to level - 1.

    Unlike prune_step's tie rule (largest Comp first), equal-CE ties demote
    the *least*-used points first: under the tight region budget, removing a
    wide splat that contributes without dominating blows visible holes, while
    points barely touching the region are free demotions.
    """
    candidates = np.flatnonzero(model.quality_bound >= level)
    idx = np.arange(len(scores.ce))
    order = np.lexsort((idx, scores.comp, scores.ce))
    order = order[np.isin(order, candidates)]
    n_drop = max(1, int(fraction * len(candidates)))
    bounds = model.quality_bound.copy()
    bounds[order[:n_drop]] = level - 1
    return model.with_quality_bounds(bounds)


def derive_level(
    model: FrModel,
    cameras: list[Camera],
    references: list[np.ndarray],
    level: int,
    threshold: float,
    pooling: PoolingMap,
    fmap: FoveationMap,
    config: TrainConfig,
    render_config: RenderConfig = RenderConfig(),
    hvs_config: HvsConfig = HvsConfig(),
) -> tuple[FrModel, LevelReport]:
    """Populate ``level`` from level-1 survivors of ``level - 1``.

    Under strict subsetting the level-l set serves every region from l
    outward, so demotion scores points by CE over the union of those regions
    (a point never touching the periphery is a free demotion) and quality is
    gated on the worst per-region HVSQ among them. Re-training touches only
    the new level's overrides (opacity and SH-DC; gamma=0, no scale decay),
    so renders at levels below ``level`` are bit-identical before and after.
    """
    l_max = fmap.config.level_count
    region_masks = [fmap.rendered_mask(lv) for lv in range(level, l_max + 1)]
    for lv, mask in zip(range(level, l_max + 1), region_masks):
        if not mask.any():
            raise ValueError(
                f"no pixels render at level {lv}; widen the region or the blend band"
            )
    union_region = np.logical_or.reduce(region_masks)
    tile_mask = fmap.tile_needs[level - 1 :].any(axis=0)
    config = replace(config, quality_threshold=threshold, gamma=0.0)

    term_cache: dict[int, object] = {}

    def _ref_stats(ref):
        key = id(ref)
        if key not in term_cache:
            term_cache[key] = image_stats(ref, pooling, hvs_config)
        return term_cache[key]

    def region_values(m: FrModel) -> np.ndarray:
        """Mean HVSQ per region (level..L), averaged over cameras."""
        sums = np.zeros(len(region_masks))
        for cam, ref in zip(cameras, references):
            img = render(m, cam, level, render_config).image
            terms = hvsq_terms(ref, img, pooling, hvs_config, ref_stats=_ref_stats(ref))
            sums += [terms[mask].mean() for mask in region_masks]
        return sums / len(cameras)

    def gate(m: FrModel) -> float:
        return float(region_values(m).max())

    def vg(rendered, target):
        value, grad = hvsq_value_and_gradient(
            target, rendered, pooling, union_region, hvs_config, _ref_stats(target)
        )
        return value, grad

    def value_fn(rendered, target):
        terms = hvsq_terms(
            target, rendered, pooling, hvs_config, ref_stats=_ref_stats(target)
        )
        return float(max(terms[mask].mean() for mask in region_masks))

    loss = QualityLoss(vg, value_fn)

    def retrain(m: FrModel):
        return finetune(
            m,
            cameras,
            references,
            config,
            level=level,
            render_config=render_config,
            loss=loss,
            param_groups=("override_opacity", "override_sh_dc"),
        )

    # promote every current candidate into the new level to start
    bounds = model.quality_bound.copy()
    bounds[bounds == level - 1] = level
    model = model.with_quality_bounds(bounds)

    best = model
    best_quality = gate(model)
    if best_quality > threshold:
        ft = retrain(model)
        best, best_quality = ft.model, ft.history[-1]["quality"]

    rounds = 0
    fraction = config.prune_fraction
    min_fraction = 1.05 / max(model.n_points, 1)  # at least one point per step
    for _ in range(config.outer_rounds):
        # demote from the last model known to satisfy the budget
        model, quality = best, best_quality
        demoted = 0
        for _ in range(config.prune_repeat_limit):
            if (model.quality_bound >= level).sum() <= 1:
                break
            scores = compute_ce(model, cameras, level, render_config, union_region, tile_mask)
            model = _demote_step(model, scores, level, fraction)
            demoted += 1
            quality = gate(model)
            if quality > threshold:
                break
        if demoted == 0:
            break
        rounds += 1
        if quality <= threshold:
            best, best_quality = model, quality
            continue
        ft = retrain(model)
        if ft.reached_threshold:
            best, best_quality = ft.model, ft.history[-1]["quality"]
        else:
            # recovery failed: step past the knee was too coarse; retry the
            # round from the last good model with finer demotions
            fraction /= 2.0
            if fraction < min_fraction:
                break
    n_points = int((best.quality_bound >= level).sum())
    return best, LevelReport(
        level=level,
        points=n_points,
        hvsq=best_quality,
        threshold=threshold,
        reached_threshold=best_quality <= threshold,
        demote_rounds=rounds,
    )


@dataclass
class TrainFrResult:
    model: FrModel
    reports: list[LevelReport]
    fovea_hvsq: float
    threshold: float


def train_fr(
    model: FrModel,
    cameras: list[Camera],
    references: list[np.ndarray],
    config: FoveationConfig,
    display: DisplayGeometry,
    train_config: TrainConfig,
    render_config: RenderConfig = RenderConfig(),
    hvs_config: HvsConfig = HvsConfig(),
) -> TrainFrResult:
    """Derive levels 2..L from a level-1 model under the HVS consistency target.

    The per-level HVSQ budget is (1 + tau) times the fovea-region HVSQ of the
    level-1 model against the reference renders.
    """
    fmap = build_foveation_map(config, display, render_config.tile_size)
    pooling = build_pooling_map(
        display, hvs_config.pooling_rate, hvs_config.min_radius, hvs_config.max_radius
    )
    fovea = fmap.rendered_mask(1)
    if not fovea.any():
        raise ValueError("no pixels render at level 1; the fovea region is narrower than a tile")
    fovea_vals = [
        hvsq(ref, render(model, cam, 1, render_config).image, pooling, fovea, hvs_config)
        for cam, ref in zip(cameras, references)
    ]
    fovea_hvsq = float(np.mean(fovea_vals))
    threshold = (1.0 + config.hvsq_slack) * fovea_hvsq

    out = model.with_quality_bounds(model.quality_bound, level_count=config.level_count)
    reports = []
    for lv in range(2, config.level_count + 1):
        out, report = derive_level(
            out,
            cameras,
            references,
            lv,
            threshold,
            pooling,
            fmap,
            train_config,
            render_config,
            hvs_config,
        )
        reports.append(report)
    return TrainFrResult(model=out, reports=reports, fovea_hvsq=fovea_hvsq, threshold=threshold)
