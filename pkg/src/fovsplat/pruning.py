"""Efficiency-aware pruning: CE scores, scale decay, and prune/re-train loops.

A point's computational efficiency is the number of pixels it dominates
divided by the number of tiles it intersects, taken at its best camera; the
cheapest way to shed intersections is to drop the lowest-CE points. Scale
decay complements pruning by shrinking splats that are both large and used
by many tiles, via the weighted-scale regularizer added to the quality loss.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .backward import Gradients, backward
from .binning import bin_and_sort
from .camera import Camera
from .model import FrModel
from .projection import RenderConfig, project
from .quality import as_quality_loss, make_quality_loss
from .rasterize import RenderOutput, render


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, history: list):
        super().__init__(message)
        self.history = history


@dataclass
class CeScores:
    """Per-point Val (pixels dominated), Comp (tiles intersected), CE = Val/Comp.

    Values are taken from the camera with the maximum CE; points with zero CE
    everywhere report their maximum Comp so ties prune expensive points first.
    """

    val: np.ndarray
    comp: np.ndarray
    ce: np.ndarray


@dataclass
class ScaleStats:
    """Weighted-scale statistics: WS = mean(span * excess-tile-usage)."""

    span: np.ndarray  # S_i = 2 * max sigma, scene units
    usage: np.ndarray  # U_i = mean tiles intersected over cameras
    excess: np.ndarray  # G_i = (U_i > T) * (U_i - T)
    threshold: float
    ws: float


@dataclass
class TrainConfig:
    gamma: float = 0.0  # scale-decay weight
    prune_fraction: float = 0.10
    quality_threshold: float = math.inf
    iteration_budget: int = 400
    quality_loss: str = "l1-ssim"  # l1 | l1-ssim | hvsq | neg-psnr
    lr_position: float = 1.6e-4  # multiplied by scene extent
    lr_scale: float = 5e-3
    lr_rotation: float = 1e-3
    lr_opacity: float = 5e-2
    lr_sh: float = 2.5e-3
    sh_rest_lr_factor: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-15
    eval_interval: int = 25
    ws_refresh_interval: int = 20
    ws_threshold_percentile: float = 75.0
    outer_rounds: int = 10
    prune_repeat_limit: int = 20
    lr_final_factor: float = 1.0  # exponential lr decay to this factor over the budget
    keep_best: bool = True  # return the best-quality iterate, not the last
    param_groups: tuple[str, ...] = ("positions", "scales", "rotations", "opacities", "sh")

    def __post_init__(self):
        if not 0.0 < self.prune_fraction < 1.0:
            raise ValueError("prune_fraction must be in (0, 1)")
        if self.gamma < 0.0:
            raise ValueError("gamma must be >= 0")


# -- CE scoring and pruning ---------------------------------------------------


def _per_camera_val_comp(
    model: FrModel,
    camera: Camera,
    level: int,
    config: RenderConfig,
    pixel_mask: np.ndarray | None = None,
    tile_mask: np.ndarray | None = None,
):
    out = render(model, camera, level, config)
    val = np.zeros(model.n_points, dtype=np.int64)
    dom = out.dominator if pixel_mask is None else np.where(pixel_mask, out.dominator, -1)
    dom = dom[dom >= 0]
    if len(dom):
        val += np.bincount(dom, minlength=model.n_points)
    comp = np.zeros(model.n_points, dtype=np.int64)
    workloads = out.tile_workloads
    if tile_mask is not None:
        workloads = [w for w in workloads if tile_mask[w.tile_id[1], w.tile_id[0]]]
    rows = [w.splat_list for w in workloads]
    if rows:
        row_counts = np.bincount(np.concatenate(rows), minlength=len(out.splats))
        np.add.at(comp, out.splats.source_index, row_counts)
    return val, comp


def compute_ce(
    model: FrModel,
    cameras: list[Camera],
    level: int = 1,
    config: RenderConfig = RenderConfig(),
    pixel_mask: np.ndarray | None = None,
    tile_mask: np.ndarray | None = None,
) -> CeScores:
    """Per-point CE over the camera set.

    ``pixel_mask`` restricts where dominated pixels (Val) are counted and
    ``tile_mask`` which tiles count toward Comp; level derivation uses these
    to score points against one quality region only.
    """
    if not cameras:
        raise ValueError("need at least one camera")
    n = model.n_points
    best_ce = np.zeros(n)
    best_val = np.zeros(n, dtype=np.int64)
    best_comp = np.zeros(n, dtype=np.int64)
    max_comp = np.zeros(n, dtype=np.int64)
    for cam in cameras:
        val, comp = _per_camera_val_comp(model, cam, level, config, pixel_mask, tile_mask)
        ce = np.where(comp > 0, val / np.maximum(comp, 1), 0.0)
        better = ce > best_ce
        best_ce[better] = ce[better]
        best_val[better] = val[better]
        best_comp[better] = comp[better]
        np.maximum(max_comp, comp, out=max_comp)
    never = best_ce == 0.0
    best_comp[never] = max_comp[never]
    best_val[never] = 0
    return CeScores(val=best_val, comp=best_comp, ce=best_ce)


def prune_order(scores: CeScores) -> np.ndarray:
    """Removal order: CE ascending, ties by Comp descending, then index descending."""
    n = len(scores.ce)
    idx = np.arange(n)
    return np.lexsort((-idx, -scores.comp, scores.ce))


def prune_step(model: FrModel, scores: CeScores, fraction: float) -> FrModel:
    """Drop the floor(fraction * N) lowest-CE points; no-op if that is < 1."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    n_drop = int(fraction * model.n_points)
    if n_drop < 1:
        warnings.warn("prune fraction selects no points; model unchanged")
        return model
    order = prune_order(scores)
    keep = np.sort(order[n_drop:])
    return model.subset(keep)


def total_intersections(model: FrModel, cameras: list[Camera], level: int = 1, config: RenderConfig = RenderConfig()) -> int:
    total = 0
    for cam in cameras:
        splats = project(model, cam, level, config)
        workloads, _ = bin_and_sort(splats, config.tile_size, cam.width, cam.height)
        total += sum(w.intersection_count for w in workloads)
    return total


# -- weighted scale -----------------------------------------------------------


def weighted_scale(
    model: FrModel,
    cameras: list[Camera],
    threshold: float | None = None,
    config: RenderConfig = RenderConfig(),
    level: int = 1,
    percentile: float = 75.0,
) -> ScaleStats:
    """Eq. WS = mean(S_i G_i) with U_i averaged over the camera set.

    With ``threshold=None`` the tile-use threshold is the given percentile of
    U; G is treated as constant w.r.t. the scales within a training step.
    """
    if threshold is not None and threshold < 0:
        raise ValueError("threshold must be >= 0")
    n = model.n_points
    usage = np.zeros(n)
    for cam in cameras:
        splats = project(model, cam, level, config)
        workloads, _ = bin_and_sort(splats, config.tile_size, cam.width, cam.height)
        comp = np.zeros(n)
        rows = [w.splat_list for w in workloads]
        if rows:
            row_counts = np.bincount(np.concatenate(rows), minlength=len(splats))
            np.add.at(comp, splats.source_index, row_counts)
        usage += comp
    usage /= len(cameras)
    if threshold is None:
        threshold = float(np.percentile(usage, percentile))
    span = 2.0 * model.scales.max(axis=1)
    excess = np.where(usage > threshold, usage - threshold, 0.0)
    ws = float(np.mean(span * excess))
    return ScaleStats(span=span, usage=usage, excess=excess, threshold=float(threshold), ws=ws)


def ws_scale_gradient(model: FrModel, stats: ScaleStats) -> np.ndarray:
    """d WS / d scales; the span takes the max axis, U and G held constant."""
    g = np.zeros_like(model.scales)
    axis = model.scales.argmax(axis=1)
    g[np.arange(model.n_points), axis] = 2.0 * stats.excess / model.n_points
    return g


# -- optimizer ----------------------------------------------------------------

_LOGIT_CLIP = 1e-4


def _logit(p):
    p = np.clip(p, _LOGIT_CLIP, 1.0 - _LOGIT_CLIP)
    return np.log(p / (1.0 - p))


class Adam:
    """Adam over model arrays with per-group transforms.

    scales train in log domain, opacities in logit domain; rotations are
    renormalized after every step.
    """

    def __init__(self, model: FrModel, groups: tuple[str, ...], config: TrainConfig, extent: float):
        self.model = model
        self.config = config
        k = model.sh.shape[1]
        lr_sh = np.full((1, k, 1), config.lr_sh * config.sh_rest_lr_factor)
        lr_sh[0, 0, 0] = config.lr_sh
        self.lrs = {
            "positions": config.lr_position * extent,
            "scales": config.lr_scale,
            "rotations": config.lr_rotation,
            "opacities": config.lr_opacity,
            "sh": lr_sh,
            "override_opacity": config.lr_opacity,
            "override_sh_dc": config.lr_sh,
        }
        self.groups = tuple(g for g in groups if getattr(model, g).size)
        self.state = {g: (np.zeros_like(getattr(model, g)), np.zeros_like(getattr(model, g))) for g in self.groups}
        self.t = 0

    def _get_raw(self, group: str) -> np.ndarray:
        arr = getattr(self.model, group)
        if group == "scales":
            return np.log(arr)
        if group in ("opacities", "override_opacity"):
            return _logit(arr)
        return arr

    def _set_raw(self, group: str, raw: np.ndarray) -> None:
        if group == "scales":
            setattr(self.model, group, np.exp(raw))
        elif group in ("opacities", "override_opacity"):
            setattr(self.model, group, 1.0 / (1.0 + np.exp(-raw)))
        else:
            setattr(self.model, group, raw)

    def _raw_grad(self, group: str, grad: np.ndarray) -> np.ndarray:
        arr = getattr(self.model, group)
        if group == "scales":
            return grad * arr
        if group in ("opacities", "override_opacity"):
            p = np.clip(arr, _LOGIT_CLIP, 1.0 - _LOGIT_CLIP)
            return grad * p * (1.0 - p)
        return grad

    def step(self, grads: Gradients, lr_scale: float = 1.0) -> None:
        self.t += 1
        c = self.config
        b1c = 1.0 - c.beta1**self.t
        b2c = 1.0 - c.beta2**self.t
        for group in self.groups:
            g = self._raw_grad(group, getattr(grads, group))
            m, v = self.state[group]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            raw = self._get_raw(group)
            raw = raw - lr_scale * self.lrs[group] * (m / b1c) / (np.sqrt(v / b2c) + c.eps)
            self._set_raw(group, raw)
        if "rotations" in self.groups:
            q = self.model.rotations
            self.model.rotations = q / np.linalg.norm(q, axis=1, keepdims=True)


# -- fine-tuning --------------------------------------------------------------


@dataclass
class FinetuneResult:
    model: FrModel
    history: list[dict]
    reached_threshold: bool
    steps: int


def scene_extent(model: FrModel) -> float:
    if model.n_points == 0:
        return 1.0
    center = model.positions.mean(axis=0)
    return max(1e-6, float(np.linalg.norm(model.positions - center, axis=1).max()))


def finetune(
    model: FrModel,
    cameras: list[Camera],
    targets: list[np.ndarray],
    config: TrainConfig,
    *,
    level: int = 1,
    render_config: RenderConfig = RenderConfig(),
    loss=None,
    param_groups: tuple[str, ...] | None = None,
) -> FinetuneResult:
    """Gradient steps on L = L_quality + gamma * WS until the threshold or budget.

    Cameras are visited round-robin; the quality monitor is the mean loss over
    all cameras, evaluated every ``eval_interval`` steps. Raises
    TrainingDiverged (with history attached) if the loss goes non-finite.
    """
    if len(cameras) != len(targets):
        raise ValueError("need one target image per camera")
    model = model.copy()
    loss = as_quality_loss(loss) if loss is not None else make_quality_loss(config.quality_loss)
    groups = param_groups if param_groups is not None else config.param_groups
    opt = Adam(model, groups, config, scene_extent(model))
    history: list[dict] = []
    ws_stats = None
    ws_value = 0.0

    def evaluate() -> float:
        vals = [loss.value(render(model, cam, level, render_config).image, tgt) for cam, tgt in zip(cameras, targets)]
        return float(np.mean(vals))

    quality = evaluate()
    if config.gamma > 0:
        ws_stats = weighted_scale(model, cameras, None, render_config, level, config.ws_threshold_percentile)
        ws_value = ws_stats.ws
    history.append({"step": 0, "quality": quality, "ws": ws_value})
    if quality <= config.quality_threshold:
        return FinetuneResult(model, history, True, 0)

    best_model, best_quality = model, quality
    reached = False
    step = 0
    decay = (
        config.lr_final_factor ** (1.0 / max(config.iteration_budget, 1))
        if config.lr_final_factor != 1.0
        else 1.0
    )
    for step in range(1, config.iteration_budget + 1):
        cam_idx = (step - 1) % len(cameras)
        out = render(model, cameras[cam_idx], level, render_config)
        value, g_img = loss(out.image, targets[cam_idx])
        if not np.isfinite(value):
            raise TrainingDiverged(f"quality loss became {value} at step {step}", history)
        grads = backward(model, cameras[cam_idx], out, g_img, render_config)
        if config.gamma > 0:
            if ws_stats is None or (step - 1) % config.ws_refresh_interval == 0:
                ws_stats = weighted_scale(
                    model, cameras, None, render_config, level, config.ws_threshold_percentile
                )
                ws_value = ws_stats.ws
            grads.scales += config.gamma * ws_scale_gradient(model, ws_stats)
        opt.step(grads, decay**step)
        if step % config.eval_interval == 0 or step == config.iteration_budget:
            quality = evaluate()
            if config.gamma > 0:
                ws_value = weighted_scale(
                    model, cameras, ws_stats.threshold, render_config, level
                ).ws
            history.append({"step": step, "quality": quality, "ws": ws_value})
            if not np.isfinite(quality):
                raise TrainingDiverged(f"quality diverged at step {step}", history)
            if config.keep_best and quality < best_quality:
                best_model, best_quality = model.copy(), quality
            if quality <= config.quality_threshold:
                reached = True
                break
    if config.keep_best and best_quality < quality and not reached:
        model, quality = best_model, best_quality
        reached = quality <= config.quality_threshold
        history.append({"step": step, "quality": quality, "ws": ws_value, "restored_best": True})
    return FinetuneResult(model, history, reached, step)


def fit_to_images(model, cameras, targets, config=None, **kwargs):
    """Plain fitting: scale decay off, full budget unless a finite threshold is set."""
    config = config or TrainConfig()
    if config.gamma != 0.0:
        config = replace(config, gamma=0.0)
    if math.isinf(config.quality_threshold):
        config = replace(config, quality_threshold=-math.inf)
    return finetune(model, cameras, targets, config, **kwargs)


# -- the iterative prune / re-train loop (the training procedure) -------------


@dataclass
class RoundReport:
    round: int
    points: int
    intersections: int
    quality: float
    ws: float
    pruned: int
    reached_threshold: bool

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "points": self.points,
            "intersections": self.intersections,
            "quality": self.quality,
            "ws": self.ws,
            "pruned": self.pruned,
            "reached_threshold": self.reached_threshold,
        }


@dataclass
class PruneLoopResult:
    model: FrModel
    rounds: list[RoundReport]
    reached_threshold: bool


def prune_loop(
    model: FrModel,
    cameras: list[Camera],
    targets: list[np.ndarray],
    config: TrainConfig,
    *,
    level: int = 1,
    render_config: RenderConfig = RenderConfig(),
    loss=None,
    param_groups: tuple[str, ...] | None = None,
) -> PruneLoopResult:
    """Alternate CE pruning (until quality crosses the threshold) and re-training.

    Each round prunes repeatedly while the quality loss stays within the
    threshold (the final prune may overshoot, per the training procedure),
    then fine-tunes with the composite loss to recover. Stops at the round
    limit, when pruning selects no points, or when fine-tuning cannot recover
    (best recovering model is returned, flagged).
    """
    loss = as_quality_loss(loss) if loss is not None else make_quality_loss(config.quality_loss)
    model = model.copy()
    best = model
    reached = True
    rounds: list[RoundReport] = []

    def evaluate(m: FrModel) -> float:
        vals = [loss.value(render(m, cam, level, render_config).image, tgt) for cam, tgt in zip(cameras, targets)]
        return float(np.mean(vals))

    for rnd in range(1, config.outer_rounds + 1):
        pruned = 0
        for _ in range(config.prune_repeat_limit):
            if int(config.prune_fraction * model.n_points) < 1:
                break
            scores = compute_ce(model, cameras, level, render_config)
            model = prune_step(model, scores, config.prune_fraction)
            pruned += 1
            if evaluate(model) > config.quality_threshold:
                break
        if pruned == 0:
            break
        ft = finetune(
            model,
            cameras,
            targets,
            config,
            level=level,
            render_config=render_config,
            loss=loss,
            param_groups=param_groups,
        )
        model = ft.model
        quality = ft.history[-1]["quality"]
        stats = weighted_scale(model, cameras, None, render_config, level, config.ws_threshold_percentile)
        rounds.append(
            RoundReport(
                round=rnd,
                points=model.n_points,
                intersections=total_intersections(model, cameras, level, render_config),
                quality=quality,
                ws=stats.ws,
                pruned=pruned,
                reached_threshold=ft.reached_threshold,
            )
        )
        if not ft.reached_threshold:
            reached = False
            model = best
            break
        best = model
    return PruneLoopResult(model=model, rounds=rounds, reached_threshold=reached)
