"""Front-to-back alpha blending over tiles, and workload statistics.

Per pixel, with splats sorted by depth:

    alpha_i = min(alpha_max, opacity_i * exp(-0.5 d^T conic d))   (0 beyond the
              3-sigma support or below alpha_min)
    color   = sum_i T_i alpha_i c_i + T_final * background,
    T_i     = prod_{j<i} (1 - alpha_j)

Blending stops before the splat that would push T below ``t_stop``. The
dominator of a pixel is the splat with the largest T_i alpha_i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .binning import TileWorkload, bin_and_sort, counts_grid
from .camera import Camera
from .model import FrModel
from .projection import ProjectedSplats, RenderConfig, project


@dataclass
class RenderOutput:
    image: np.ndarray  # (H, W, 3) in [0, 1]
    dominator: np.ndarray  # (H, W) model index of the dominating splat, -1 if none
    transmittance: np.ndarray  # (H, W) T after blending
    tile_workloads: list[TileWorkload]
    tile_grid: tuple[int, int]
    tile_size: int
    splats: ProjectedSplats
    level: int
    background: np.ndarray
    width: int
    height: int

    @property
    def total_intersections(self) -> int:
        return int(sum(w.intersection_count for w in self.tile_workloads))


def _tile_alphas(splats: ProjectedSplats, rows: np.ndarray, xs: np.ndarray, ys: np.ndarray, config: RenderConfig):
    """(K, P) alpha and gaussian values for one tile's pixel block."""
    mean = splats.means2d[rows]
    con = splats.conics[rows]
    dx = xs[None, None, :] - mean[:, 0, None, None]
    dy = ys[None, :, None] - mean[:, 1, None, None]
    q = con[:, 0, None, None] * dx * dx + 2.0 * con[:, 1, None, None] * dx * dy + con[:, 2, None, None] * dy * dy
    g = np.exp(-0.5 * q)
    alpha = splats.alphas[rows, None, None] * g
    np.minimum(alpha, config.alpha_max, out=alpha)
    alpha[q > config.sigma_cutoff**2] = 0.0
    alpha[alpha < config.alpha_min] = 0.0
    k = len(rows)
    dx, dy = np.broadcast_arrays(dx, dy)
    return alpha.reshape(k, -1), g.reshape(k, -1), dx.reshape(k, -1), dy.reshape(k, -1)


def rasterize(
    workloads: list[TileWorkload],
    splats: ProjectedSplats,
    background,
    width: int,
    height: int,
    config: RenderConfig = RenderConfig(),
    tile_grid: tuple[int, int] | None = None,
) -> RenderOutput:
    bg = np.asarray(background, dtype=np.float64).reshape(3)
    image = np.empty((height, width, 3), dtype=np.float64)
    image[:] = bg
    dominator = np.full((height, width), -1, dtype=np.int64)
    transmittance = np.ones((height, width), dtype=np.float64)
    ts = config.tile_size
    if tile_grid is None:
        tile_grid = (-(-width // ts), -(-height // ts))

    for work in workloads:
        tx, ty = work.tile_id
        x0, y0 = tx * ts, ty * ts
        x1, y1 = min(x0 + ts, width), min(y0 + ts, height)
        xs = np.arange(x0, x1, dtype=np.float64) + 0.5
        ys = np.arange(y0, y1, dtype=np.float64) + 0.5
        rows = work.splat_list
        alpha, _, _, _ = _tile_alphas(splats, rows, xs, ys, config)
        one_minus = 1.0 - alpha
        t_after = np.cumprod(one_minus, axis=0)
        t_before = np.vstack([np.ones((1, alpha.shape[1])), t_after[:-1]])
        include = t_after >= config.t_stop  # prefix mask: t_after is non-increasing
        contrib = alpha * t_before * include
        t_final = np.prod(np.where(include, one_minus, 1.0), axis=0)
        colors = splats.colors[rows]
        px = contrib.T @ colors + t_final[:, None] * bg[None, :]
        best = np.argmax(contrib, axis=0)
        has = contrib[best, np.arange(contrib.shape[1])] > 0.0
        dom = np.where(has, splats.source_index[rows][best], -1)

        sh = (y1 - y0, x1 - x0)
        image[y0:y1, x0:x1] = px.reshape(sh[0], sh[1], 3)
        transmittance[y0:y1, x0:x1] = t_final.reshape(sh)
        dominator[y0:y1, x0:x1] = dom.reshape(sh)

    return RenderOutput(
        image=image,
        dominator=dominator,
        transmittance=transmittance,
        tile_workloads=workloads,
        tile_grid=tile_grid,
        tile_size=ts,
        splats=splats,
        level=splats.level,
        background=bg,
        width=width,
        height=height,
    )


def render(
    model: FrModel,
    camera: Camera,
    level: int = 1,
    config: RenderConfig = RenderConfig(),
    include_mask: np.ndarray | None = None,
) -> RenderOutput:
    """Projection -> binning -> rasterization at one quality level."""
    splats = project(model, camera, level, config, include_mask)
    workloads, grid = bin_and_sort(splats, config.tile_size, camera.width, camera.height)
    return rasterize(
        workloads, splats, config.background, camera.width, camera.height, config, grid
    )


@dataclass(frozen=True)
class WorkloadStats:
    mean: float
    max: int
    p50: float
    p90: float
    p99: float
    total: int
    tiles: int

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "max": self.max,
            "p50": self.p50,
            "p90": self.p90,
            "p99": self.p99,
            "total": self.total,
            "tiles": self.tiles,
        }


def workload_stats(output: RenderOutput) -> WorkloadStats:
    """Descriptive statistics over the full tile grid (empty tiles count as 0)."""
    grid = counts_grid(output.tile_workloads, output.tile_grid)
    flat = grid.reshape(-1).astype(np.float64)
    return WorkloadStats(
        mean=float(flat.mean()),
        max=int(flat.max(initial=0)),
        p50=float(np.percentile(flat, 50)),
        p90=float(np.percentile(flat, 90)),
        p99=float(np.percentile(flat, 99)),
        total=int(flat.sum()),
        tiles=int(flat.size),
    )
