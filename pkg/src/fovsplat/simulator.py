"""Cycle-approximate simulator of the three-stage tile pipeline.

Projection -> Sorting -> Rasterization, pipelined over tiles with a two-slot
buffer at each stage boundary. A stage may start its next unit only when its
output slot frees (the consumer finished the unit two slots back) and, except
for the first stage, when its input is available.

Tile Merging changes only the slot granularity: a merged group occupies one
slot at each boundary while members are still produced, forwarded, and
consumed tile by tile. That is a pure relaxation of the baseline constraints,
so merged makespans never regress. Incremental Pipelining streams sub-tile
row chunks across the sort->rasterize boundary through a line buffer, letting
rasterization start before a tile's sorting work has fully drained; line
buffer backpressure on the producer is not modeled.

Per-tile work is identical across configurations (work conservation): with
k intersections,

    projection      ceil(c_proj * k / proj_parallel)
    sorting         ceil(sort_coeff * k * log2(max(k, 2)) / sort_parallel)
    rasterization   ceil(c_rast * k)
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .binning import TileWorkload, counts_grid

STAGE_NAMES = ("projection", "sorting", "rasterization")


@dataclass(frozen=True)
class CostModel:
    proj_cycles_per_point: float = 1.0
    proj_parallel: int = 8
    sort_cycles_coeff: float = 1.0
    sort_parallel: int = 16
    rast_cycles_per_intersection: float = 1.0
    tile_rows: int = 16
    line_buffer_bytes: int = 1024
    row_bytes: int = 256  # 16 px x RGBA float32
    merge_beta: float | None = None  # None: median of positive tile counts

    def __post_init__(self):
        for name in (
            "proj_cycles_per_point",
            "sort_cycles_coeff",
            "rast_cycles_per_intersection",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.proj_parallel < 1 or self.sort_parallel < 1:
            raise ValueError("parallel unit counts must be >= 1")
        if self.merge_beta is not None and self.merge_beta < 1:
            raise ValueError("merge threshold must be >= 1")

    @property
    def rows_buffered(self) -> int:
        return max(1, self.line_buffer_bytes // self.row_bytes)

    @property
    def chunks_per_tile(self) -> int:
        return max(1, -(-self.tile_rows // self.rows_buffered))

    def stage_cycles(self, counts: np.ndarray) -> list[np.ndarray]:
        k = np.asarray(counts, dtype=np.float64)
        proj = np.ceil(self.proj_cycles_per_point * k / self.proj_parallel)
        sort = np.ceil(self.sort_cycles_coeff * k * np.log2(np.maximum(k, 2)) / self.sort_parallel)
        rast = np.ceil(self.rast_cycles_per_intersection * k)
        return [proj.astype(np.int64), sort.astype(np.int64), rast.astype(np.int64)]


@dataclass(frozen=True)
class SimFeatures:
    tile_merging: bool = False
    incremental: bool = False

    @property
    def label(self) -> str:
        if self.tile_merging and self.incremental:
            return "TM+IP"
        if self.tile_merging:
            return "TM"
        if self.incremental:
            return "IP"
        return "baseline"


def merge_tiles(counts, beta: float) -> list[list[int]]:
    """Group tiles in arrival order by cumulative intersection count.

    Before adding a tile to a non-empty group, if the running sum plus the
    tile would exceed beta, the group is emitted first; after adding, a sum
    at or over beta emits the group.
    """
    if beta < 1:
        raise ValueError("beta must be >= 1")
    groups: list[list[int]] = []
    current: list[int] = []
    total = 0
    for i, c in enumerate(counts):
        c = int(c)
        if current and total + c > beta:
            groups.append(current)
            current, total = [], 0
        current.append(i)
        total += c
        if total >= beta:
            groups.append(current)
            current, total = [], 0
    if current:
        groups.append(current)
    return groups


def _split_int(total: int, parts: int) -> list[int]:
    base, rem = divmod(total, parts)
    return [base + (1 if i < rem else 0) for i in range(parts)]


@dataclass
class SimTrace:
    stage_busy: tuple[int, ...]
    stage_stall: tuple[int, ...]
    makespan: int
    utilization: tuple[float, ...]
    starts: np.ndarray  # (stages, tiles)
    ends: np.ndarray
    tile_ids: list[tuple[int, int]]
    group_ids: np.ndarray
    beta: float
    features: SimFeatures

    def to_dict(self) -> dict:
        return {
            "features": self.features.label,
            "beta": self.beta,
            "makespan": self.makespan,
            "stages": [
                {
                    "name": name,
                    "busy": int(b),
                    "stall": int(s),
                    "utilization": u,
                }
                for name, b, s, u in zip(STAGE_NAMES, self.stage_busy, self.stage_stall, self.utilization)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def timeline_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf)
        wr.writerow(["tile", "tx", "ty", "group"] + [f"{n}_{k}" for n in STAGE_NAMES for k in ("start", "end")])
        for j, tid in enumerate(self.tile_ids):
            row = [j, tid[0], tid[1], int(self.group_ids[j])]
            for s in range(len(STAGE_NAMES)):
                row += [int(self.starts[s, j]), int(self.ends[s, j])]
            wr.writerow(row)
        return buf.getvalue()


def default_beta(counts) -> float:
    pos = [c for c in counts if c > 0]
    if not pos:
        return 1.0
    return max(1.0, float(np.median(pos)))


def schedule_pipeline(
    busy: list[np.ndarray],
    groups: list[list[int]] | None = None,
    chunks: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Start/end cycles of each stage over units, (stages, units) each.

    Two-slot buffers between adjacent stages, slots allocated per group;
    ``chunks`` > 1 streams sub-unit chunks across the last boundary.
    """
    n_stages = len(busy)
    n = len(busy[0])
    if groups is None:
        groups = [[j] for j in range(n)]
    group_id = np.empty(n, dtype=np.int64)
    group_last = []
    for gi, members in enumerate(groups):
        for j in members:
            group_id[j] = gi
        group_last.append(members[-1])

    starts = np.zeros((n_stages, n), dtype=np.int64)
    ends = np.zeros((n_stages, n), dtype=np.int64)

    def slot_free(consumer_stage: int, j: int) -> int:
        g = group_id[j] - 2
        if g < 0:
            return 0
        return int(ends[consumer_stage, group_last[g]])

    last = n_stages - 1
    for j in range(n):
        for s in range(n_stages):
            t = int(ends[s, j - 1]) if j else 0
            if s > 0:
                t = max(t, int(ends[s - 1, j]))
            if s < last:
                t = max(t, slot_free(s + 1, j))
            if s == last and chunks > 1 and busy[s][j] > 0 and s > 0:
                # stream: chunk i of the producer unlocks chunk i here
                prod_prefix = np.cumsum(_split_int(int(busy[s - 1][j]), chunks)) + starts[s - 1, j]
                cons_parts = _split_int(int(busy[s][j]), chunks)
                cur = int(ends[s, j - 1]) if j else 0
                first = None
                for i in range(chunks):
                    cs = max(cur, int(prod_prefix[i]))
                    if first is None:
                        first = cs
                    cur = cs + cons_parts[i]
                starts[s, j] = first
                ends[s, j] = cur
            else:
                starts[s, j] = t
                ends[s, j] = t + busy[s][j]
    return starts, ends


def simulate(
    workloads: list[TileWorkload],
    cost: CostModel = CostModel(),
    features: SimFeatures = SimFeatures(),
) -> SimTrace:
    """Event-free deterministic schedule of the three stages over the tiles."""
    if not workloads:
        raise ValueError("workloads must be nonempty")
    counts = np.array([w.intersection_count for w in workloads], dtype=np.int64)
    n = len(counts)
    busy = cost.stage_cycles(counts)

    beta = cost.merge_beta if cost.merge_beta is not None else default_beta(counts)
    groups = merge_tiles(counts, beta) if features.tile_merging else None
    chunks = cost.chunks_per_tile if features.incremental else 1
    starts, ends = schedule_pipeline(busy, groups, chunks)
    if groups is None:
        group_id = np.arange(n, dtype=np.int64)
    else:
        group_id = np.empty(n, dtype=np.int64)
        for gi, members in enumerate(groups):
            for j in members:
                group_id[j] = gi

    makespan = int(ends.max())
    stage_busy = tuple(int(b.sum()) for b in busy)
    stage_stall = []
    for s in range(len(busy)):
        window = int(ends[s].max() - starts[s].min())
        stage_stall.append(max(0, window - stage_busy[s]))
    util = tuple(b / makespan if makespan else 0.0 for b in stage_busy)
    return SimTrace(
        stage_busy=stage_busy,
        stage_stall=tuple(stage_stall),
        makespan=makespan,
        utilization=util,
        starts=starts,
        ends=ends,
        tile_ids=[w.tile_id for w in workloads],
        group_ids=group_id,
        beta=float(beta),
        features=features,
    )


def simulate_feature_sweep(workloads: list[TileWorkload], cost: CostModel = CostModel()) -> dict[str, SimTrace]:
    """The three configurations the comparison table reports."""
    return {
        "baseline": simulate(workloads, cost, SimFeatures(False, False)),
        "TM": simulate(workloads, cost, SimFeatures(True, False)),
        "TM+IP": simulate(workloads, cost, SimFeatures(True, True)),
    }


@dataclass
class ImbalanceReport:
    heatmap: np.ndarray
    q1: float
    median: float
    q3: float
    whisker_low: float
    whisker_high: float
    max: int
    max_over_median: float

    def to_dict(self) -> dict:
        return {
            "grid": list(self.heatmap.shape[::-1]),
            "heatmap": self.heatmap.tolist(),
            "q1": self.q1,
            "median": self.median,
            "q3": self.q3,
            "whisker_low": self.whisker_low,
            "whisker_high": self.whisker_high,
            "max": self.max,
            "max_over_median": self.max_over_median,
        }


def imbalance_report(workloads: list[TileWorkload], grid: tuple[int, int]) -> ImbalanceReport:
    """Boxplot statistics (1.5 IQR whiskers) over the full tile grid."""
    heat = counts_grid(workloads, grid)
    flat = heat.reshape(-1).astype(np.float64)
    q1, med, q3 = (float(np.percentile(flat, p)) for p in (25, 50, 75))
    iqr = q3 - q1
    lo_lim, hi_lim = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = flat[(flat >= lo_lim) & (flat <= hi_lim)]
    wlo = float(inside.min()) if inside.size else q1
    whi = float(inside.max()) if inside.size else q3
    mx = int(flat.max(initial=0))
    ratio = mx / med if med > 0 else math.inf
    return ImbalanceReport(
        heatmap=heat,
        q1=q1,
        median=med,
        q3=q3,
        whisker_low=wlo,
        whisker_high=whi,
        max=mx,
        max_over_median=float(ratio),
    )
