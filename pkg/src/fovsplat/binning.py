"""Tile binning and per-tile depth sorting, plus workload file I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .projection import ProjectedSplats


@dataclass
class TileWorkload:
    """Splats assigned to one tile, sorted front to back.

    ``splat_list`` holds rows into the ProjectedSplats arrays that produced
    the binning (not model indices); ties in depth break by model index.
    """

    tile_id: tuple[int, int]  # (tx, ty)
    intersection_count: int
    splat_list: np.ndarray


def tile_grid_shape(width: int, height: int, tile_size: int) -> tuple[int, int]:
    return (-(-width // tile_size), -(-height // tile_size))


def bin_and_sort(
    splats: ProjectedSplats,
    tile_size: int,
    width: int,
    height: int,
) -> tuple[list[TileWorkload], tuple[int, int]]:
    """Assign each splat to every tile its 3-sigma box overlaps.

    Returns the non-empty tiles in raster-scan order and the grid shape.
    """
    if tile_size < 1:
        raise ValueError("tile_size must be >= 1")
    txc, tyc = tile_grid_shape(width, height, tile_size)
    m = len(splats)
    if m == 0:
        return [], (txc, tyc)
    bb = splats.bboxes
    tx0 = np.clip(np.floor(bb[:, 0] / tile_size).astype(np.int64), 0, txc - 1)
    ty0 = np.clip(np.floor(bb[:, 1] / tile_size).astype(np.int64), 0, tyc - 1)
    tx1 = np.clip(np.floor(bb[:, 2] / tile_size).astype(np.int64), 0, txc - 1)
    ty1 = np.clip(np.floor(bb[:, 3] / tile_size).astype(np.int64), 0, tyc - 1)
    nx = tx1 - tx0 + 1
    ny = ty1 - ty0 + 1
    counts = nx * ny
    total = int(counts.sum())
    rows = np.repeat(np.arange(m, dtype=np.int64), counts)
    starts = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(counts, out=starts[1:])
    local = np.arange(total, dtype=np.int64) - np.repeat(starts[:-1], counts)
    nx_rep = np.repeat(nx, counts)
    tx = np.repeat(tx0, counts) + local % nx_rep
    ty = np.repeat(ty0, counts) + local // nx_rep
    tile_lin = ty * txc + tx

    order = np.lexsort((splats.source_index[rows], splats.depths[rows], tile_lin))
    tile_lin = tile_lin[order]
    rows = rows[order]
    uniq, first = np.unique(tile_lin, return_index=True)
    bounds = np.append(first, total)
    workloads = []
    for i, lin in enumerate(uniq):
        lst = rows[bounds[i] : bounds[i + 1]].astype(np.int32)
        workloads.append(
            TileWorkload(
                tile_id=(int(lin % txc), int(lin // txc)),
                intersection_count=len(lst),
                splat_list=lst,
            )
        )
    return workloads, (txc, tyc)


def counts_grid(workloads: list[TileWorkload], grid: tuple[int, int]) -> np.ndarray:
    """Dense (tyc, txc) grid of intersection counts, zeros where empty."""
    txc, tyc = grid
    out = np.zeros((tyc, txc), dtype=np.int64)
    for w in workloads:
        out[w.tile_id[1], w.tile_id[0]] += w.intersection_count
    return out


def save_workloads(path, workloads: list[TileWorkload], grid: tuple[int, int], tile_size: int, meta: dict | None = None) -> None:
    doc = {
        "tile_size": tile_size,
        "grid": [int(grid[0]), int(grid[1])],
        "tiles": [
            {"tx": int(w.tile_id[0]), "ty": int(w.tile_id[1]), "count": int(w.intersection_count)}
            for w in workloads
        ],
    }
    if meta:
        doc["meta"] = meta
    Path(path).write_text(json.dumps(doc, indent=1))


def load_workloads(path) -> tuple[list[TileWorkload], tuple[int, int], int]:
    doc = json.loads(Path(path).read_text())
    grid = (int(doc["grid"][0]), int(doc["grid"][1]))
    workloads = [
        TileWorkload(
            tile_id=(int(t["tx"]), int(t["ty"])),
            intersection_count=int(t["count"]),
            splat_list=np.empty(0, dtype=np.int32),
        )
        for t in doc["tiles"]
    ]
    return workloads, grid, int(doc["tile_size"])
