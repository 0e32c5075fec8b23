"""Synthetic scenes: desk-scale stand-ins for dataset-trained dense models."""

from __future__ import annotations

import math

import numpy as np

from .camera import Camera
from .model import FrModel
from .sh import rgb_to_dc

PLANE_EXTENT = 1.0  # textured plane spans [-1, 1]^2 at z = 0


# fine stochastic-looking detail: fixed sinusoid bank (freq cycles/uv-unit,
# orientation, phase, amplitude); the wiggle room peripheral pooling exploits
_DETAIL_WAVES = (
    (6.0, 0.4, 0.0, 0.055),
    (7.5, 2.1, 1.3, 0.050),
    (9.0, 1.0, 2.6, 0.046),
    (11.0, 2.8, 0.7, 0.042),
    (13.0, 0.2, 1.9, 0.038),
    (15.0, 1.6, 3.0, 0.034),
)


def plane_texture(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Analytic RGB texture on [0, 1]^2: smooth base plus fine quasi-noise.

    Values stay within [0.05, 0.95]; the detail component gives peripheral
    poolings texture statistics to match rather than exact pixels.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    tau = 2.0 * math.pi
    r = 0.5 + 0.13 * np.sin(tau * (1.3 * u + 0.4 * v)) + 0.10 * np.cos(tau * 0.8 * v)
    g = 0.5 + 0.11 * np.sin(tau * (0.5 * u - 1.1 * v) + 0.7) + 0.10 * np.cos(tau * (0.9 * u + 0.3 * v))
    b = 0.5 + 0.12 * np.cos(tau * (0.7 * u + 0.9 * v) + 0.3) + 0.09 * np.sin(tau * 1.2 * u)
    detail = np.zeros_like(u)
    for freq, theta, phase, amp in _DETAIL_WAVES:
        detail = detail + amp * np.sin(tau * freq * (math.cos(theta) * u + math.sin(theta) * v) + phase)
    return np.stack([r + detail, g + 0.8 * detail, b + 0.9 * detail], axis=-1)


def plane_target_image(camera: Camera, background=(0.0, 0.0, 0.0), extent: float = PLANE_EXTENT) -> np.ndarray:
    """Analytic render of the textured plane: per-pixel ray/plane intersection."""
    xs = (np.arange(camera.width, dtype=np.float64) + 0.5 - camera.cx) / camera.fx
    ys = (np.arange(camera.height, dtype=np.float64) + 0.5 - camera.cy) / camera.fy
    dirs_cam = np.stack(
        [
            np.broadcast_to(xs[None, :], (camera.height, camera.width)),
            np.broadcast_to(ys[:, None], (camera.height, camera.width)),
            np.ones((camera.height, camera.width)),
        ],
        axis=-1,
    )
    dirs_world = dirs_cam @ camera.rotation  # R^T applied row-wise
    origin = camera.center
    dz = dirs_world[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(np.abs(dz) > 1e-12, -origin[2] / dz, -1.0)
    hit_x = origin[0] + t * dirs_world[..., 0]
    hit_y = origin[1] + t * dirs_world[..., 1]
    hit = (t > 0) & (np.abs(hit_x) <= extent) & (np.abs(hit_y) <= extent)
    u = (hit_x / extent + 1.0) * 0.5
    v = (hit_y / extent + 1.0) * 0.5
    img = np.broadcast_to(np.asarray(background, dtype=np.float64), (camera.height, camera.width, 3)).copy()
    tex = plane_texture(u[hit], v[hit])
    img[hit] = tex
    return img


def plane_orbit_cameras(
    count: int = 6,
    *,
    radius: float = 2.6,
    tilt_deg: float = 18.0,
    width: int = 96,
    height: int = 96,
    fov_deg: float = 50.0,
) -> list[Camera]:
    """Canonical rig for the textured plane: a ring of inward cameras above it."""
    return [
        Camera.orbit(360.0 * i / count, tilt_deg, radius, width=width, height=height, fov_deg=fov_deg)
        for i in range(count)
    ]


def _grid_scene(point_count: int, rng: np.random.Generator) -> dict:
    side = max(1, math.ceil(point_count ** (1.0 / 3.0)))
    coords = np.stack(
        np.meshgrid(*[np.arange(side)] * 3, indexing="ij"), axis=-1
    ).reshape(-1, 3)[:point_count]
    spacing = 1.6 / max(side - 1, 1)
    positions = (coords - (side - 1) / 2.0) * spacing
    scales = np.full((point_count, 3), 0.22 * spacing + 0.02)
    colors = rng.uniform(0.15, 0.85, size=(point_count, 3))
    return {"positions": positions, "scales": scales, "colors": colors}


def _sphere_scene(point_count: int, rng: np.random.Generator) -> dict:
    # Fibonacci lattice keeps the cap density uniform and deterministic.
    i = np.arange(point_count, dtype=np.float64)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    z = 1.0 - 2.0 * (i + 0.5) / point_count
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    positions = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    spacing = math.sqrt(4.0 * math.pi / point_count)
    scales = np.full((point_count, 3), 0.35 * spacing)
    colors = 0.5 + 0.35 * positions  # position-coded colors
    return {"positions": positions, "scales": scales, "colors": colors}


def _plane_scene(point_count: int, rng: np.random.Generator) -> dict:
    side = max(1, math.ceil(math.sqrt(point_count)))
    ij = np.stack(np.meshgrid(np.arange(side), np.arange(side), indexing="ij"), axis=-1)
    ij = ij.reshape(-1, 2)[:point_count].astype(np.float64)
    spacing = 2.0 * PLANE_EXTENT / side
    xy = (ij + 0.5) * spacing - PLANE_EXTENT
    xy += rng.uniform(-0.2, 0.2, size=xy.shape) * spacing
    z = rng.uniform(-0.02, 0.02, size=(point_count, 1))
    positions = np.concatenate([xy, z], axis=1)
    # deep overlap at moderate opacity: several splats cover each pixel, so
    # pruning a subset leaves coverage that opacity retuning can absorb
    scales = np.concatenate(
        [np.full((point_count, 2), 1.1 * spacing), np.full((point_count, 1), 0.02)],
        axis=1,
    )
    u = (xy[:, 0] / PLANE_EXTENT + 1.0) * 0.5
    v = (xy[:, 1] / PLANE_EXTENT + 1.0) * 0.5
    colors = plane_texture(u, v)
    return {"positions": positions, "scales": scales, "colors": colors, "opacity": 0.45}


_LAYOUTS = {"grid": _grid_scene, "sphere": _sphere_scene, "textured-plane": _plane_scene}


def make_synthetic_scene(layout: str, point_count: int, seed: int, sh_degree: int = 1) -> FrModel:
    """Deterministic synthetic scene; same (layout, count, seed) -> same model."""
    if point_count < 1:
        raise ValueError("point_count must be >= 1")
    if layout not in _LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}; choose from {sorted(_LAYOUTS)}")
    rng = np.random.default_rng(seed)
    parts = _LAYOUTS[layout](point_count, rng)
    n = point_count
    k = (sh_degree + 1) ** 2
    sh = np.zeros((n, k, 3))
    sh[:, 0, :] = rgb_to_dc(parts["colors"])
    if k > 1:
        sh[:, 1:, :] = rng.normal(0.0, 0.01, size=(n, k - 1, 3))
    quats = np.zeros((n, 4))
    quats[:, 0] = 1.0
    model = FrModel(
        positions=parts["positions"],
        scales=parts["scales"],
        rotations=quats,
        opacities=np.full(n, parts.get("opacity", 0.85)),
        sh=sh,
        quality_bound=np.ones(n, dtype=np.int32),
        level_count=1,
    )
    return model.validate()


def oversized_splat_scene(point_count: int = 120, seed: int = 3, n_oversized: int = 2) -> FrModel:
    """Textured-plane scene with a few bloated low-contribution splats.

    The oversized splats sit just above the plane with moderate opacity, so a
    scale-decay run can shrink them without a visible quality cost.
    """
    model = make_synthetic_scene("textured-plane", point_count, seed)
    rng = np.random.default_rng(seed + 1)
    idx = rng.choice(point_count, size=n_oversized, replace=False)
    model.scales[idx, :2] = 0.9
    model.scales[idx, 2] = 0.05
    model.positions[idx, 2] = 0.04  # in front of the plane
    model.opacities[idx] = 0.08
    model.sh[idx, 0, :] = rgb_to_dc(np.full((n_oversized, 3), 0.5))
    return model.validate()
