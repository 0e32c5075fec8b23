"""Projection of 3D Gaussians to screen-space splats (EWA-style)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Camera
from .model import FrModel, quat_to_rotmat
from .sh import sh_basis


@dataclass(frozen=True)
class RenderConfig:
    """Rasterizer constants; 3DGS-lineage defaults."""

    tile_size: int = 16
    alpha_max: float = 0.99
    alpha_min: float = 1.0 / 255.0
    t_stop: float = 1e-4
    sigma_cutoff: float = 3.0  # alpha has finite support at this Mahalanobis radius
    dilation: float = 0.3  # px^2 added to the 2D covariance diagonal
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass
class ProjectedSplats:
    """Screen-space splats at one quality level (struct of arrays)."""

    means2d: np.ndarray  # (M, 2) pixels
    conics: np.ndarray  # (M, 3) inverse 2D covariance, (a, b, c) upper triangle
    depths: np.ndarray  # (M,) camera-space z
    colors: np.ndarray  # (M, 3) SH colors clamped to [0, 1]
    alphas: np.ndarray  # (M,) opacity after the level override
    bboxes: np.ndarray  # (M, 4) x0, y0, x1, y1 of the 3-sigma box, pixels
    source_index: np.ndarray  # (M,) row into the model
    quality_bound: np.ndarray  # (M,)
    level: int
    n_culled: int

    def __len__(self) -> int:
        return len(self.depths)


def compute_cov3d(scales: np.ndarray, quats: np.ndarray) -> np.ndarray:
    """World-space covariances R diag(s^2) R^T; (N,3),(N,4) -> (N,3,3)."""
    quats = quats / np.linalg.norm(quats, axis=1, keepdims=True)
    R = quat_to_rotmat(quats)
    M = R * scales[:, None, :]
    return M @ M.transpose(0, 2, 1)


def perspective_jacobian(p_cam: np.ndarray, fx: float, fy: float) -> np.ndarray:
    """Pinhole projection Jacobian at camera-space points; (N,3) -> (N,2,3)."""
    x, y, z = p_cam[:, 0], p_cam[:, 1], p_cam[:, 2]
    J = np.zeros((len(p_cam), 2, 3), dtype=np.float64)
    J[:, 0, 0] = fx / z
    J[:, 0, 2] = -fx * x / (z * z)
    J[:, 1, 1] = fy / z
    J[:, 1, 2] = -fy * y / (z * z)
    return J


def project(
    model: FrModel,
    camera: Camera,
    level: int = 1,
    config: RenderConfig = RenderConfig(),
    include_mask: np.ndarray | None = None,
) -> ProjectedSplats:
    """Project the points participating at ``level`` into screen space.

    Culls points outside (near, far) or whose 3-sigma box misses the image.
    The 2D covariance is J W Sigma W^T J^T plus a diagonal dilation; colors
    use the level's SH-DC override, opacities the level's opacity override.
    """
    mask = model.level_mask(level)
    if include_mask is not None:
        mask = mask & include_mask
    src = np.flatnonzero(mask)
    n_selected = len(src)

    p_world = model.positions[src]
    p_cam = camera.world_to_camera(p_world)
    z = p_cam[:, 2]
    keep = (z > camera.near) & (z < camera.far)
    src = src[keep]
    p_world = p_world[keep]
    p_cam = p_cam[keep]
    z = z[keep]

    cov3d = compute_cov3d(model.scales[src], model.rotations[src])
    W = camera.rotation
    cov_cam = W[None] @ cov3d @ W.T[None]
    J = perspective_jacobian(p_cam, camera.fx, camera.fy)
    cov2d = J @ cov_cam @ J.transpose(0, 2, 1)
    cov2d[:, 0, 0] += config.dilation
    cov2d[:, 1, 1] += config.dilation

    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det = a * c - b * b
    pd = det > 0
    mean_x = camera.fx * p_cam[:, 0] / z + camera.cx
    mean_y = camera.fy * p_cam[:, 1] / z + camera.cy
    ext_x = config.sigma_cutoff * np.sqrt(np.maximum(a, 0.0))
    ext_y = config.sigma_cutoff * np.sqrt(np.maximum(c, 0.0))
    x0, x1 = mean_x - ext_x, mean_x + ext_x
    y0, y1 = mean_y - ext_y, mean_y + ext_y
    on_screen = (x1 >= 0) & (x0 <= camera.width) & (y1 >= 0) & (y0 <= camera.height)
    keep = pd & on_screen

    src = src[keep]
    p_world = p_world[keep]
    inv_det = 1.0 / det[keep]
    conics = np.stack([c[keep] * inv_det, -b[keep] * inv_det, a[keep] * inv_det], axis=1)

    opac_eff, dc_eff = model.effective_params(level)
    dirs = p_world - camera.center
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    coeffs = model.sh[src].copy()
    coeffs[:, 0, :] = dc_eff[src]
    basis = sh_basis(dirs, model.sh_degree)
    colors = np.clip(0.5 + np.einsum("nk,nkc->nc", basis, coeffs), 0.0, 1.0)

    return ProjectedSplats(
        means2d=np.stack([mean_x[keep], mean_y[keep]], axis=1),
        conics=conics,
        depths=z[keep],
        colors=colors,
        alphas=opac_eff[src],
        bboxes=np.stack([x0[keep], y0[keep], x1[keep], y1[keep]], axis=1),
        source_index=src.astype(np.int64),
        quality_bound=model.quality_bound[src],
        level=level,
        n_culled=n_selected - len(src),
    )
