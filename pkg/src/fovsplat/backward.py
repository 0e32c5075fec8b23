"""Analytic gradients of a rendered image w.r.t. model parameters.

The blending stage is replayed per tile (same inclusion rules as the forward
pass) to form per-splat gradients on color, opacity, 2D mean, and conic;
these then chain through the covariance projection, the quaternion-to-
rotation map, SH evaluation, and the view-direction normalization. At a
render of level l >= 2 the opacity/SH-DC gradients flow to that level's
override records; base parameters of other levels receive exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import Camera
from .model import FrModel, quat_to_rotmat
from .projection import RenderConfig, perspective_jacobian
from .rasterize import RenderOutput, _tile_alphas
from .sh import sh_basis, sh_basis_grad


@dataclass
class Gradients:
    positions: np.ndarray
    scales: np.ndarray
    rotations: np.ndarray
    opacities: np.ndarray
    sh: np.ndarray
    override_opacity: np.ndarray
    override_sh_dc: np.ndarray
    # pixels where the alpha ceiling clipped the gradient, for reporting
    n_alpha_clamped: int = 0

    @classmethod
    def zeros_like(cls, model: FrModel) -> "Gradients":
        return cls(
            positions=np.zeros_like(model.positions),
            scales=np.zeros_like(model.scales),
            rotations=np.zeros_like(model.rotations),
            opacities=np.zeros_like(model.opacities),
            sh=np.zeros_like(model.sh),
            override_opacity=np.zeros_like(model.override_opacity),
            override_sh_dc=np.zeros_like(model.override_sh_dc),
        )

    def accumulate(self, other: "Gradients") -> None:
        for name in ("positions", "scales", "rotations", "opacities", "sh", "override_opacity", "override_sh_dc"):
            getattr(self, name).__iadd__(getattr(other, name))
        self.n_alpha_clamped += other.n_alpha_clamped


def _quat_rot_grads(q: np.ndarray) -> np.ndarray:
    """dR/dq for unit quaternions (w, x, y, z); (N, 4) -> (N, 4, 3, 3)."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    n = len(q)
    g = np.zeros((n, 4, 3, 3), dtype=np.float64)
    # dR/dw
    g[:, 0, 0, 1] = -2 * z
    g[:, 0, 0, 2] = 2 * y
    g[:, 0, 1, 0] = 2 * z
    g[:, 0, 1, 2] = -2 * x
    g[:, 0, 2, 0] = -2 * y
    g[:, 0, 2, 1] = 2 * x
    # dR/dx
    g[:, 1, 0, 1] = 2 * y
    g[:, 1, 0, 2] = 2 * z
    g[:, 1, 1, 0] = 2 * y
    g[:, 1, 1, 1] = -4 * x
    g[:, 1, 1, 2] = -2 * w
    g[:, 1, 2, 0] = 2 * z
    g[:, 1, 2, 1] = 2 * w
    g[:, 1, 2, 2] = -4 * x
    # dR/dy
    g[:, 2, 0, 0] = -4 * y
    g[:, 2, 0, 1] = 2 * x
    g[:, 2, 0, 2] = 2 * w
    g[:, 2, 1, 0] = 2 * x
    g[:, 2, 1, 2] = 2 * z
    g[:, 2, 2, 0] = -2 * w
    g[:, 2, 2, 1] = 2 * z
    g[:, 2, 2, 2] = -4 * y
    # dR/dz
    g[:, 3, 0, 0] = -4 * z
    g[:, 3, 0, 1] = -2 * w
    g[:, 3, 0, 2] = 2 * x
    g[:, 3, 1, 0] = 2 * w
    g[:, 3, 1, 1] = -4 * z
    g[:, 3, 1, 2] = 2 * y
    g[:, 3, 2, 0] = 2 * x
    g[:, 3, 2, 1] = 2 * y
    return g


def backward(
    model: FrModel,
    camera: Camera,
    output: RenderOutput,
    dl_dimage: np.ndarray,
    config: RenderConfig = RenderConfig(),
) -> Gradients:
    """Gradient of ``sum(dl_dimage * image)`` w.r.t. every model parameter."""
    grads = Gradients.zeros_like(model)
    splats = output.splats
    m = len(splats)
    if m == 0:
        return grads
    level = output.level
    src = splats.source_index
    bg = output.background

    # per-splat accumulators from the blending replay
    g_color = np.zeros((m, 3))
    g_opacity = np.zeros(m)
    g_mean = np.zeros((m, 2))
    g_conic = np.zeros((m, 2, 2))  # full-matrix gradient
    n_clamped = 0

    ts = output.tile_size
    for work in output.tile_workloads:
        tx, ty = work.tile_id
        x0, y0 = tx * ts, ty * ts
        x1, y1 = min(x0 + ts, output.width), min(y0 + ts, output.height)
        xs = np.arange(x0, x1, dtype=np.float64) + 0.5
        ys = np.arange(y0, y1, dtype=np.float64) + 0.5
        rows = work.splat_list
        k = len(rows)
        alpha, g, dx, dy = _tile_alphas(splats, rows, xs, ys, config)
        one_minus = 1.0 - alpha
        t_after = np.cumprod(one_minus, axis=0)
        t_before = np.vstack([np.ones((1, alpha.shape[1])), t_after[:-1]])
        include = t_after >= config.t_stop
        active = include & (alpha > 0.0)
        contrib = alpha * t_before * include
        t_final = np.prod(np.where(include, one_minus, 1.0), axis=0)
        colors = splats.colors[rows]

        dl = dl_dimage[y0:y1, x0:x1].reshape(-1, 3)  # (P, 3)

        # d pixel / d color_i = contrib_i
        g_color[rows] += contrib @ dl

        # contract channels first: cd = <c_i, dl_p>, then suffix sums over depth
        cd = colors @ dl.T  # (K, P)
        wd = contrib * cd
        suffix = np.flip(np.cumsum(np.flip(wd, axis=0), axis=0), axis=0) - wd
        bg_dot = dl @ bg  # (P,)
        denom = np.where(active, one_minus, 1.0)
        g_alpha = t_before * cd - (suffix + t_final[None, :] * bg_dot[None, :]) / denom
        g_alpha[~active] = 0.0

        clamped = active & (splats.alphas[rows, None] * g >= config.alpha_max)
        n_clamped += int(np.count_nonzero(clamped & (g_alpha != 0.0)))
        g_alpha_open = np.where(clamped, 0.0, g_alpha)

        g_g = g_alpha_open * splats.alphas[rows, None]
        g_opacity[rows] += np.einsum("kp,kp->k", g_alpha_open, g)

        con = splats.conics[rows]
        ax = con[:, 0, None] * dx + con[:, 1, None] * dy
        ay = con[:, 1, None] * dx + con[:, 2, None] * dy
        gg = g_g * g
        g_mean[rows, 0] += np.einsum("kp,kp->k", gg, ax)
        g_mean[rows, 1] += np.einsum("kp,kp->k", gg, ay)
        half = -0.5 * gg
        g_conic[rows, 0, 0] += np.einsum("kp,kp->k", half, dx * dx)
        g_conic[rows, 0, 1] += np.einsum("kp,kp->k", half, dx * dy)
        g_conic[rows, 1, 0] += np.einsum("kp,kp->k", half, dx * dy)
        g_conic[rows, 1, 1] += np.einsum("kp,kp->k", half, dy * dy)

    # ---- chain through the projection, vectorized over splats ----
    p_world = model.positions[src]
    quats = model.rotations[src]
    qn = np.linalg.norm(quats, axis=1, keepdims=True)
    quats_unit = quats / qn
    scales = model.scales[src]
    p_cam = camera.world_to_camera(p_world)
    x, y, z = p_cam[:, 0], p_cam[:, 1], p_cam[:, 2]
    fx, fy = camera.fx, camera.fy
    W = camera.rotation

    R = quat_to_rotmat(quats_unit)
    M3 = R * scales[:, None, :]
    cov3d = M3 @ M3.transpose(0, 2, 1)
    cov_cam = W[None] @ cov3d @ W.T[None]
    J = perspective_jacobian(p_cam, fx, fy)
    cov2d = J @ cov_cam @ J.transpose(0, 2, 1)
    cov2d[:, 0, 0] += config.dilation
    cov2d[:, 1, 1] += config.dilation
    A = np.linalg.inv(cov2d)

    # conic = inv(cov2d):  dL/dcov2d = -A dL/dA A
    g_cov2d = -A @ g_conic @ A
    g_cov_cam = J.transpose(0, 2, 1) @ g_cov2d @ J
    g_J = g_cov2d @ J @ cov_cam.transpose(0, 2, 1) + g_cov2d.transpose(0, 2, 1) @ J @ cov_cam

    z2 = z * z
    g_pcam = np.zeros_like(p_cam)
    # J entries: J00 = fx/z, J02 = -fx x / z^2, J11 = fy/z, J12 = -fy y / z^2
    g_pcam[:, 0] += g_J[:, 0, 2] * (-fx / z2)
    g_pcam[:, 1] += g_J[:, 1, 2] * (-fy / z2)
    g_pcam[:, 2] += (
        g_J[:, 0, 0] * (-fx / z2)
        + g_J[:, 1, 1] * (-fy / z2)
        + g_J[:, 0, 2] * (2 * fx * x / (z2 * z))
        + g_J[:, 1, 2] * (2 * fy * y / (z2 * z))
    )
    # mean2d = (fx x / z + cx, fy y / z + cy)
    g_pcam[:, 0] += g_mean[:, 0] * fx / z
    g_pcam[:, 1] += g_mean[:, 1] * fy / z
    g_pcam[:, 2] += -g_mean[:, 0] * fx * x / z2 - g_mean[:, 1] * fy * y / z2

    g_cov3d = W.T[None] @ g_cov_cam @ W[None]
    g_m3 = (g_cov3d + g_cov3d.transpose(0, 2, 1)) @ M3
    g_scales = np.einsum("nik,nik->nk", g_m3, R)
    g_R = g_m3 * scales[:, None, :]
    dR = _quat_rot_grads(quats_unit)
    g_qunit = np.einsum("nik,naik->na", g_R, dR)
    # through normalization q / |q|
    g_quat = (g_qunit - quats_unit * np.einsum("na,na->n", g_qunit, quats_unit)[:, None]) / qn

    # ---- color chain: SH and view direction ----
    opac_eff, dc_eff = model.effective_params(level)
    coeffs = model.sh[src].copy()
    coeffs[:, 0, :] = dc_eff[src]
    v = p_world - camera.center
    vn = np.linalg.norm(v, axis=1, keepdims=True)
    dirs = v / vn
    degree = model.sh_degree
    basis = sh_basis(dirs, degree)
    raw = 0.5 + np.einsum("nk,nkc->nc", basis, coeffs)
    open_color = (raw > 0.0) & (raw < 1.0)  # clamp has zero gradient outside
    g_raw = np.where(open_color, g_color, 0.0)

    g_coeffs = basis[:, :, None] * g_raw[:, None, :]  # (M, K, 3)
    bg_grad = sh_basis_grad(dirs, degree)  # (M, K, 3dir)
    g_dir = np.einsum("nkc,nkd->nd", coeffs * g_raw[:, None, :], bg_grad)
    g_v = (g_dir - dirs * np.einsum("nd,nd->n", g_dir, dirs)[:, None]) / vn

    g_pworld = g_pcam @ W + g_v

    # ---- scatter into model-shaped arrays ----
    grads.positions[src] = g_pworld
    grads.scales[src] = g_scales
    grads.rotations[src] = g_quat
    if level >= 2:
        points, rows_t = model.override_rows(level)
        lookup = np.full(model.n_points, -1, dtype=np.int64)
        lookup[points] = rows_t
        ov_rows = lookup[src]
        grads.override_opacity[ov_rows] = g_opacity
        grads.override_sh_dc[ov_rows] = g_coeffs[:, 0, :]
        grads.sh[src, 1:, :] = g_coeffs[:, 1:, :]
    else:
        grads.opacities[src] = g_opacity
        grads.sh[src] = g_coeffs
    grads.n_alpha_clamped = n_clamped
    return grads
