"""Real spherical-harmonics color evaluation, degrees 0..3.

Colors follow the splatting convention ``clamp(0.5 + sum_k b_k(d) c_k, 0, 1)``
with the DC term carrying most of the signal.
"""

from __future__ import annotations

import numpy as np

C0 = 0.28209479177387814
C1 = 0.4886025119029199
C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792, 0.5462742152960396)
C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)


def sh_basis(dirs: np.ndarray, degree: int) -> np.ndarray:
    """Basis values b_k for unit directions; (N, 3) -> (N, K)."""
    dirs = np.atleast_2d(dirs)
    n = len(dirs)
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    k = (degree + 1) ** 2
    b = np.empty((n, k), dtype=np.float64)
    b[:, 0] = C0
    if degree >= 1:
        b[:, 1] = -C1 * y
        b[:, 2] = C1 * z
        b[:, 3] = -C1 * x
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        b[:, 4] = C2[0] * x * y
        b[:, 5] = C2[1] * y * z
        b[:, 6] = C2[2] * (2 * zz - xx - yy)
        b[:, 7] = C2[3] * x * z
        b[:, 8] = C2[4] * (xx - yy)
    if degree >= 3:
        b[:, 9] = C3[0] * y * (3 * xx - yy)
        b[:, 10] = C3[1] * x * y * z
        b[:, 11] = C3[2] * y * (4 * zz - xx - yy)
        b[:, 12] = C3[3] * z * (2 * zz - 3 * xx - 3 * yy)
        b[:, 13] = C3[4] * x * (4 * zz - xx - yy)
        b[:, 14] = C3[5] * z * (xx - yy)
        b[:, 15] = C3[6] * x * (xx - 3 * yy)
    return b


def sh_basis_grad(dirs: np.ndarray, degree: int) -> np.ndarray:
    """d b_k / d dir for unit directions; (N, 3) -> (N, K, 3)."""
    dirs = np.atleast_2d(dirs)
    n = len(dirs)
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    k = (degree + 1) ** 2
    g = np.zeros((n, k, 3), dtype=np.float64)
    if degree >= 1:
        g[:, 1, 1] = -C1
        g[:, 2, 2] = C1
        g[:, 3, 0] = -C1
    if degree >= 2:
        g[:, 4, 0] = C2[0] * y
        g[:, 4, 1] = C2[0] * x
        g[:, 5, 1] = C2[1] * z
        g[:, 5, 2] = C2[1] * y
        g[:, 6, 0] = -2 * C2[2] * x
        g[:, 6, 1] = -2 * C2[2] * y
        g[:, 6, 2] = 4 * C2[2] * z
        g[:, 7, 0] = C2[3] * z
        g[:, 7, 2] = C2[3] * x
        g[:, 8, 0] = 2 * C2[4] * x
        g[:, 8, 1] = -2 * C2[4] * y
    if degree >= 3:
        xx, yy, zz = x * x, y * y, z * z
        g[:, 9, 0] = 6 * C3[0] * x * y
        g[:, 9, 1] = C3[0] * (3 * xx - 3 * yy)
        g[:, 10, 0] = C3[1] * y * z
        g[:, 10, 1] = C3[1] * x * z
        g[:, 10, 2] = C3[1] * x * y
        g[:, 11, 0] = -2 * C3[2] * x * y
        g[:, 11, 1] = C3[2] * (4 * zz - xx - 3 * yy)
        g[:, 11, 2] = 8 * C3[2] * y * z
        g[:, 12, 0] = -6 * C3[3] * x * z
        g[:, 12, 1] = -6 * C3[3] * y * z
        g[:, 12, 2] = C3[3] * (6 * zz - 3 * xx - 3 * yy)
        g[:, 13, 0] = C3[4] * (4 * zz - 3 * xx - yy)
        g[:, 13, 1] = -2 * C3[4] * x * y
        g[:, 13, 2] = 8 * C3[4] * x * z
        g[:, 14, 0] = 2 * C3[5] * x * z
        g[:, 14, 1] = -2 * C3[5] * y * z
        g[:, 14, 2] = C3[5] * (xx - yy)
        g[:, 15, 0] = C3[6] * (3 * xx - 3 * yy)
        g[:, 15, 1] = -6 * C3[6] * x * y
    return g


def eval_sh_color(coeffs: np.ndarray, dirs: np.ndarray, degree: int | None = None):
    """Raw (unclamped) colors ``0.5 + sum_k b_k c_k``; (N, K, 3), (N, 3) -> (N, 3)."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if degree is None:
        degree = int(round(coeffs.shape[1] ** 0.5)) - 1
    b = sh_basis(dirs, degree)
    return 0.5 + np.einsum("nk,nkc->nc", b, coeffs)


def rgb_to_dc(rgb: np.ndarray) -> np.ndarray:
    """DC coefficients that reproduce ``rgb`` under a zero higher-order stack."""
    return (np.asarray(rgb, dtype=np.float64) - 0.5) / C0
