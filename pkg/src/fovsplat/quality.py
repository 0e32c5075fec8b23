"""Differentiable quality losses for fine-tuning: L1, SSIM-like, PSNR, HVSQ."""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import fftconvolve

from .hvs import HvsConfig, PoolingMap, hvsq, hvsq_value_and_gradient, image_stats

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
SSIM_WINDOW = 7


def mse(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean((np.asarray(a) - np.asarray(b)) ** 2))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1]."""
    m = mse(a, b)
    if m <= 0:
        return math.inf
    return -10.0 * math.log10(m)


def l1_loss(rendered: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    diff = rendered - target
    grad = np.sign(diff) / diff.size
    return float(np.abs(diff).mean()), grad


def neg_psnr_loss(rendered: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """-PSNR as a loss (lower is better); gradient is a scaled MSE gradient."""
    diff = rendered - target
    m = float(np.mean(diff**2))
    if m <= 1e-12:
        return -120.0, np.zeros_like(diff)
    grad = (10.0 / math.log(10.0)) / m * (2.0 * diff / diff.size)
    return 10.0 * math.log10(m), grad


def _box_valid(x: np.ndarray, w: int) -> np.ndarray:
    return fftconvolve(x, np.ones((w, w)), mode="valid")


def ssim_loss(rendered: np.ndarray, target: np.ndarray, window: int = SSIM_WINDOW) -> tuple[float, np.ndarray]:
    """(1 - SSIM, gradient w.r.t. rendered); uniform window, valid positions."""
    h, wd = rendered.shape[:2]
    if h < window or wd < window:
        raise ValueError(f"image smaller than the {window}x{window} SSIM window")
    n = window * window
    grad = np.zeros_like(rendered)
    total = 0.0
    ones_scatter = np.ones((window, window))
    n_ch = rendered.shape[2]
    for c in range(n_ch):
        y = rendered[:, :, c]
        x = target[:, :, c]
        mu_x = _box_valid(x, window) / n
        mu_y = _box_valid(y, window) / n
        sxx = _box_valid(x * x, window) / n - mu_x**2
        syy = _box_valid(y * y, window) / n - mu_y**2
        sxy = _box_valid(x * y, window) / n - mu_x * mu_y
        a1 = 2 * mu_x * mu_y + SSIM_C1
        a2 = 2 * sxy + SSIM_C2
        b1 = mu_x**2 + mu_y**2 + SSIM_C1
        b2 = sxx + syy + SSIM_C2
        m = (a1 * a2) / (b1 * b2)
        total += float(m.mean())
        # d(mean m)/dy, distributed back over windows
        dl_dm = -1.0 / (m.size * n_ch)  # loss is 1 - mean(SSIM)
        g_mu = dl_dm * (2 * mu_x * a2 / (b1 * b2) - 2 * mu_y * m / b1)
        g_syy = dl_dm * (-m / b2)
        g_sxy = dl_dm * (2 * a1 / (b1 * b2))
        grad[:, :, c] += (
            fftconvolve(g_mu, ones_scatter, mode="full") / n
            + y * 2 * fftconvolve(g_syy, ones_scatter, mode="full") / n
            - 2 * fftconvolve(g_syy * mu_y, ones_scatter, mode="full") / n
            + x * fftconvolve(g_sxy, ones_scatter, mode="full") / n
            - fftconvolve(g_sxy * mu_x, ones_scatter, mode="full") / n
        )
    return 1.0 - total / n_ch, grad


def l1_ssim_loss(rendered: np.ndarray, target: np.ndarray, l1_weight: float = 0.8) -> tuple[float, np.ndarray]:
    v1, g1 = l1_loss(rendered, target)
    v2, g2 = ssim_loss(rendered, target)
    w2 = 1.0 - l1_weight
    return l1_weight * v1 + w2 * v2, l1_weight * g1 + w2 * g2


class QualityLoss:
    """Callable (rendered, target) -> (value, grad) with a value-only path."""

    def __init__(self, value_and_grad, value_only=None):
        self._vg = value_and_grad
        self._v = value_only

    def __call__(self, rendered, target):
        return self._vg(rendered, target)

    def value(self, rendered, target) -> float:
        if self._v is not None:
            return self._v(rendered, target)
        return self._vg(rendered, target)[0]


def as_quality_loss(loss) -> QualityLoss:
    return loss if isinstance(loss, QualityLoss) else QualityLoss(loss)


def make_quality_loss(
    kind: str,
    pooling: PoolingMap | None = None,
    region: np.ndarray | None = None,
    hvs_config: HvsConfig = HvsConfig(),
) -> QualityLoss:
    """(rendered, target) -> (value, d value / d rendered) for a loss kind."""
    if kind == "l1":
        return QualityLoss(l1_loss)
    if kind == "l1-ssim":
        return QualityLoss(l1_ssim_loss)
    if kind == "neg-psnr":
        return QualityLoss(neg_psnr_loss, lambda r, t: -psnr(r, t))
    if kind == "hvsq":
        if pooling is None:
            raise ValueError("hvsq loss needs a pooling map")
        ref_cache: dict[int, tuple] = {}

        def _ref_stats(target):
            hit = ref_cache.get(id(target))
            if hit is not None and hit[0] is target:
                return hit[1]
            if len(ref_cache) > 32:
                ref_cache.clear()
            stats = image_stats(target, pooling, hvs_config)
            ref_cache[id(target)] = (target, stats)
            return stats

        def vg(rendered, target):
            return hvsq_value_and_gradient(
                target, rendered, pooling, region, hvs_config, _ref_stats(target)
            )

        def v(rendered, target):
            return hvsq(target, rendered, pooling, region, hvs_config, _ref_stats(target))

        return QualityLoss(vg, v)
    raise ValueError(f"unknown quality loss {kind!r}")
