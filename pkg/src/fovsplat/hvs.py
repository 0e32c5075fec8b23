"""Eccentricity-aware image quality: pooled feature statistics.

The metric compares per-channel mean and standard deviation of a small
feature stack (luminance and finite-difference gradient magnitudes at two
scales) inside an eccentricity-sized disk around every pixel:

    HVSQ = (1/N) sum_i sum_c [ (M(a_i) - M(r_i))^2 + (sigma(a_i) - sigma(r_i))^2 ]

Pooling disks grow linearly in radius with eccentricity (so quadratically in
area), which gives the periphery progressively more slack. Radii are
quantized onto a short ladder so disk sums batch into a handful of FFT
convolutions; all kernels share one centered frame, letting gradient terms
accumulate in the frequency domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .camera import DisplayGeometry, eccentricity_map

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
_SIGMA_EPS = 1e-12


@dataclass(frozen=True)
class HvsConfig:
    pooling_rate: float = 0.25  # pooling diameter (deg) per degree of eccentricity
    min_radius: float = 0.5  # px
    max_radius: float | None = None  # optional px cap, bounds FFT cost at desk scale
    feature_scales: tuple[int, ...] = (1, 2)
    include_gradients: bool = True

    @property
    def n_channels(self) -> int:
        return len(self.feature_scales) * (3 if self.include_gradients else 1)


def _radius_ladder(max_radius: int) -> np.ndarray:
    vals = list(range(0, 9))
    r = 8.0
    while vals[-1] < max_radius:
        r *= 1.25
        vals.append(int(np.ceil(r)))
    return np.array(sorted(set(vals)), dtype=np.int64)


class _ConvEngine:
    """FFT convolution with disk kernels sharing one centered frame.

    Image FFTs are taken once; every kernel lives in a (2R+1)^2 frame
    centered at (R, R), so 'same' output is a fixed crop and per-radius
    frequency products can be summed before the inverse transform.
    """

    def __init__(self, shape: tuple[int, int], max_radius: int):
        self.shape = shape
        self.R = int(max_radius)
        h, w = shape
        self.S = (sfft.next_fast_len(h + 2 * self.R), sfft.next_fast_len(w + 2 * self.R))
        self._kernels: dict[int, np.ndarray] = {}
        self._counts: dict[int, np.ndarray] = {}

    def img_fft(self, img: np.ndarray) -> np.ndarray:
        return sfft.rfft2(img, self.S)

    def kern_fft(self, radius: int) -> np.ndarray:
        got = self._kernels.get(radius)
        if got is None:
            frame = np.zeros((2 * self.R + 1, 2 * self.R + 1))
            ax = np.arange(-radius, radius + 1)
            disk = (ax[None, :] ** 2 + ax[:, None] ** 2) <= radius * radius
            lo, hi = self.R - radius, self.R + radius + 1
            frame[lo:hi, lo:hi] = disk
            got = sfft.rfft2(frame, self.S)
            self._kernels[radius] = got
        return got

    def finish(self, freq: np.ndarray) -> np.ndarray:
        h, w = self.shape
        full = sfft.irfft2(freq, self.S)
        return full[self.R : self.R + h, self.R : self.R + w]

    def conv(self, img_fft: np.ndarray, radius: int) -> np.ndarray:
        return self.finish(img_fft * self.kern_fft(radius))

    def counts(self, radius: int) -> np.ndarray:
        got = self._counts.get(radius)
        if got is None:
            got = np.maximum(np.rint(self.conv(self.img_fft(np.ones(self.shape)), radius)), 1.0)
            self._counts[radius] = got
        return got


@dataclass
class PoolingMap:
    """Per-pixel pooling radius, quantized buckets, and the conv engine."""

    display: DisplayGeometry
    radii: np.ndarray  # (H, W) px
    radius_int: np.ndarray  # (H, W) ladder-quantized disk radius
    engine: _ConvEngine = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.radii.shape

    def buckets(self) -> list[int]:
        return [int(r) for r in np.unique(self.radius_int)]


def build_pooling_map(
    display: DisplayGeometry,
    rate: float = HvsConfig.pooling_rate,
    min_radius: float = HvsConfig.min_radius,
    max_radius: float | None = None,
) -> PoolingMap:
    """Disk radius max(min_radius, rate * ecc / 2 degrees) converted to px.

    ``rate`` is the pooling *diameter* in degrees per degree of eccentricity;
    the 0.5 px minimum keeps the gaze pooling a single pixel.
    """
    if rate < 0:
        raise ValueError("pooling rate must be >= 0")
    ecc = eccentricity_map(display)
    radii = np.maximum(min_radius, 0.5 * rate * ecc * display.pixels_per_degree)
    if max_radius is not None:
        radii = np.minimum(radii, max_radius)
    # round half down so the 0.5 px minimum stays a one-pixel pooling,
    # then snap to the ladder (largest step not above the radius)
    rounded = np.floor(radii + 0.5 - 1e-9).astype(np.int64)
    ladder = _radius_ladder(int(rounded.max()))
    idx = np.searchsorted(ladder, rounded, side="right") - 1
    radius_int = ladder[np.maximum(idx, 0)].astype(np.int32)
    engine = _ConvEngine(ecc.shape, int(radius_int.max()))
    return PoolingMap(display=display, radii=radii, radius_int=radius_int, engine=engine)


def luminance(image: np.ndarray) -> np.ndarray:
    return image @ LUMA_WEIGHTS


def _box_smooth(x: np.ndarray, s: int) -> np.ndarray:
    """s x s window average anchored top-left, replicate-padded at the ends."""
    if s == 1:
        return x
    h, w = x.shape
    xp = np.pad(x, ((0, s - 1), (0, s - 1)), mode="edge")
    out = np.zeros_like(x)
    for di in range(s):
        for dj in range(s):
            out += xp[di : di + h, dj : dj + w]
    return out / (s * s)


def _box_smooth_transpose(g: np.ndarray, s: int) -> np.ndarray:
    if s == 1:
        return g
    h, w = g.shape
    gp = np.zeros((h + s - 1, w + s - 1))
    for di in range(s):
        for dj in range(s):
            gp[di : di + h, dj : dj + w] += g
    gp /= s * s
    # fold the replicate padding back onto the edge rows/columns
    out = gp[:h, :w].copy()
    out[-1, :w] += gp[h:, :w].sum(axis=0)
    out[:h, -1] += gp[:h, w:].sum(axis=1)
    out[-1, -1] += gp[h:, w:].sum()
    return out


def compute_features(image: np.ndarray, config: HvsConfig = HvsConfig()) -> np.ndarray:
    """(C, H, W) feature stack; C = scales x {luma[, |dx|, |dy|]}."""
    lum = luminance(np.asarray(image, dtype=np.float64))
    chans = []
    for s in config.feature_scales:
        base = _box_smooth(lum, s)
        chans.append(base)
        if config.include_gradients:
            hg = np.zeros_like(base)
            hg[:, :-1] = np.abs(base[:, 1:] - base[:, :-1])
            vg = np.zeros_like(base)
            vg[:-1, :] = np.abs(base[1:, :] - base[:-1, :])
            chans.extend([hg, vg])
    return np.stack(chans)


def pooled_stats(features: np.ndarray, pooling: PoolingMap) -> tuple[np.ndarray, np.ndarray]:
    """Pooled (mean, std) per channel; population normalization, disk pooling."""
    c = features.shape[0]
    eng = pooling.engine
    mean = np.empty_like(features)
    std = np.empty_like(features)
    buckets = pooling.buckets()
    for ci in range(c):
        f_fft = f2_fft = None
        for r in buckets:
            mask = pooling.radius_int == r
            if r == 0:
                mean[ci][mask] = features[ci][mask]
                std[ci][mask] = 0.0
                continue
            if f_fft is None:
                f_fft = eng.img_fft(features[ci])
                f2_fft = eng.img_fft(features[ci] ** 2)
            counts = eng.counts(r)
            s1 = eng.conv(f_fft, r) / counts
            s2 = eng.conv(f2_fft, r) / counts
            var = np.maximum(s2 - s1 * s1, 0.0)
            mean[ci][mask] = s1[mask]
            std[ci][mask] = np.sqrt(var[mask])
    return mean, std


@dataclass
class ImageStats:
    """Features plus pooled statistics of one image, reusable across calls."""

    features: np.ndarray
    mean: np.ndarray
    std: np.ndarray


def image_stats(image: np.ndarray, pooling: PoolingMap, config: HvsConfig = HvsConfig()) -> ImageStats:
    if image.shape[:2] != pooling.shape:
        raise ValueError(f"image {image.shape[:2]} does not match pooling map {pooling.shape}")
    f = compute_features(image, config)
    m, s = pooled_stats(f, pooling)
    return ImageStats(features=f, mean=m, std=s)


def hvsq_terms(
    reference: np.ndarray,
    altered: np.ndarray,
    pooling: PoolingMap,
    config: HvsConfig = HvsConfig(),
    ref_stats: ImageStats | None = None,
    alt_stats: ImageStats | None = None,
) -> np.ndarray:
    """Per-pixel metric terms (H, W); HVSQ over a region is their mean."""
    if reference.shape != altered.shape:
        raise ValueError(f"image shapes differ: {reference.shape} vs {altered.shape}")
    r = ref_stats or image_stats(reference, pooling, config)
    a = alt_stats or image_stats(altered, pooling, config)
    return ((a.mean - r.mean) ** 2 + (a.std - r.std) ** 2).sum(axis=0)


def hvsq(
    reference: np.ndarray,
    altered: np.ndarray,
    pooling: PoolingMap,
    region: np.ndarray | None = None,
    config: HvsConfig = HvsConfig(),
    ref_stats: ImageStats | None = None,
    alt_stats: ImageStats | None = None,
) -> float:
    terms = hvsq_terms(reference, altered, pooling, config, ref_stats, alt_stats)
    if region is None:
        return float(terms.mean())
    region = np.asarray(region, dtype=bool)
    n = int(region.sum())
    if n == 0:
        raise ValueError("region mask is empty")
    return float(terms[region].sum() / n)


def hvsq_gradient(
    reference: np.ndarray,
    altered: np.ndarray,
    pooling: PoolingMap,
    region: np.ndarray | None = None,
    config: HvsConfig = HvsConfig(),
    ref_stats: ImageStats | None = None,
    alt_stats: ImageStats | None = None,
) -> np.ndarray:
    """d HVSQ / d altered-image, shape (H, W, 3)."""
    if reference.shape != altered.shape:
        raise ValueError(f"image shapes differ: {reference.shape} vs {altered.shape}")
    h, w = pooling.shape
    if region is None:
        region = np.ones((h, w), dtype=bool)
    else:
        region = np.asarray(region, dtype=bool)
    n = int(region.sum())
    if n == 0:
        raise ValueError("region mask is empty")

    rs = ref_stats or image_stats(reference, pooling, config)
    as_ = alt_stats or image_stats(altered, pooling, config)
    fa, ma, sa = as_.features, as_.mean, as_.std
    mr, sr = rs.mean, rs.std

    c = fa.shape[0]
    eng = pooling.engine
    g_feat = np.zeros_like(fa)
    for ci in range(c):
        acc = None  # frequency-domain sum of the three scatter terms
        for r in pooling.buckets():
            mask = (pooling.radius_int == r) & region
            if not mask.any():
                continue
            if r == 0:
                g_feat[ci][mask] += 2.0 * (ma[ci][mask] - mr[ci][mask])
                continue
            counts = eng.counts(r)
            u = np.zeros((h, w))
            u[mask] = 2.0 * (ma[ci][mask] - mr[ci][mask]) / counts[mask]
            wgt = np.zeros((h, w))
            sig = sa[ci][mask]
            dsig = 2.0 * (sig - sr[ci][mask])
            safe = sig > _SIGMA_EPS
            wv = np.zeros(int(mask.sum()))
            wv[safe] = dsig[safe] / (counts[mask][safe] * sig[safe])
            wgt[mask] = wv
            kf = eng.kern_fft(r)
            term = (eng.img_fft(u) - eng.img_fft(wgt * ma[ci])) * kf
            wf = eng.img_fft(wgt) * kf
            acc = (term, wf) if acc is None else (acc[0] + term, acc[1] + wf)
        if acc is not None:
            g_feat[ci] += eng.finish(acc[0]) + fa[ci] * eng.finish(acc[1])
    g_feat /= n

    # chain features back to the image
    g_lum = np.zeros((h, w))
    ci = 0
    lum = luminance(np.asarray(altered, dtype=np.float64))
    for s in config.feature_scales:
        base = _box_smooth(lum, s)
        g_base = g_feat[ci].copy()
        ci += 1
        if config.include_gradients:
            gh, gv = g_feat[ci], g_feat[ci + 1]
            ci += 2
            dh = np.sign(base[:, 1:] - base[:, :-1])
            g_base[:, 1:] += gh[:, :-1] * dh
            g_base[:, :-1] -= gh[:, :-1] * dh
            dv = np.sign(base[1:, :] - base[:-1, :])
            g_base[1:, :] += gv[:-1, :] * dv
            g_base[:-1, :] -= gv[:-1, :] * dv
        g_lum += _box_smooth_transpose(g_base, s)
    return g_lum[:, :, None] * LUMA_WEIGHTS[None, None, :]


def hvsq_value_and_gradient(
    reference: np.ndarray,
    altered: np.ndarray,
    pooling: PoolingMap,
    region: np.ndarray | None = None,
    config: HvsConfig = HvsConfig(),
    ref_stats: ImageStats | None = None,
) -> tuple[float, np.ndarray]:
    """One-pass value and gradient, sharing the altered image's pooled stats."""
    rs = ref_stats or image_stats(reference, pooling, config)
    as_ = image_stats(altered, pooling, config)
    value = hvsq(reference, altered, pooling, region, config, rs, as_)
    grad = hvsq_gradient(reference, altered, pooling, region, config, rs, as_)
    return value, grad
