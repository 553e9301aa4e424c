"""Image quality metrics on [0, 1] images: PSNR, SSIM, and masked SSIM."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

from .images import check_image, check_mask, check_same_dims

PSNR_CAP_DB = 100.0

_WINDOW = 11
_SIGMA = 1.5
_RADIUS = _WINDOW // 2
_K1 = 0.01
_K2 = 0.03
_DATA_RANGE = 1.0


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 dB (the zero-MSE sentinel)."""
    a = check_image(a)
    b = check_image(b)
    if a.shape != b.shape:
        raise ValueError(f"image dims differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_kernel() -> np.ndarray:
    x = np.arange(-_RADIUS, _RADIUS + 1, dtype=np.float64)
    k = np.exp(-(x ** 2) / (2.0 * _SIGMA ** 2))
    return k / k.sum()


def _filter(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # Separable filtering with edge replication; values at pixels further
    # than the window radius from the border equal the exact windowed sums.
    out = correlate1d(img, kernel, axis=0, mode="nearest")
    return correlate1d(out, kernel, axis=1, mode="nearest")


def ssim_map(a, b) -> np.ndarray:
    """Per-pixel structural similarity, averaged over channels.

    Uses the standard 11 x 11 Gaussian window (sigma 1.5, K1 = 0.01,
    K2 = 0.03, dynamic range 1.0). Map values within the window radius of
    the border are computed with edge replication.
    """
    a = check_image(a).astype(np.float64)
    b = check_image(b).astype(np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image dims differ: {a.shape} vs {b.shape}")
    h, w = a.shape[:2]
    if min(h, w) < _WINDOW:
        raise ValueError(f"image {h}x{w} is smaller than the {_WINDOW}px SSIM window")

    kernel = _gaussian_kernel()
    c1 = (_K1 * _DATA_RANGE) ** 2
    c2 = (_K2 * _DATA_RANGE) ** 2
    maps = []
    for ch in range(a.shape[2]):
        x, y = a[:, :, ch], b[:, :, ch]
        ux = _filter(x, kernel)
        uy = _filter(y, kernel)
        uxx = _filter(x * x, kernel)
        uyy = _filter(y * y, kernel)
        uxy = _filter(x * y, kernel)
        vx = uxx - ux * ux
        vy = uyy - uy * uy
        vxy = uxy - ux * uy
        num = (2.0 * ux * uy + c1) * (2.0 * vxy + c2)
        den = (ux * ux + uy * uy + c1) * (vx + vy + c2)
        maps.append(num / den)
    return np.mean(maps, axis=0)


def ssim(a, b) -> float:
    """Mean structural similarity over the border-cropped SSIM map."""
    full = ssim_map(a, b)
    return float(full[_RADIUS:-_RADIUS, _RADIUS:-_RADIUS].mean())


def masked_ssim(a, b, mask) -> float:
    """Mean of the SSIM map over missing (mask = 0) pixel locations only.

    Window leakage applies: map values at hole pixels near known pixels are
    influenced by the known content inside their window.
    """
    mask = check_mask(mask)
    check_same_dims(check_image(a), mask)
    holes = mask == 0.0
    if not holes.any():
        raise ValueError("empty evaluation region: mask has no missing pixels")
    full = ssim_map(a, b)
    return float(full[holes].mean())
