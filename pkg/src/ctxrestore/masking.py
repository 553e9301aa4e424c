"""Task-specific binary masks and the pixel corruption / compositing model.

Masks use 1 for known pixels and 0 for missing ones, so corrupting an
image is the elementwise product image * mask.
"""

from __future__ import annotations

import warnings

import numpy as np
from PIL import Image

from .images import check_image, check_mask, check_same_dims


def make_outpaint_mask(height: int, width: int, fraction: float) -> np.ndarray:
    """Mask removing ``fraction`` of the columns, split between both sides.

    The total column count is round(width * fraction); an odd remainder
    goes to the right side. Raises ValueError when the fraction is too
    small to remove at least one column per side.
    """
    if not (0.0 < fraction < 1.0):
        raise ValueError("fraction must lie in (0, 1)")
    if int(width * fraction / 2.0) < 1:
        raise ValueError(
            f"degenerate outpaint mask: fraction {fraction} removes no "
            f"columns on a {width}-wide image"
        )
    total = int(round(width * fraction))
    left = total // 2
    right = total - left
    mask = np.ones((height, width), dtype=np.float32)
    mask[:, :left] = 0.0
    mask[:, width - right:] = 0.0
    return mask


def make_random_mask(height: int, width: int, r: float, seed: int) -> np.ndarray:
    """Mask with exactly round(H * W * r / 100) zeros at seeded random sites."""
    if not (0.0 < r < 100.0):
        raise ValueError("removal percentage r must lie in (0, 100)")
    n_pixels = height * width
    n_zeros = int(round(n_pixels * r / 100.0))
    rng = np.random.default_rng(seed)
    zero_idx = rng.choice(n_pixels, size=n_zeros, replace=False)
    mask = np.ones(n_pixels, dtype=np.float32)
    mask[zero_idx] = 0.0
    return mask.reshape(height, width)


def load_mask(path, expected_dims) -> np.ndarray:
    """Read a raster mask file; intensity < 0.5 maps to missing (0).

    Anti-aliased edges are binarized at the 0.5 threshold. The raster dims
    must equal ``expected_dims`` (H, W).
    """
    try:
        with Image.open(path) as im:
            gray = np.asarray(im.convert("L"), dtype=np.float32) / 255.0
    except OSError as exc:
        raise ValueError(f"unreadable mask file {path}: {exc}") from exc
    if gray.shape != tuple(expected_dims):
        raise ValueError(
            f"mask file dims {gray.shape} do not match expected {tuple(expected_dims)}"
        )
    mask = (gray >= 0.5).astype(np.float32)
    if mask.max() == 0.0:
        warnings.warn("mask has no known pixels", stacklevel=2)
    return mask


def combine_masks(*masks: np.ndarray) -> np.ndarray:
    """Elementwise AND of masks: a pixel is known only if known in all."""
    masks = [check_mask(m) for m in masks]
    out = masks[0]
    for m in masks[1:]:
        if m.shape != out.shape:
            raise ValueError("masks to combine must share dims")
        out = out * m
    return out


def zero_fraction(mask: np.ndarray) -> float:
    """Fraction of missing pixels in a mask."""
    mask = check_mask(mask)
    return float(1.0 - mask.mean())


def corrupt(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Apply the corruption model: keep known pixels, zero the rest."""
    image = check_image(image)
    mask = check_mask(mask)
    check_same_dims(image, mask)
    return image * mask[:, :, None]


def composite(restored: np.ndarray, source: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Keep known pixels from ``source`` and fill holes from ``restored``."""
    restored = check_image(restored)
    source = check_image(source)
    mask = check_mask(mask)
    check_same_dims(restored, mask)
    check_same_dims(source, mask)
    m = mask[:, :, None]
    return source * m + restored * (1.0 - m)
