"""Image and mask array conventions, validation helpers, and PNG I/O.

Images are H x W x 3 float arrays with values in [0, 1]; masks are H x W
binary arrays where 1 marks a known pixel and 0 a missing one.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

# Five stride-2 stages in the generator; anything smaller cannot be encoded.
MIN_SIDE = 32


def check_image(arr, name: str = "image", min_side: int = 1) -> np.ndarray:
    """Validate and return an image as a float32 H x W x 3 array in [0, 1]."""
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must be H x W x 3, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(
            f"{name} values must lie in [0, 1], got range "
            f"[{arr.min():.4g}, {arr.max():.4g}]"
        )
    h, w = arr.shape[:2]
    if h < min_side or w < min_side:
        raise ValueError(
            f"{name} is {h}x{w}; both sides must be at least {min_side} px"
        )
    return arr


def check_mask(arr, name: str = "mask") -> np.ndarray:
    """Validate and return a mask as a float32 H x W array of exact {0, 1}."""
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be H x W, got shape {arr.shape}")
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise ValueError(f"{name} entries must be exactly 0 or 1 (no soft masks)")
    return arr


def check_same_dims(image: np.ndarray, mask: np.ndarray) -> None:
    if image.shape[:2] != mask.shape:
        raise ValueError(
            f"image dims {image.shape[:2]} do not match mask dims {mask.shape}"
        )


def load_image(path) -> np.ndarray:
    """Read an 8-bit image file into a float32 H x W x 3 array in [0, 1]."""
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float32) / 255.0
    return arr


def save_image(arr, path) -> None:
    """Write an image to 8-bit PNG; values are mapped back by round(v * 255)."""
    arr = check_image(arr)
    data = np.rint(arr * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")
