"""Trainable networks: encoder-decoder generator and context-field scorers.

The generator is a depth-5 encoder-decoder without skip connections; each
stage applies context normalization (per-channel spatial mean/variance
with a learned affine). The discriminator scores context-vector fields,
never raw pixels, at one or more pooled scales.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .backbone import ContextVectorField
from .images import MIN_SIDE, check_image

DEPTH = 5
ENCODER_WIDTHS = (32, 64, 128, 256, 256)
DECODER_WIDTHS = (256, 128, 64, 32, 32)
LEAKY_SLOPE = 0.2


def _context_norm(channels: int) -> nn.Module:
    return nn.InstanceNorm2d(channels, affine=True)


def _decoder_sizes(target_hw: Tuple[int, int]) -> List[Tuple[int, int]]:
    """Per-stage output sizes walking up from the bottleneck to the target."""
    sizes = [tuple(target_hw)]
    for _ in range(DEPTH - 1):
        h, w = sizes[-1]
        sizes.append((math.ceil(h / 2), math.ceil(w / 2)))
    sizes.reverse()
    return sizes


def _check_target_dims(target_hw: Tuple[int, int]) -> Tuple[int, int]:
    h, w = int(target_hw[0]), int(target_hw[1])
    if h < MIN_SIDE or w < MIN_SIDE:
        raise ValueError(
            f"target dims ({h}, {w}) not producible by the upsampling "
            f"schedule; nearest valid dims are ({max(h, MIN_SIDE)}, "
            f"{max(w, MIN_SIDE)})"
        )
    return h, w


class EncoderDecoderGenerator(nn.Module):
    """Depth-5 encoder-decoder mapping an image to an image in [0, 1].

    Passing ``seed`` makes the parameter initialization a deterministic
    function of it. ``target_hw`` at forward time selects the output size
    (defaults to the input size); fractional scale changes are realized by
    per-stage resize-then-convolve.
    """

    def __init__(self, in_channels: int = 3, seed: Optional[int] = None):
        super().__init__()
        if seed is not None:
            torch.manual_seed(seed)
        self.in_channels = in_channels

        enc = []
        c_in = in_channels
        for width in ENCODER_WIDTHS:
            enc.append(nn.Sequential(
                nn.Conv2d(c_in, width, kernel_size=3, stride=2, padding=1),
                _context_norm(width),
                nn.LeakyReLU(LEAKY_SLOPE),
            ))
            c_in = width
        self.encoder = nn.ModuleList(enc)

        dec = []
        for width in DECODER_WIDTHS:
            dec.append(nn.Sequential(
                nn.Conv2d(c_in, width, kernel_size=3, stride=1, padding=1),
                _context_norm(width),
                nn.LeakyReLU(LEAKY_SLOPE),
            ))
            c_in = width
        self.decoder = nn.ModuleList(dec)
        self.head = nn.Sequential(
            nn.Conv2d(c_in, 3, kernel_size=3, stride=1, padding=1),
            nn.Sigmoid(),
        )

    def forward(
        self, x: torch.Tensor, target_hw: Optional[Tuple[int, int]] = None
    ) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"expected (1, {self.in_channels}, H, W) input, got {tuple(x.shape)}"
            )
        h, w = int(x.shape[2]), int(x.shape[3])
        if h < MIN_SIDE or w < MIN_SIDE:
            raise ValueError(f"input {h}x{w} below the {MIN_SIDE}px minimum side")
        target = _check_target_dims(target_hw if target_hw is not None else (h, w))

        out = x
        for stage in self.encoder:
            out = stage(out)
        for stage, size in zip(self.decoder, _decoder_sizes(target)):
            out = F.interpolate(out, size=size, mode="nearest")
            out = stage(out)
        return self.head(out)


@dataclass
class DiscriminatorMap:
    """Per-scale score maps with their aggregation weights.

    ``maps[s]`` is the raw (unsquashed) score grid produced at scale s;
    ``weights`` are non-negative and sum to 1.
    """

    maps: List[torch.Tensor]
    weights: Tuple[float, ...]

    def __post_init__(self):
        if len(self.maps) != len(self.weights):
            raise ValueError("one weight per scale map is required")
        if any(w < 0 for w in self.weights):
            raise ValueError("scale weights must be non-negative")
        total = float(sum(self.weights))
        if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-6):
            raise ValueError(f"scale weights must sum to 1, got {total}")

    @property
    def scales(self) -> int:
        return len(self.maps)


class _ScaleScorer(nn.Module):
    """3-layer strided convolutional scorer emitting raw scores (no sigmoid)."""

    def __init__(self, in_channels: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(in_channels, 128, kernel_size=3, stride=2, padding=1),
            nn.LeakyReLU(LEAKY_SLOPE),
            nn.Conv2d(128, 64, kernel_size=3, stride=1, padding=1),
            nn.LeakyReLU(LEAKY_SLOPE),
            nn.Conv2d(64, 1, kernel_size=3, stride=1, padding=1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class MultiScaleContextDiscriminator(nn.Module):
    """Scores a context field at ``scales`` average-pooled resolutions.

    With scales = 1 this is the single-scale configuration; each scale has
    an independent scorer. The input channel count equals the context
    field's channel dimension, not 3: the discriminator never sees pixels.
    """

    def __init__(
        self,
        in_channels: int = 512,
        scales: int = 3,
        scale_weights: Optional[Sequence[float]] = None,
        seed: Optional[int] = None,
    ):
        super().__init__()
        if scales < 1:
            raise ValueError("scales must be >= 1")
        if seed is not None:
            torch.manual_seed(seed)
        if scale_weights is None:
            scale_weights = [1.0 / scales] * scales
        if len(scale_weights) != scales:
            raise ValueError("need one weight per scale")
        total = float(sum(scale_weights))
        if total <= 0 or any(w < 0 for w in scale_weights):
            raise ValueError("scale weights must be non-negative with positive sum")
        self.in_channels = in_channels
        self.scale_weights = tuple(w / total for w in scale_weights)
        self.scorers = nn.ModuleList(_ScaleScorer(in_channels) for _ in range(scales))

    @property
    def scales(self) -> int:
        return len(self.scorers)

    def forward(self, field: torch.Tensor) -> DiscriminatorMap:
        if field.ndim != 4 or field.shape[1] != self.in_channels:
            raise ValueError(
                f"expected (1, {self.in_channels}, H, W) context field, "
                f"got {tuple(field.shape)}"
            )
        h, w = int(field.shape[2]), int(field.shape[3])
        deepest = 2 ** (self.scales - 1)
        if min(h, w) // deepest < 2:
            raise ValueError(
                f"context field {h}x{w} is too small for {self.scales} scales; "
                "reduce discriminator_scales"
            )
        maps = []
        for s, scorer in enumerate(self.scorers):
            x = field if s == 0 else F.avg_pool2d(field, kernel_size=2 ** s)
            maps.append(scorer(x).squeeze(0).squeeze(0))
        return DiscriminatorMap(maps=maps, weights=self.scale_weights)


def _field_to_tensor(field) -> torch.Tensor:
    if isinstance(field, ContextVectorField):
        if len(field.layers) != 1:
            raise ValueError(
                "adversarial scoring expects a single-layer context field"
            )
        fmap = next(iter(field.layers.values()))
    elif isinstance(field, torch.Tensor):
        fmap = field
    else:
        raise TypeError(f"unsupported field type {type(field)!r}")
    if fmap.ndim == 3:  # (H, W, C)
        return fmap.permute(2, 0, 1).unsqueeze(0)
    if fmap.ndim == 4:
        return fmap
    raise ValueError(f"unsupported field shape {tuple(fmap.shape)}")


def discriminator_forward(net: MultiScaleContextDiscriminator, field) -> DiscriminatorMap:
    """Score a context field (a ContextVectorField or an (H, W, C) tensor)."""
    return net(_field_to_tensor(field))


def generator_forward(net: EncoderDecoderGenerator, image, target_dims=None):
    """Run the generator on an image.

    Accepts an H x W x 3 array (returns the same; inference only) or a
    torch tensor in (H, W, 3) / (1, 3, H, W) layout (returns the same
    layout and keeps the autograd graph).
    """
    if isinstance(image, torch.Tensor):
        if image.ndim == 3:
            x = image.permute(2, 0, 1).unsqueeze(0)
            out = net(x, target_hw=target_dims)
            return out.squeeze(0).permute(1, 2, 0)
        return net(image, target_hw=target_dims)
    arr = check_image(image, min_side=MIN_SIDE)
    x = torch.from_numpy(np.ascontiguousarray(arr)).permute(2, 0, 1).unsqueeze(0)
    with torch.no_grad():
        out = net(x, target_hw=target_dims)
    return out.squeeze(0).permute(1, 2, 0).numpy()
