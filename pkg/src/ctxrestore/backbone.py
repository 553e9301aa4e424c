"""Frozen pretrained feature extractor producing context-vector fields.

The extractor is the 19-layer convolutional classifier trunk (16 conv
layers in 5 blocks). Weights are loaded from a local cache and are never
downloaded during a run; inputs are standardized with the classifier's
canonical per-channel statistics before the forward pass.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
import torch
from torch import nn

from .errors import WeightsNotFoundError
from .images import check_image

ENV_WEIGHTS_DIR = "CTXRESTORE_WEIGHTS_DIR"

# Known checkpoint filenames, searched in order inside each cache directory.
WEIGHTS_FILENAMES = ("vgg19-dcbb9e9d.pth", "vgg19_features.pth", "vgg19.pth")

_CHANNEL_MEAN = (0.485, 0.456, 0.406)
_CHANNEL_STD = (0.229, 0.224, 0.225)

# Per-block conv counts and widths of the trunk; "M" marks 2x max-pooling.
_PLAN = (64, 64, "M", 128, 128, "M", 256, 256, 256, 256, "M",
         512, 512, 512, 512, "M", 512, 512, 512, 512, "M")

# layer id -> index of its rectified output in the sequential trunk
LAYER_IDS: Dict[str, int] = {}


def _build_layer_index() -> None:
    block, conv_in_block, idx = 1, 0, 0
    for entry in _PLAN:
        if entry == "M":
            block += 1
            conv_in_block = 0
            idx += 1
        else:
            conv_in_block += 1
            LAYER_IDS[f"conv{block}_{conv_in_block}"] = idx + 1  # after ReLU
            idx += 2


_build_layer_index()


def layer_channels(layer_id: str) -> int:
    """Channel count of a layer's context vectors."""
    if layer_id not in LAYER_IDS:
        raise KeyError(f"unknown backbone layer '{layer_id}'")
    block = int(layer_id[4])
    return (64, 128, 256, 512, 512)[block - 1]


def _make_trunk() -> nn.Sequential:
    layers = []
    in_ch = 3
    for entry in _PLAN:
        if entry == "M":
            layers.append(nn.MaxPool2d(kernel_size=2, stride=2))
        else:
            layers.append(nn.Conv2d(in_ch, entry, kernel_size=3, padding=1))
            layers.append(nn.ReLU(inplace=False))
            in_ch = entry
    return nn.Sequential(*layers)


def resolve_weights_path(
    explicit: Optional[str] = None, weights_dir: Optional[str] = None
) -> Path:
    """Locate a weights checkpoint; never downloads.

    Search order: explicit file path, ``weights_dir``, the
    ``CTXRESTORE_WEIGHTS_DIR`` environment variable, then the torch hub
    checkpoint cache.
    """
    if explicit:
        p = Path(explicit)
        if p.is_file():
            return p
        raise WeightsNotFoundError(f"weights file not found: {p}")

    candidates = []
    for d in (
        weights_dir,
        os.environ.get(ENV_WEIGHTS_DIR),
        Path.home() / ".cache" / "torch" / "hub" / "checkpoints",
    ):
        if not d:
            continue
        d = Path(d)
        candidates.append(d)
        for name in WEIGHTS_FILENAMES:
            p = d / name
            if p.is_file():
                return p
    raise WeightsNotFoundError(
        "no backbone weights found; searched "
        + ", ".join(str(c) for c in candidates)
        + f". Place one of {WEIGHTS_FILENAMES} in a cache directory, set "
        f"{ENV_WEIGHTS_DIR}, or pass weights_dir explicitly."
    )


def _load_trunk_state(path: Path) -> dict:
    state = torch.load(path, map_location="cpu", weights_only=True)
    cleaned = {}
    for key, value in state.items():
        if key.startswith("classifier."):
            continue
        cleaned[key.removeprefix("features.")] = value
    return cleaned


@dataclass
class ContextVectorField:
    """Per-layer feature maps extracted from one image.

    ``layers`` maps a layer id to an (H_l, W_l, C_l) tensor; ``source_dims``
    records the (H, W) of the image the field came from.
    """

    layers: Dict[str, torch.Tensor]
    source_dims: Tuple[int, int]

    def vectors(self, layer_id: str) -> torch.Tensor:
        """The layer's feature grid flattened to an (N, C) vector set."""
        fmap = self.layers[layer_id]
        return fmap.reshape(-1, fmap.shape[-1])


class FeatureBackbone:
    """Immutable feature extractor shared across a process.

    All parameters are frozen; gradients flow through the trunk to the
    input image but never update the weights.
    """

    def __init__(self, weights_path=None, weights_dir=None):
        self.weights_path = resolve_weights_path(weights_path, weights_dir)
        self.trunk = _make_trunk()
        self.trunk.load_state_dict(_load_trunk_state(self.weights_path))
        self.trunk.eval()
        for p in self.trunk.parameters():
            p.requires_grad_(False)
        mean = torch.tensor(_CHANNEL_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(_CHANNEL_STD).view(1, 3, 1, 1)
        self._mean, self._std = mean, std

    def extract(
        self, image, layer_ids: Iterable[str] = ("conv4_2",)
    ) -> ContextVectorField:
        """Compute context vectors for the named layers.

        ``image`` may be an H x W x 3 array in [0, 1] or a torch tensor of
        shape (H, W, 3) or (1, 3, H, W); a tensor input keeps its autograd
        graph, so losses on the returned field differentiate back to the
        image.
        """
        layer_ids = list(layer_ids)
        if not layer_ids:
            raise ValueError("layer_ids must be non-empty")
        taps = {}
        for lid in layer_ids:
            if lid not in LAYER_IDS:
                raise KeyError(f"unknown backbone layer '{lid}'")
            taps[LAYER_IDS[lid]] = lid

        if isinstance(image, torch.Tensor):
            if image.ndim == 3:
                x = image.permute(2, 0, 1).unsqueeze(0)
            elif image.ndim == 4 and image.shape[0] == 1 and image.shape[1] == 3:
                x = image
            else:
                raise ValueError(
                    f"expected (H, W, 3) or (1, 3, H, W) tensor, got {tuple(image.shape)}"
                )
            grad = x.requires_grad
        else:
            arr = check_image(image)
            x = torch.from_numpy(np.ascontiguousarray(arr)).permute(2, 0, 1).unsqueeze(0)
            grad = False

        h, w = int(x.shape[2]), int(x.shape[3])
        x = (x - self._mean) / self._std
        deepest = max(taps)
        fields: Dict[str, torch.Tensor] = {}
        with torch.set_grad_enabled(grad):
            out = x
            for idx, module in enumerate(self.trunk):
                out = module(out)
                if idx in taps:
                    fields[taps[idx]] = out.squeeze(0).permute(1, 2, 0)
                if idx == deepest:
                    break
        ordered = {lid: fields[lid] for lid in layer_ids}
        return ContextVectorField(layers=ordered, source_dims=(h, w))

    def parameter_checksum(self) -> str:
        digest = hashlib.sha256()
        for key, tensor in self.trunk.state_dict().items():
            digest.update(key.encode())
            digest.update(tensor.numpy().tobytes())
        return digest.hexdigest()


_BACKBONE_CACHE: Dict[Path, FeatureBackbone] = {}


def get_backbone(weights_path=None, weights_dir=None) -> FeatureBackbone:
    """Process-shared backbone instance for the resolved weights file."""
    path = resolve_weights_path(weights_path, weights_dir)
    if path not in _BACKBONE_CACHE:
        _BACKBONE_CACHE[path] = FeatureBackbone(weights_path=path)
    return _BACKBONE_CACHE[path]


def extract_context(
    image, layer_ids: Iterable[str] = ("conv4_2",), backbone: Optional[FeatureBackbone] = None
) -> ContextVectorField:
    """Extract context vectors with the process-shared backbone."""
    if backbone is None:
        backbone = get_backbone()
    return backbone.extract(image, layer_ids)


def write_surrogate_weights(path, seed: int = 0) -> Path:
    """Write a seeded, randomly initialized trunk checkpoint.

    The file has the same layout as a real pretrained checkpoint and is
    meant for offline testing on machines without access to pretrained
    weights; restoration quality with surrogate filters is below that of
    the pretrained ones.
    """
    path = Path(path)
    torch.manual_seed(seed)
    trunk = _make_trunk()
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(trunk.state_dict(), path)
    return path
