"""Loss terms: contextual similarity, adversarial scoring, pixel fidelity.

All functions accept torch tensors (numpy arrays are converted) and return
0-dim torch tensors so gradients propagate wherever the inputs carry them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np
import torch

from .backbone import ContextVectorField
from .config import LossWeights
from .errors import NonFiniteLossError
from .networks import DiscriminatorMap

Scalar = Union[float, torch.Tensor]


def _as_matrix(features, name: str) -> torch.Tensor:
    if not isinstance(features, torch.Tensor):
        features = torch.as_tensor(np.asarray(features))
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError(f"{name} must be a non-empty (N, C) vector set")
    return features


def cx_similarity(source_features, target_features, h: float = 0.5, eps: float = 1e-5) -> torch.Tensor:
    """Asymmetric contextual similarity between two vector sets, in (0, 1].

    For each target vector, cosine distances to every source vector (both
    sets centered by the source mean) are normalized by the per-target
    minimum, turned into affinities exp((1 - d_rel) / h), and normalized to
    sum to 1 over the source candidates; the result is the mean over
    targets of the best candidate weight.

    A vector with zero norm after centering gets maximal cosine distance
    to everything.
    """
    source = _as_matrix(source_features, "source_features")
    target = _as_matrix(target_features, "target_features")
    if source.shape[1] != target.shape[1]:
        raise ValueError(
            f"channel dims differ: {source.shape[1]} vs {target.shape[1]}"
        )
    if h <= 0 or eps <= 0:
        raise ValueError("bandwidth h and epsilon must be positive")

    mu = source.mean(dim=0, keepdim=True)
    s = source - mu
    t = target - mu
    s_norm = s.norm(dim=1, keepdim=True)
    t_norm = t.norm(dim=1, keepdim=True)
    tiny = torch.finfo(s.dtype).tiny
    s_unit = s / s_norm.clamp_min(tiny)
    t_unit = t / t_norm.clamp_min(tiny)

    dist = 1.0 - t_unit @ s_unit.T  # (n_target, n_source), range [0, 2]
    degenerate = (t_norm == 0) | (s_norm == 0).T
    if degenerate.any():
        dist = torch.where(degenerate, torch.full_like(dist, 2.0), dist)

    d_min = dist.min(dim=1, keepdim=True).values
    d_rel = dist / (d_min + eps)
    w = torch.exp((1.0 - d_rel) / h)
    cx = w / w.sum(dim=1, keepdim=True)
    return cx.max(dim=1).values.mean().clamp(max=1.0)


def cvl_loss(
    phi_x: ContextVectorField,
    phi_y: ContextVectorField,
    layers: Optional[Sequence[str]] = None,
    h: float = 0.5,
    eps: float = 1e-5,
    source_keep: Optional[dict] = None,
) -> torch.Tensor:
    """Negative log contextual similarity, summed over the given layers.

    Each layer's spatial grid is flattened into a vector set; ``phi_x``
    provides the match pool and ``phi_y`` the queries. ``source_keep``
    optionally maps a layer id to a boolean selector over the pool
    (used by the masked-pool ablation).
    """
    if layers is None:
        layers = list(phi_x.layers)
    total = None
    for layer in layers:
        if layer not in phi_x.layers or layer not in phi_y.layers:
            raise KeyError(f"layer '{layer}' missing from a context field")
        src = phi_x.vectors(layer)
        tgt = phi_y.vectors(layer)
        if source_keep is not None and layer in source_keep:
            keep = torch.as_tensor(source_keep[layer], dtype=torch.bool)
            if keep.numel() != src.shape[0]:
                raise ValueError("source_keep selector length mismatch")
            if not keep.any():
                raise ValueError("source_keep removes every pool vector")
            src = src[keep]
        term = -torch.log(cx_similarity(src, tgt, h=h, eps=eps))
        total = term if total is None else total + term
    if total is None:
        raise ValueError("no layers to compare")
    return total


def _check_scale_structure(real: DiscriminatorMap, fake: DiscriminatorMap) -> None:
    if real.scales != fake.scales:
        raise ValueError(
            f"scale mismatch: {real.scales} real maps vs {fake.scales} fake maps"
        )
    if real.weights != fake.weights:
        raise ValueError("scale weights differ between real and fake maps")


def cal_discriminator_loss(
    scores_real: DiscriminatorMap, scores_fake: DiscriminatorMap
) -> torch.Tensor:
    """Least-squares scoring loss: real scores toward 1, fake toward 0."""
    _check_scale_structure(scores_real, scores_fake)
    loss = None
    for w, real, fake in zip(scores_real.weights, scores_real.maps, scores_fake.maps):
        term = w * (((real - 1.0) ** 2).mean() + (fake ** 2).mean())
        loss = term if loss is None else loss + term
    return loss


def cal_generator_loss(scores_fake: DiscriminatorMap) -> torch.Tensor:
    """Least-squares generator-side loss: fake scores pushed toward 1."""
    loss = None
    for w, fake in zip(scores_fake.weights, scores_fake.maps):
        term = w * (((fake - 1.0) ** 2).mean())
        loss = term if loss is None else loss + term
    return loss


def rl_loss(generated, corrupted, mask) -> torch.Tensor:
    """Masked pixel MSE: mean over all pixels of (generated * mask - corrupted)^2.

    Only known pixels contribute, since the corrupted image is zero
    everywhere the mask is.
    """
    generated = _image_tensor(generated, "generated")
    corrupted = _image_tensor(corrupted, "corrupted")
    if not isinstance(mask, torch.Tensor):
        mask = torch.as_tensor(np.asarray(mask, dtype=np.float32))
    if generated.shape != corrupted.shape:
        raise ValueError(
            f"image dims differ: {tuple(generated.shape)} vs {tuple(corrupted.shape)}"
        )
    if mask.shape != generated.shape[:2]:
        raise ValueError(
            f"mask dims {tuple(mask.shape)} do not match image "
            f"{tuple(generated.shape[:2])}"
        )
    mask = mask.to(generated.dtype)
    return ((generated * mask.unsqueeze(-1) - corrupted) ** 2).mean()


def _image_tensor(img, name: str) -> torch.Tensor:
    if not isinstance(img, torch.Tensor):
        img = torch.as_tensor(np.asarray(img, dtype=np.float32))
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"{name} must be H x W x 3, got {tuple(img.shape)}")
    return img


@dataclass
class LossBreakdown:
    """All loss components of one step; floats or 0-dim tensors.

    ``tl`` composes the weighted generator objective; ``cal_d`` is reported
    alongside but only ever drives the discriminator update.
    """

    tl: Scalar
    cfl: Scalar
    cal_g: Scalar
    cal_d: Scalar
    cvl: Scalar
    rl: Scalar

    def floats(self) -> "LossBreakdown":
        return replace(self, **{k: _to_float(getattr(self, k)) for k in
                                ("tl", "cfl", "cal_g", "cal_d", "cvl", "rl")})


def _to_float(value: Scalar) -> float:
    if isinstance(value, torch.Tensor):
        return float(value.detach())
    return float(value)


def _require_finite(name: str, value: Scalar) -> None:
    if not math.isfinite(_to_float(value)):
        raise NonFiniteLossError(f"non-finite loss component '{name}'")


def total_loss(
    cal_g: Scalar,
    cvl: Scalar,
    rl: Scalar,
    weights: LossWeights,
    cal_d: Scalar = 0.0,
) -> LossBreakdown:
    """Assemble the weighted objective from its components.

    tl = lambda_G * (lambda_cal * cal_g + lambda_cvl * cvl) + lambda_R * rl.
    """
    for name, value in (("cal_g", cal_g), ("cvl", cvl), ("rl", rl), ("cal_d", cal_d)):
        _require_finite(name, value)
    cfl = weights.lambda_cal * cal_g + weights.lambda_cvl * cvl
    tl = weights.lambda_G * cfl + weights.lambda_R * rl
    return LossBreakdown(tl=tl, cfl=cfl, cal_g=cal_g, cal_d=cal_d, cvl=cvl, rl=rl)
