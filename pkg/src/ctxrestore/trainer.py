"""Per-image alternating optimization loops for restoration and resizing.

Each iteration runs one discriminator update (when the adversarial term is
active) followed by one generator update. Everything is seeded, and a loop
can be checkpointed and resumed without perturbing the trajectory.
"""

from __future__ import annotations

import math
import pickle
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F

from . import masking
from .backbone import ContextVectorField, FeatureBackbone, get_backbone, layer_channels
from .config import RunConfig, RunReport, LossWeights, validate_config
from .errors import CheckpointError, NonFiniteLossError
from .images import MIN_SIDE, check_image, check_mask, check_same_dims
from .losses import (
    cal_discriminator_loss,
    cal_generator_loss,
    cvl_loss,
    rl_loss,
    total_loss,
)
from .metrics import masked_ssim, psnr, ssim
from .networks import EncoderDecoderGenerator, MultiScaleContextDiscriminator

STATE_VERSION = 1


@dataclass
class TrainState:
    """Serializable snapshot of a loop: parameters, moments, RNG, trace."""

    version: int
    task: str
    iteration: int
    config: dict
    source: np.ndarray
    mask: Optional[np.ndarray]
    generator: dict
    discriminator: Optional[dict]
    opt_g: dict
    opt_d: Optional[dict]
    torch_rng: bytes
    best_tl: Optional[float]
    best_generator: Optional[dict]
    trace_rows: list = field(default_factory=list)


def _tree_to_numpy(obj):
    if isinstance(obj, torch.Tensor):
        return ("__tensor__", obj.detach().cpu().numpy().copy())
    if isinstance(obj, dict):
        return {k: _tree_to_numpy(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        seq = [_tree_to_numpy(v) for v in obj]
        return seq if isinstance(obj, list) else tuple(seq)
    return obj


def _tree_to_torch(obj):
    if isinstance(obj, tuple) and len(obj) == 2 and obj[0] == "__tensor__":
        return torch.from_numpy(obj[1].copy())
    if isinstance(obj, dict):
        return {k: _tree_to_torch(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        seq = [_tree_to_torch(v) for v in obj]
        return seq if isinstance(obj, list) else tuple(seq)
    return obj


def save_state(state: TrainState, path) -> None:
    """Serialize a snapshot; identical snapshots produce identical bytes."""
    payload = dict(state.__dict__)
    with open(path, "wb") as fh:
        fh.write(pickle.dumps(payload, protocol=4))


def load_state(path) -> TrainState:
    try:
        with open(path, "rb") as fh:
            payload = pickle.loads(fh.read())
    except (OSError, pickle.UnpicklingError, EOFError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    version = payload.get("version")
    if version != STATE_VERSION:
        raise CheckpointError(
            f"checkpoint version {version!r} does not match supported "
            f"version {STATE_VERSION}"
        )
    return TrainState(**payload)


def _image_to_batch(arr: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(arr)).permute(2, 0, 1).unsqueeze(0)


def _batch_to_image(t: torch.Tensor) -> np.ndarray:
    return t.detach().squeeze(0).permute(1, 2, 0).numpy()


class _Loop:
    """Shared plumbing: optimizers, adversarial step, state capture."""

    task: str

    def __init__(self, source: np.ndarray, config: RunConfig,
                 backbone: Optional[FeatureBackbone] = None):
        self.config = validate_config(config)
        self.source = check_image(source, min_side=MIN_SIDE)
        self.layer = config.cx_layer
        self.iteration = 0
        self.trace_rows: list = []
        self.best_tl: Optional[float] = None
        self.best_generator: Optional[dict] = None

        torch.manual_seed(config.seed)
        in_channels = 4 if (config.mask_channel and self.task != "resize") else 3
        self.generator = EncoderDecoderGenerator(in_channels=in_channels)
        self.opt_g = torch.optim.Adam(
            self.generator.parameters(),
            lr=config.lr_generator,
            betas=(config.beta1, config.beta2),
        )

        self.use_cal = self._cal_active()
        self.use_cvl = self._cvl_active()
        self.discriminator = None
        self.opt_d = None
        if self.use_cal:
            self.discriminator = MultiScaleContextDiscriminator(
                in_channels=layer_channels(self.layer),
                scales=config.discriminator_scales,
            )
            self.opt_d = torch.optim.Adam(
                self.discriminator.parameters(),
                lr=config.lr_discriminator,
                betas=(config.beta1, config.beta2),
            )

        self.backbone = None
        self.phi_x: Optional[ContextVectorField] = None
        if self.use_cal or self.use_cvl:
            self.backbone = backbone or get_backbone(weights_dir=config.weights_dir)
            self.phi_x = self.backbone.extract(self.source, [self.layer])

    def _cal_active(self) -> bool:
        raise NotImplementedError

    def _cvl_active(self) -> bool:
        raise NotImplementedError

    def _extract(self, image_batch: torch.Tensor) -> ContextVectorField:
        return self.backbone.extract(image_batch, [self.layer])

    def _discriminator_step(self, phi_y: ContextVectorField) -> float:
        real = self.discriminator(self._field_tensor(self.phi_x))
        fake_field = ContextVectorField(
            {self.layer: phi_y.layers[self.layer].detach()}, phi_y.source_dims
        )
        fake = self.discriminator(self._field_tensor(fake_field))
        d_loss = cal_discriminator_loss(real, fake)
        self.opt_d.zero_grad()
        d_loss.backward()
        self.opt_d.step()
        return float(d_loss.detach())

    def _field_tensor(self, fld: ContextVectorField) -> torch.Tensor:
        return fld.layers[self.layer].permute(2, 0, 1).unsqueeze(0)

    def _generator_update(self, tl) -> None:
        if isinstance(tl, torch.Tensor) and tl.requires_grad:
            self.opt_g.zero_grad()
            tl.backward()
            self.opt_g.step()

    def _assemble(self, cal_g, cvl, rl, weights, cal_d):
        try:
            return total_loss(cal_g, cvl, rl, weights, cal_d=cal_d)
        except NonFiniteLossError as exc:
            exc.iteration = self.iteration
            raise

    def _record(self, row: dict) -> dict:
        bad = [k for k, v in row.items() if not math.isfinite(v)]
        if bad:
            raise NonFiniteLossError(
                f"non-finite loss at iteration {self.iteration}: "
                f"{', '.join(bad)} in {row}",
                iteration=self.iteration,
                breakdown=row,
            )
        self.trace_rows.append(row)
        self.iteration += 1
        if self.best_tl is None or row["tl"] < self.best_tl:
            self.best_tl = row["tl"]
            self.best_generator = {
                k: v.detach().clone() for k, v in self.generator.state_dict().items()
            }
        return row

    def step(self) -> dict:
        raise NotImplementedError

    def run(self, total_iterations: int) -> None:
        while self.iteration < total_iterations:
            self.step()

    def _generator_output(self, net_input: torch.Tensor, target_hw=None,
                          use_best: bool = False) -> np.ndarray:
        gen = self.generator
        if use_best and self.best_generator is not None:
            rng_state = torch.get_rng_state()
            gen = EncoderDecoderGenerator(in_channels=self.generator.in_channels)
            gen.load_state_dict(self.best_generator)
            torch.set_rng_state(rng_state)
        with torch.no_grad():
            out = gen(net_input, target_hw=target_hw)
        return np.clip(_batch_to_image(out), 0.0, 1.0)

    # --- state capture -------------------------------------------------

    def _state_common(self) -> dict:
        return dict(
            version=STATE_VERSION,
            task=self.task,
            iteration=self.iteration,
            config=self.config.to_dict(),
            source=self.source.copy(),
            generator=_tree_to_numpy(self.generator.state_dict()),
            discriminator=(
                _tree_to_numpy(self.discriminator.state_dict())
                if self.discriminator is not None else None
            ),
            opt_g=_tree_to_numpy(self.opt_g.state_dict()),
            opt_d=(
                _tree_to_numpy(self.opt_d.state_dict())
                if self.opt_d is not None else None
            ),
            torch_rng=torch.get_rng_state().numpy().tobytes(),
            best_tl=self.best_tl,
            best_generator=_tree_to_numpy(self.best_generator)
            if self.best_generator is not None else None,
            trace_rows=[dict(r) for r in self.trace_rows],
        )

    def _restore_from_state(self, state: TrainState) -> None:
        self.generator.load_state_dict(_tree_to_torch(state.generator))
        self.opt_g.load_state_dict(_tree_to_torch(state.opt_g))
        if state.discriminator is not None:
            if self.discriminator is None:
                raise CheckpointError("checkpoint has a discriminator; config does not")
            self.discriminator.load_state_dict(_tree_to_torch(state.discriminator))
            self.opt_d.load_state_dict(_tree_to_torch(state.opt_d))
        torch.set_rng_state(
            torch.from_numpy(np.frombuffer(state.torch_rng, dtype=np.uint8).copy())
        )
        self.iteration = state.iteration
        self.trace_rows = [dict(r) for r in state.trace_rows]
        self.best_tl = state.best_tl
        self.best_generator = (
            _tree_to_torch(state.best_generator)
            if state.best_generator is not None else None
        )


class RestoreLoop(_Loop):
    """Optimization loop for the masked-restoration tasks."""

    def __init__(self, source, mask, config, backbone=None):
        if config.task == "resize":
            raise ValueError("RestoreLoop does not handle the resize task")
        self.task = config.task
        mask = check_mask(mask)
        super().__init__(source, config, backbone=backbone)
        check_same_dims(self.source, mask)
        self.mask = mask
        self.x_hwc = torch.from_numpy(np.ascontiguousarray(self.source))
        self.m_hw = torch.from_numpy(np.ascontiguousarray(mask))
        x = _image_to_batch(self.source)
        if config.mask_channel:
            x = torch.cat([x, self.m_hw.view(1, 1, *mask.shape)], dim=1)
        self.net_input = x
        self.source_keep = None
        if config.cvl_exclude_masked and self.phi_x is not None:
            fmap = self.phi_x.layers[self.layer]
            pooled = F.interpolate(
                self.m_hw.view(1, 1, *mask.shape),
                size=fmap.shape[:2],
                mode="area",
            )
            self.source_keep = {self.layer: (pooled.reshape(-1) >= 0.5).numpy()}

    def _cal_active(self) -> bool:
        return self.config.lambda_G > 0 and self.config.lambda_cal > 0

    def _cvl_active(self) -> bool:
        return self.config.lambda_G > 0 and self.config.lambda_cvl > 0

    def step(self) -> dict:
        y = self.generator(self.net_input)
        phi_y = None
        if self.use_cal or self.use_cvl:
            phi_y = self._extract(y)

        cal_d = 0.0
        cal_g = 0.0
        cvl = 0.0
        if self.use_cal:
            cal_d = self._discriminator_step(phi_y)
            cal_g = cal_generator_loss(self.discriminator(self._field_tensor(phi_y)))
        if self.use_cvl:
            cvl = cvl_loss(
                self.phi_x, phi_y, [self.layer],
                h=self.config.cx_bandwidth, eps=self.config.cx_epsilon,
                source_keep=self.source_keep,
            )
        rl = rl_loss(y.squeeze(0).permute(1, 2, 0), self.x_hwc, self.m_hw)
        breakdown = self._assemble(cal_g, cvl, rl, self.config.loss_weights, cal_d)
        self._generator_update(breakdown.tl)

        b = breakdown.floats()
        return self._record(dict(
            tl=b.tl, cfl=b.cfl, cal_g=b.cal_g, cal_d=b.cal_d,
            cvl=b.cvl, rl=b.rl, cycle=0.0,
        ))

    def output(self, composite: Optional[bool] = None, use_best: Optional[bool] = None) -> np.ndarray:
        """Current restored image; composited with known pixels on request."""
        if composite is None:
            composite = self.config.composite_output
        if use_best is None:
            use_best = self.config.emit_best
        raw = self._generator_output(self.net_input, use_best=use_best)
        if composite:
            return masking.composite(raw, self.source, self.mask)
        return raw

    def state(self) -> TrainState:
        common = self._state_common()
        common["mask"] = self.mask.copy()
        return TrainState(**common)

    @classmethod
    def from_state(cls, state: TrainState, backbone=None) -> "RestoreLoop":
        config = RunConfig.from_dict(state.config)
        loop = cls(state.source, state.mask, config, backbone=backbone)
        loop._restore_from_state(state)
        return loop


class ResizeLoop(_Loop):
    """Optimization loop for content-aware resizing with cycle consistency."""

    task = "resize"

    def __init__(self, source, config, backbone=None):
        if config.task != "resize":
            raise ValueError("ResizeLoop requires task == 'resize'")
        super().__init__(source, config, backbone=backbone)
        sx, sy = config.resize_factor
        h, w = self.source.shape[:2]
        self.source_hw = (h, w)
        self.target_hw = (int(round(h * sy)), int(round(w * sx)))
        if min(self.target_hw) < MIN_SIDE:
            raise ValueError(
                f"resize target {self.target_hw} below the {MIN_SIDE}px minimum"
            )
        self.net_input = _image_to_batch(self.source)
        self.x_hwc = torch.from_numpy(np.ascontiguousarray(self.source))
        # tl = (lambda_cal * cal_g + lambda_cvl * cvl) + lambda_cyc * cycle
        self._weights = LossWeights(
            lambda_G=1.0,
            lambda_R=config.lambda_cyc,
            lambda_cal=config.lambda_cal,
            lambda_cvl=config.lambda_cvl,
        )

    def _cal_active(self) -> bool:
        return self.config.lambda_cal > 0

    def _cvl_active(self) -> bool:
        return self.config.lambda_cvl > 0

    def step(self) -> dict:
        y = self.generator(self.net_input, target_hw=self.target_hw)
        phi_y = None
        if self.use_cal or self.use_cvl:
            phi_y = self._extract(y)

        cal_d = 0.0
        cal_g = 0.0
        cvl = 0.0
        if self.use_cal:
            cal_d = self._discriminator_step(phi_y)
            cal_g = cal_generator_loss(self.discriminator(self._field_tensor(phi_y)))
        if self.use_cvl:
            cvl = cvl_loss(
                self.phi_x, phi_y, [self.layer],
                h=self.config.cx_bandwidth, eps=self.config.cx_epsilon,
            )
        cycle = 0.0
        if self.config.lambda_cyc > 0:
            x_back = self.generator(y, target_hw=self.source_hw)
            cycle = ((x_back.squeeze(0).permute(1, 2, 0) - self.x_hwc) ** 2).mean()
        breakdown = self._assemble(cal_g, cvl, cycle, self._weights, cal_d)
        self._generator_update(breakdown.tl)

        b = breakdown.floats()
        return self._record(dict(
            tl=b.tl, cfl=b.cfl, cal_g=b.cal_g, cal_d=b.cal_d,
            cvl=b.cvl, rl=0.0, cycle=b.rl,
        ))

    def output(self, use_best: Optional[bool] = None) -> np.ndarray:
        if use_best is None:
            use_best = self.config.emit_best
        return self._generator_output(
            self.net_input, target_hw=self.target_hw, use_best=use_best
        )

    def state(self) -> TrainState:
        common = self._state_common()
        common["mask"] = None
        return TrainState(**common)

    @classmethod
    def from_state(cls, state: TrainState, backbone=None) -> "ResizeLoop":
        config = RunConfig.from_dict(state.config)
        loop = cls(state.source, config, backbone=backbone)
        loop._restore_from_state(state)
        return loop


def loop_from_state(state: TrainState, backbone=None):
    if state.task == "resize":
        return ResizeLoop.from_state(state, backbone=backbone)
    return RestoreLoop.from_state(state, backbone=backbone)


def report_from_loop(loop: _Loop, wall_seconds: float) -> RunReport:
    report = RunReport(task=loop.task, config=loop.config.to_dict())
    for row in loop.trace_rows:
        report.append_trace(row)
    report.wall_seconds = wall_seconds
    return report


def metric_set(raw, composited, ground_truth, mask, on_composite: bool) -> dict:
    """PSNR / SSIM / masked-SSIM for both output variants.

    Headline keys reflect ``on_composite``; the per-variant values are kept
    under ``*_raw`` and ``*_composite``.
    """
    out = {}
    gt = check_image(ground_truth)
    for tag, img in (("raw", raw), ("composite", composited)):
        if img is None:
            continue
        out[f"psnr_{tag}"] = psnr(img, gt)
        if min(gt.shape[:2]) >= 11:
            out[f"ssim_{tag}"] = ssim(img, gt)
            if mask is not None and (mask == 0).any():
                out[f"masked_ssim_{tag}"] = masked_ssim(img, gt, mask)
    pick = "composite" if on_composite else "raw"
    for key in ("psnr", "ssim", "masked_ssim"):
        if f"{key}_{pick}" in out:
            out[key] = out[f"{key}_{pick}"]
    return out


def train_restore(source, mask, config: RunConfig, ground_truth=None,
                  backbone=None):
    """Optimize a generator against one corrupted image.

    ``source`` is the corrupted image (consistent with ``mask``); metrics
    are added to the report only when ``ground_truth`` is given. Returns
    the restored image (composited when configured) and the run report.
    """
    t0 = time.perf_counter()
    loop = RestoreLoop(source, mask, config, backbone=backbone)
    loop.run(config.iterations)
    report = report_from_loop(loop, time.perf_counter() - t0)
    raw = loop.output(composite=False)
    composited = masking.composite(raw, loop.source, loop.mask)
    if ground_truth is not None:
        report.metrics = metric_set(
            raw, composited, ground_truth, loop.mask, config.metrics_on_composite
        )
    report.check()
    final = composited if config.composite_output else raw
    return final, report


def train_resize(source, factors, config: RunConfig, backbone=None):
    """Resize one image by (sx, sy) with the cycle-consistent objective."""
    if config.resize_factor is None or tuple(config.resize_factor) != tuple(factors):
        config = RunConfig.from_dict({**config.to_dict(), "resize_factor": list(factors)})
    t0 = time.perf_counter()
    loop = ResizeLoop(source, config, backbone=backbone)
    loop.run(config.iterations)
    report = report_from_loop(loop, time.perf_counter() - t0)
    report.check()
    return loop.output(), report
