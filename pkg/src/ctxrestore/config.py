"""Run configuration schema, validation, and flat JSON round-trip.

A :class:`RunConfig` describes one restoration or resize run completely.
All hyper-parameter defaults live here as declared, tunable configuration,
not as constants buried in the code.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from typing import Optional, Tuple

from .errors import ConfigError

TASKS = ("outpaint", "inpaint", "restore_random", "restore_wordcloud", "resize")

_MASK_FRACTION_TASKS = ("outpaint", "restore_random")
_MASK_FILE_TASKS = ("inpaint", "restore_wordcloud")


@dataclass(frozen=True)
class LossWeights:
    """Coefficients gating the composite objective.

    ``lambda_cal`` and ``lambda_cvl`` compose the contextual-features term,
    which ``lambda_G`` scales against the ``lambda_R``-weighted pixel term.
    Setting individual weights to zero selects the ablation variants
    (adversarial-only, vector-matching-only, or pixel-only).
    """

    lambda_G: float = 1.0
    lambda_R: float = 1.0
    lambda_cal: float = 1.0
    lambda_cvl: float = 0.1

    def validate(self) -> "LossWeights":
        values = {}
        for name in ("lambda_G", "lambda_R", "lambda_cal", "lambda_cvl"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0.0:
                raise ConfigError(f"{name} must be a finite non-negative real")
            values[name] = value
        if all(v == 0.0 for v in values.values()):
            raise ConfigError("at least one loss weight must be strictly positive")
        return self


@dataclass(frozen=True)
class RunConfig:
    """Complete description of one per-image optimization run.

    Attributes:
        task: one of ``outpaint | inpaint | restore_random |
            restore_wordcloud | resize``.
        mask_fraction: fraction of pixels removed, in (0, 1). Required for
            outpaint (total border fraction) and restore_random (r / 100);
            optional extra random removal for restore_wordcloud.
        mask_path: raster mask file; required for inpaint and
            restore_wordcloud.
        iterations: optimization steps (one discriminator + one generator
            update each).
        seed: seeds mask sampling, network init, and the whole trajectory.
        lambda_G / lambda_R / lambda_cal / lambda_cvl: loss weights.
        lambda_cyc: cycle-consistency weight (resize task only).
        discriminator_scales: 1 = single-scale scoring, >= 2 = multi-scale.
        cx_layer: backbone layer providing context vectors.
        cx_bandwidth: similarity kernel bandwidth (h > 0).
        cx_epsilon: distance-normalization floor (> 0).
        lr_generator / lr_discriminator: step sizes for the two networks.
        beta1 / beta2: adaptive-moment decay rates, shared by both optimizers.
        resize_factor: (sx, sy) scale factors, resize task only.
        composite_output: return known pixels from the source, holes from
            the generator, instead of the raw generator output.
        emit_best: return the lowest-total-loss snapshot instead of the
            final iterate.
        metrics_on_composite: report headline metrics on the composited
            image rather than the raw output (both variants are recorded).
        mask_channel: feed the mask to the generator as a fourth channel.
        cvl_exclude_masked: drop source context vectors whose location is
            mostly missing when building the match pool (ablation flag).
        weights_dir: backbone weights cache directory; overrides the
            ``CTXRESTORE_WEIGHTS_DIR`` environment variable.
    """

    task: str
    mask_fraction: Optional[float] = None
    mask_path: Optional[str] = None
    iterations: int = 4000
    seed: int = 0
    lambda_G: float = 0.01
    lambda_R: float = 1.0
    lambda_cal: float = 0.1
    lambda_cvl: float = 0.1
    lambda_cyc: float = 1.0
    discriminator_scales: int = 3
    cx_layer: str = "conv4_2"
    cx_bandwidth: float = 0.5
    cx_epsilon: float = 1e-5
    lr_generator: float = 5e-4
    lr_discriminator: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    resize_factor: Optional[Tuple[float, float]] = None
    composite_output: bool = True
    emit_best: bool = False
    metrics_on_composite: bool = False
    mask_channel: bool = False
    cvl_exclude_masked: bool = False
    weights_dir: Optional[str] = None

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(
            lambda_G=self.lambda_G,
            lambda_R=self.lambda_R,
            lambda_cal=self.lambda_cal,
            lambda_cvl=self.lambda_cvl,
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["resize_factor"] is not None:
            d["resize_factor"] = list(d["resize_factor"])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if "task" not in data:
            raise ConfigError("config requires a 'task' key")
        data = dict(data)
        if data.get("resize_factor") is not None:
            rf = data["resize_factor"]
            if len(rf) != 2:
                raise ConfigError("resize_factor must be a pair (sx, sy)")
            data["resize_factor"] = (float(rf[0]), float(rf[1]))
        return cls(**data)

    def to_file(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def validate_config(config: RunConfig) -> RunConfig:
    """Check a config for consistency and return it; idempotent.

    Raises:
        ConfigError: on an unknown task, a mask fraction outside (0, 1),
            a missing mask file path, a non-positive iteration count, or
            malformed optimizer / kernel parameters.
    """
    if config.task not in TASKS:
        raise ConfigError(f"unknown task '{config.task}'; expected one of {TASKS}")
    if config.iterations <= 0:
        raise ConfigError("iterations must be a positive integer")
    config.loss_weights.validate()

    if config.task in _MASK_FRACTION_TASKS and config.mask_fraction is None:
        raise ConfigError(f"mask_fraction is required for task '{config.task}'")
    if config.mask_fraction is not None and not (0.0 < config.mask_fraction < 1.0):
        raise ConfigError("mask fraction out of range (0, 1)")
    if config.task in _MASK_FILE_TASKS and not config.mask_path:
        raise ConfigError(f"mask file required for task '{config.task}'")

    if config.task == "resize":
        if config.resize_factor is None:
            raise ConfigError("resize_factor is required for the resize task")
        sx, sy = config.resize_factor
        if sx <= 0 or sy <= 0:
            raise ConfigError("resize_factor entries must be positive")
        if not math.isfinite(config.lambda_cyc) or config.lambda_cyc < 0:
            raise ConfigError("lambda_cyc must be a finite non-negative real")

    if config.discriminator_scales < 1:
        raise ConfigError("discriminator_scales must be >= 1")
    if config.cx_bandwidth <= 0:
        raise ConfigError("cx_bandwidth must be > 0")
    if config.cx_epsilon <= 0:
        raise ConfigError("cx_epsilon must be > 0")
    if config.lr_generator <= 0 or config.lr_discriminator <= 0:
        raise ConfigError("learning rates must be > 0")
    if not (0.0 <= config.beta1 < 1.0 and 0.0 <= config.beta2 < 1.0):
        raise ConfigError("optimizer betas must lie in [0, 1)")

    from .backbone import LAYER_IDS  # local import keeps config torch-free

    if config.cx_layer not in LAYER_IDS:
        raise ConfigError(
            f"unknown cx_layer '{config.cx_layer}'; known layers: "
            f"{', '.join(LAYER_IDS)}"
        )
    return config


TRACE_KEYS = ("tl", "cfl", "cal_g", "cal_d", "cvl", "rl", "cycle")


@dataclass
class RunReport:
    """Outcome of one run: loss trace, metrics, timing, and artifacts.

    ``trace`` maps each loss component to a per-iteration list; all lists
    have length ``iterations_run``. ``metrics`` holds psnr / ssim /
    masked_ssim computed against ground truth when one was supplied, with
    ``*_raw`` and ``*_composite`` variants alongside the headline keys.
    """

    task: str
    config: dict
    iterations_run: int = 0
    trace: dict = dataclasses.field(
        default_factory=lambda: {k: [] for k in TRACE_KEYS}
    )
    metrics: dict = dataclasses.field(default_factory=dict)
    wall_seconds: float = 0.0
    outputs: dict = dataclasses.field(default_factory=dict)

    def append_trace(self, row: dict) -> None:
        for key in TRACE_KEYS:
            self.trace[key].append(float(row.get(key, 0.0)))
        self.iterations_run += 1

    def check(self) -> "RunReport":
        for key, values in self.trace.items():
            if len(values) != self.iterations_run:
                raise ValueError(
                    f"trace '{key}' has {len(values)} rows for "
                    f"{self.iterations_run} iterations"
                )
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunReport":
        return cls(**data)

    def to_file(self, path) -> None:
        self.check()
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_file(cls, path) -> "RunReport":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
