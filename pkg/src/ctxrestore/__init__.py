"""Training-data-free image restoration and synthesis.

A per-image generator is optimized against a composite of contextual
feature losses (adversarial scoring and similarity matching of context
vectors from a frozen pretrained backbone) plus a masked pixel loss.
"""

from .backbone import (
    ContextVectorField,
    FeatureBackbone,
    extract_context,
    get_backbone,
    write_surrogate_weights,
)
from .config import LossWeights, RunConfig, RunReport, validate_config
from .errors import (
    CheckpointError,
    ConfigError,
    NonFiniteLossError,
    WeightsNotFoundError,
)
from .estimator import ContextualResizer, ContextualRestorer
from .images import check_image, check_mask, load_image, save_image
from .losses import (
    LossBreakdown,
    cal_discriminator_loss,
    cal_generator_loss,
    cvl_loss,
    cx_similarity,
    rl_loss,
    total_loss,
)
from .masking import (
    combine_masks,
    composite,
    corrupt,
    load_mask,
    make_outpaint_mask,
    make_random_mask,
    zero_fraction,
)
from .metrics import masked_ssim, psnr, ssim
from .networks import (
    DiscriminatorMap,
    EncoderDecoderGenerator,
    MultiScaleContextDiscriminator,
    discriminator_forward,
    generator_forward,
)
from .trainer import (
    RestoreLoop,
    ResizeLoop,
    TrainState,
    load_state,
    save_state,
    train_resize,
    train_restore,
)

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "ConfigError",
    "ContextVectorField",
    "ContextualResizer",
    "ContextualRestorer",
    "DiscriminatorMap",
    "EncoderDecoderGenerator",
    "FeatureBackbone",
    "LossBreakdown",
    "LossWeights",
    "MultiScaleContextDiscriminator",
    "NonFiniteLossError",
    "RestoreLoop",
    "ResizeLoop",
    "RunConfig",
    "RunReport",
    "TrainState",
    "WeightsNotFoundError",
    "cal_discriminator_loss",
    "cal_generator_loss",
    "check_image",
    "check_mask",
    "combine_masks",
    "composite",
    "corrupt",
    "cvl_loss",
    "cx_similarity",
    "discriminator_forward",
    "extract_context",
    "generator_forward",
    "get_backbone",
    "load_image",
    "load_mask",
    "load_state",
    "make_outpaint_mask",
    "make_random_mask",
    "masked_ssim",
    "psnr",
    "rl_loss",
    "save_image",
    "save_state",
    "ssim",
    "total_loss",
    "train_resize",
    "train_restore",
    "validate_config",
    "write_surrogate_weights",
    "zero_fraction",
]
