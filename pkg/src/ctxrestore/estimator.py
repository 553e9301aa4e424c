"""Scikit-learn style wrappers around the per-image optimization loops.

Fitting optimizes a fresh generator against the supplied image; the fitted
estimator exposes the result and the run report as trailing-underscore
attributes and can re-run its trained generator via ``transform``.
"""

from __future__ import annotations

import time
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import masking
from .config import RunConfig
from .images import MIN_SIDE, check_image, check_mask, check_same_dims
from .networks import generator_forward
from .trainer import RestoreLoop, ResizeLoop, report_from_loop, metric_set


class ContextualRestorer(BaseEstimator):
    """Restore one corrupted image by per-image contextual feature learning.

    Parameters mirror the run configuration; see :class:`RunConfig` for
    their meaning. After ``fit`` the estimator exposes ``restored_`` (the
    configured output image), ``raw_output_``, ``composited_``,
    ``report_``, and ``n_iter_``.
    """

    def __init__(
        self,
        iterations: int = 4000,
        seed: int = 0,
        lambda_G: float = 0.01,
        lambda_R: float = 1.0,
        lambda_cal: float = 0.1,
        lambda_cvl: float = 0.1,
        discriminator_scales: int = 3,
        cx_layer: str = "conv4_2",
        cx_bandwidth: float = 0.5,
        cx_epsilon: float = 1e-5,
        lr_generator: float = 5e-4,
        lr_discriminator: float = 1e-4,
        beta1: float = 0.5,
        beta2: float = 0.999,
        composite_output: bool = True,
        emit_best: bool = False,
        metrics_on_composite: bool = False,
        mask_channel: bool = False,
        cvl_exclude_masked: bool = False,
        weights_dir: Optional[str] = None,
    ):
        self.iterations = iterations
        self.seed = seed
        self.lambda_G = lambda_G
        self.lambda_R = lambda_R
        self.lambda_cal = lambda_cal
        self.lambda_cvl = lambda_cvl
        self.discriminator_scales = discriminator_scales
        self.cx_layer = cx_layer
        self.cx_bandwidth = cx_bandwidth
        self.cx_epsilon = cx_epsilon
        self.lr_generator = lr_generator
        self.lr_discriminator = lr_discriminator
        self.beta1 = beta1
        self.beta2 = beta2
        self.composite_output = composite_output
        self.emit_best = emit_best
        self.metrics_on_composite = metrics_on_composite
        self.mask_channel = mask_channel
        self.cvl_exclude_masked = cvl_exclude_masked
        self.weights_dir = weights_dir

    def _config(self) -> RunConfig:
        # An explicit in-memory mask is the arbitrary-shape corruption case.
        return RunConfig(task="inpaint", mask_path="(in-memory mask)",
                         **self.get_params())

    def fit(self, X, mask=None, ground_truth=None):
        """Optimize against the corrupted image ``X`` (H x W x 3 in [0, 1]).

        ``mask`` marks known pixels (defaults to all-known). Metrics are
        computed only when ``ground_truth`` is given.
        """
        X = check_image(X, min_side=MIN_SIDE)
        if mask is None:
            mask = np.ones(X.shape[:2], dtype=np.float32)
        mask = check_mask(mask)
        check_same_dims(X, mask)
        config = self._config()
        t0 = time.perf_counter()
        loop = RestoreLoop(X, mask, config, backbone=None)
        loop.run(config.iterations)
        report = report_from_loop(loop, time.perf_counter() - t0)
        self.raw_output_ = loop.output(composite=False)
        self.composited_ = masking.composite(self.raw_output_, X, mask)
        self.restored_ = (
            self.composited_ if self.composite_output else self.raw_output_
        )
        if ground_truth is not None:
            report.metrics = metric_set(
                self.raw_output_, self.composited_, ground_truth, mask,
                self.metrics_on_composite,
            )
        self.report_ = report.check()
        self.loop_ = loop
        self.n_iter_ = loop.iteration
        return self

    def transform(self, X):
        """Run the trained generator on an image of the same dimensions."""
        check_is_fitted(self, "loop_")
        X = check_image(X, min_side=MIN_SIDE)
        if self.mask_channel:
            raise ValueError(
                "transform is unavailable with mask_channel=True; the "
                "generator input includes the fit-time mask"
            )
        return generator_forward(self.loop_.generator, X)

    def fit_transform(self, X, mask=None, **fit_params):
        """Fit on ``X`` and return the restored image."""
        return self.fit(X, mask=mask, **fit_params).restored_


class ContextualResizer(BaseEstimator):
    """Synthesize a resized image with the cycle-consistent objective.

    ``scale_x`` / ``scale_y`` multiply width and height. After ``fit`` the
    estimator exposes ``resized_`` and ``report_``.
    """

    def __init__(
        self,
        scale_x: float = 2.0,
        scale_y: float = 1.0,
        iterations: int = 4000,
        seed: int = 0,
        lambda_cal: float = 0.1,
        lambda_cvl: float = 0.1,
        lambda_cyc: float = 1.0,
        discriminator_scales: int = 3,
        cx_layer: str = "conv4_2",
        cx_bandwidth: float = 0.5,
        cx_epsilon: float = 1e-5,
        lr_generator: float = 5e-4,
        lr_discriminator: float = 1e-4,
        beta1: float = 0.5,
        beta2: float = 0.999,
        emit_best: bool = False,
        weights_dir: Optional[str] = None,
    ):
        self.scale_x = scale_x
        self.scale_y = scale_y
        self.iterations = iterations
        self.seed = seed
        self.lambda_cal = lambda_cal
        self.lambda_cvl = lambda_cvl
        self.lambda_cyc = lambda_cyc
        self.discriminator_scales = discriminator_scales
        self.cx_layer = cx_layer
        self.cx_bandwidth = cx_bandwidth
        self.cx_epsilon = cx_epsilon
        self.lr_generator = lr_generator
        self.lr_discriminator = lr_discriminator
        self.beta1 = beta1
        self.beta2 = beta2
        self.emit_best = emit_best
        self.weights_dir = weights_dir

    def _config(self) -> RunConfig:
        params = self.get_params()
        factors = (params.pop("scale_x"), params.pop("scale_y"))
        return RunConfig(task="resize", resize_factor=factors, **params)

    def fit(self, X, y=None):
        X = check_image(X, min_side=MIN_SIDE)
        config = self._config()
        t0 = time.perf_counter()
        loop = ResizeLoop(X, config, backbone=None)
        loop.run(config.iterations)
        self.report_ = report_from_loop(loop, time.perf_counter() - t0).check()
        self.resized_ = loop.output()
        self.loop_ = loop
        self.n_iter_ = loop.iteration
        return self

    def transform(self, X):
        """Resize another image of the same dimensions with the trained net."""
        check_is_fitted(self, "loop_")
        X = check_image(X, min_side=MIN_SIDE)
        return generator_forward(
            self.loop_.generator, X, target_dims=self.loop_.target_hw
        )

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, **fit_params).resized_
