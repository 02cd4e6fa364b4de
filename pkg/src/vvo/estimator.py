"""scikit-learn style wrapper around the two-stage pipeline."""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import harness
from .tensorio import CONFIG_KEYS, RunConfig


def check_images(X, name: str = "X") -> np.ndarray:
    """Validate an ``(N, H, W, 3)`` float image batch in [0, 1]."""
    X = check_array(X, ensure_2d=False, allow_nd=True, dtype=np.float32, input_name=name)
    if X.ndim != 4 or X.shape[-1] != 3:
        raise ValueError(f"{name} must have shape (n_samples, H, W, 3), got {X.shape}")
    if X.shape[1] != X.shape[2]:
        raise ValueError(f"{name} images must be square, got {X.shape[1]}x{X.shape[2]}")
    if X.min() < 0 or X.max() > 1:
        raise ValueError(f"{name} values must lie in [0, 1]")
    return X


def check_labels(y, images: np.ndarray) -> np.ndarray:
    """Validate integer label maps matching the image batch."""
    y = check_array(y, ensure_2d=False, allow_nd=True, dtype=None, input_name="y")
    if y.shape != images.shape[:3]:
        raise ValueError(f"y must have shape {images.shape[:3]}, got {y.shape}")
    if not np.issubdtype(y.dtype, np.integer) or y.min() < 0:
        raise ValueError("y must hold nonnegative integer labels")
    return y.astype(np.int32)


class ObjectCentricSegmenter(BaseEstimator, TransformerMixin):
    """Unsupervised object segmentation by slot attention on frozen features.

    ``fit`` pretrains the quantizer (unless ``variant="no-quantize"``) and
    then trains the aggregator and decoder. ``transform`` returns flattened
    slot vectors, ``predict`` the slot index of every feature cell (or pixel
    with ``eval_resolution="image"``).

    Parameters mirror the run-config keys of the same name.
    """

    def __init__(
        self,
        variant: str = "vvo",
        decoder: str = "mixture",
        num_slots: int = 6,
        slot_iters: int = 3,
        slot_init: str = "learned",
        codebook_size: int = 256,
        pretrain_steps: int = 1000,
        train_steps: int = 3000,
        batch_size: int = 16,
        lr: float = 4e-4,
        eval_resolution: str = "feature",
        seed: int = 0,
    ):
        self.variant = variant
        self.decoder = decoder
        self.num_slots = num_slots
        self.slot_iters = slot_iters
        self.slot_init = slot_init
        self.codebook_size = codebook_size
        self.pretrain_steps = pretrain_steps
        self.train_steps = train_steps
        self.batch_size = batch_size
        self.lr = lr
        self.eval_resolution = eval_resolution
        self.seed = seed

    def _config(self, image_size: int) -> RunConfig:
        params = {k: v for k, v in self.get_params().items() if k in CONFIG_KEYS}
        return RunConfig(params, image_size=image_size)

    def fit(self, X, y=None):
        X = check_images(X)
        cfg = self._config(X.shape[1])
        pipeline = harness.build_pipeline(cfg)
        features = harness.encode_all(pipeline.encoder, X)
        pre_rng, train_rng = harness.run_streams(cfg)
        result = harness.pretrain(pipeline, X, features, pre_rng)
        targets = harness.compute_targets(pipeline, features, X)
        trained = harness.train_ocl(pipeline, features, targets, train_rng)
        self.pipeline_ = pipeline
        self.config_ = cfg
        self.pretrain_log_ = [] if result is None else result.log
        self.train_log_ = trained.log
        self.loss_curve_ = trained.losses
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def _features(self, X):
        check_is_fitted(self, "pipeline_")
        X = check_images(X)
        if X.shape[1] != self.config_["image_size"]:
            raise ValueError(f"fitted on {self.config_['image_size']}px images, got {X.shape[1]}px")
        return harness.encode_all(self.pipeline_.encoder, X)

    def transform(self, X) -> np.ndarray:
        """Slot vectors, shape ``(n_samples, num_slots * slot_dim)``."""
        z = self._features(X)
        with torch.no_grad():
            adjusted = self.pipeline_.encoder.adjust_for_aggregation(z)
            state = self.pipeline_.aggregator(adjusted, rng=harness._eval_rng(self.config_))
        return state.slots.reshape(len(z), -1).numpy()

    def predict(self, X) -> np.ndarray:
        """Slot index per cell, ``(n_samples, h, w)``."""
        z = self._features(X)
        return harness.predict_masks(self.pipeline_, z, harness._eval_rng(self.config_))

    def score(self, X, y) -> float:
        """Mean foreground ARI against ground-truth label maps."""
        images = check_images(X)
        y = check_labels(y, images)
        masks = self.predict(images)
        return harness.score_masks(masks, harness.eval_labels(self.config_, y))["ari_fg"]
