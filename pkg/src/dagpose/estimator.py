"""scikit-learn style estimator around the training and evaluation pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .annotations import AnnotatedImage, validate_keypoints
from .augment import AugmentConfig
from .pipeline.evaluate import evaluate, predict_images
from .pipeline.model import ModelConfig
from .pipeline.train import TrainConfig, load_model, save_model, train


def check_images(X, require_pixels=True, num_joints=None):
    """Validate a list of :class:`AnnotatedImage` and return it as a list."""
    if isinstance(X, AnnotatedImage):
        X = [X]
    X = list(X)
    if not X:
        raise ValueError("expected at least one annotated image")
    for i, img in enumerate(X):
        if not isinstance(img, AnnotatedImage):
            raise TypeError(f"sample {i}: expected AnnotatedImage, got {type(img).__name__}")
        if require_pixels:
            if img.pixels is None:
                raise ValueError(f"sample {i}: pixels not loaded")
            if img.pixels.ndim != 3 or img.pixels.shape[2] != 3 or img.pixels.dtype != np.uint8:
                raise ValueError(f"sample {i}: pixels must be (H, W, 3) uint8, got "
                                 f"{img.pixels.shape} {img.pixels.dtype}")
        if not img.persons or not 0 <= img.target_index < len(img.persons):
            raise ValueError(f"sample {i}: target_index {img.target_index} does not name a person")
        kps = validate_keypoints(img.target.keypoints, num_joints)
        if num_joints is None:
            num_joints = kps.shape[0]
    return X


class DAGPoseEstimator(BaseEstimator):
    """Top-down pose estimator; ``X`` is a list of annotated images (targets ride along)."""

    def __init__(self, epochs=30, batch_size=16, lr=3e-3, lr_schedule="constant", lambda_p=1.0, sigma=2.0,
                 use_augment=True, use_adam=True, use_gcn=True, seed=0, crop_width=48,
                 crop_height=64, dtype="float32", augment_params=None, pool=None):
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.lr_schedule = lr_schedule
        self.lambda_p = lambda_p
        self.sigma = sigma
        self.use_augment = use_augment
        self.use_adam = use_adam
        self.use_gcn = use_gcn
        self.seed = seed
        self.crop_width = crop_width
        self.crop_height = crop_height
        self.dtype = dtype
        self.augment_params = augment_params
        self.pool = pool

    def _train_config(self):
        aug = dict(self.augment_params or {})
        aug.setdefault("seed", self.seed)
        model = ModelConfig(crop_width=self.crop_width, crop_height=self.crop_height,
                            use_adam=self.use_adam, use_gcn=self.use_gcn, dtype=self.dtype)
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
                           lr_schedule=self.lr_schedule, seed=self.seed, lambda_p=self.lambda_p,
                           sigma=self.sigma, use_augment=self.use_augment, model=model,
                           augment=AugmentConfig(**aug))

    def fit(self, X, y=None, log_path=None):
        X = check_images(X)
        result = train(X, self._train_config(), pool=self.pool, log_path=log_path)
        self.model_ = result.model
        self.history_ = result.history
        self.n_joints_ = result.model.num_joints
        return self

    def predict(self, X):
        """(S, J, 3) image-coordinate keypoints with v=2."""
        check_is_fitted(self, "model_")
        X = check_images(X, num_joints=self.n_joints_)
        pose, _ = predict_images(self.model_, X)
        return np.concatenate([pose, np.full(pose.shape[:2] + (1,), 2.0)], axis=-1)

    def evaluate(self, X):
        check_is_fitted(self, "model_")
        return evaluate(self.model_, check_images(X, num_joints=self.n_joints_))

    def score(self, X, y=None):
        """Mean PCK@0.2 over labeled joints."""
        return self.evaluate(X).pck

    def save(self, path):
        check_is_fitted(self, "model_")
        save_model(path, self.model_, self._train_config())

    @classmethod
    def load(cls, path):
        model, meta = load_model(path)
        t = meta.get("train", {})
        keys = ("epochs", "batch_size", "lr", "lr_schedule", "lambda_p", "sigma", "use_augment", "seed")
        est = cls(**{k: t[k] for k in keys if k in t},
                  use_adam=model.cfg.use_adam, use_gcn=model.cfg.use_gcn, crop_width=model.cfg.crop_width,
                  crop_height=model.cfg.crop_height, dtype=model.cfg.dtype)
        est.model_ = model
        est.history_ = []
        est.n_joints_ = model.num_joints
        return est
