"""Training loop, checkpoints and the loss log."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import numerics as nx
from ..augment import AugmentConfig, augment
from .crop import crop_image
from .data import build_samples, normalize_pixels
from .losses import total_loss
from .model import ModelConfig, PoseModel

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "l_m", "l_t", "l_p", "total")
CHECKPOINT_FORMAT = "dagpose-checkpoint-1"


class NumericalError(FloatingPointError):
    pass


LR_SCHEDULES = ("constant", "cosine")


def scheduled_lr(cfg, step, total_steps):
    """Learning rate for optimizer step ``step`` (0-based) out of ``total_steps``."""
    if cfg.lr_schedule == "constant" or total_steps <= 1:
        return cfg.lr
    return cfg.lr * 0.5 * (1.0 + np.cos(np.pi * step / total_steps))


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    lr: float = 3e-3
    lr_schedule: str = "constant"   # or "cosine"
    seed: int = 0
    lambda_p: float = 1.0
    sigma: float = 2.0
    use_augment: bool = True
    model: ModelConfig = field(default_factory=ModelConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)
        if isinstance(self.augment, dict):
            self.augment = AugmentConfig(**self.augment)
        if int(self.epochs) != self.epochs or self.epochs < 0:
            raise ValueError(f"epochs must be a non-negative integer, got {self.epochs}")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ValueError(f"batch_size must be a positive integer, got {self.batch_size}")
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ValueError(f"lr_schedule must be one of {LR_SCHEDULES}, got {self.lr_schedule!r}")
        if not (np.isfinite(self.lambda_p) and self.lambda_p >= 0):
            raise ValueError(f"lambda_p must be finite and non-negative, got {self.lambda_p}")

    @property
    def toggles(self):
        return {"use_augment": self.use_augment, "use_adam": self.model.use_adam,
                "use_gcn": self.model.use_gcn}

    def to_dict(self):
        d = asdict(self)
        d["model"] = self.model.to_dict()
        d["augment"]["rect_size_range"] = list(self.augment.rect_size_range)
        d["augment"]["scale_range"] = list(self.augment.scale_range)
        return d


@dataclass
class TrainResult:
    model: PoseModel
    history: list   # one dict per epoch with LOG_COLUMNS
    seconds: float


def _augmented_crops(samples, idx, cfg, pool, epoch):
    out = np.empty((len(idx),) + samples.crops.shape[1:], dtype=samples.crops.dtype)
    for k, i in enumerate(idx):
        rng = np.random.default_rng([cfg.augment.seed, cfg.seed, epoch, int(i)])
        img, _ = augment(samples.images[i], pool, cfg.augment, rng)
        out[k] = normalize_pixels(crop_image(img.pixels, samples.boxes[i]))
    return out


def train_step(model, opt, samples, idx, cfg, crops=None):
    """One optimizer step on samples ``idx``; returns the loss parts."""
    crops = samples.crops[idx] if crops is None else crops
    opt.zero_grad()
    with nx.Tape() as tape:
        out = model.forward(crops, samples.centers[idx])
        loss, parts = total_loss(out["hm_multi"], out["hm_target"], samples.gt_multi[idx],
                                 samples.gt_target[idx], out["refined"], samples.pose[idx, :, :2],
                                 samples.pose[idx, :, 2], samples.crop_size, cfg.lambda_p)
        parts["total"] = float(loss.item())
        if not np.isfinite(parts["total"]):
            return parts
        tape.backward(loss)
    opt.step()
    return parts


def train(images, cfg: TrainConfig, pool=None, log_path=None, samples=None, progress=None):
    """Fit a fresh model on annotated images.

    ``samples`` may pass a prebuilt :class:`SampleSet` for ``images`` to skip
    cropping. ``progress`` is called as ``progress(epoch, row)`` after each epoch.
    """
    start = time.perf_counter()
    if samples is None:
        samples = build_samples(images, cfg.model.crop_size, cfg.sigma)
    if len(samples) == 0:
        raise ValueError("dataset is empty")
    if cfg.use_augment and cfg.augment.paste_prob > 0 and not pool:
        raise ValueError("augmentation with paste_prob > 0 needs a non-empty instance pool")
    model = PoseModel(cfg.model, seed=cfg.seed)
    opt = nx.Adam(model.params, lr=cfg.lr)
    history = []
    writer = None
    fh = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
    per_epoch = -(-len(samples) // cfg.batch_size)
    total_steps = cfg.epochs * per_epoch
    try:
        for epoch in range(1, cfg.epochs + 1):
            order = np.random.default_rng([cfg.seed, epoch]).permutation(len(samples))
            sums = dict.fromkeys(LOG_COLUMNS[1:], 0.0)
            steps = 0
            for step, s in enumerate(range(0, len(order), cfg.batch_size), start=1):
                idx = order[s:s + cfg.batch_size]
                crops = _augmented_crops(samples, idx, cfg, pool, epoch) if cfg.use_augment else None
                opt.lr = scheduled_lr(cfg, (epoch - 1) * per_epoch + step - 1, total_steps)
                parts = train_step(model, opt, samples, idx, cfg, crops)
                if not np.isfinite(parts["total"]):
                    raise NumericalError(f"loss became {parts['total']} at epoch {epoch}, step {step} "
                                         f"(l_m={parts['l_m']}, l_t={parts['l_t']}, l_p={parts['l_p']})")
                for k in sums:
                    sums[k] += parts[k] * len(idx)
                steps += len(idx)
            row = {"epoch": epoch, **{k: v / steps for k, v in sums.items()}}
            history.append(row)
            if writer:
                writer.writerow([epoch] + [repr(row[k]) for k in LOG_COLUMNS[1:]])
                fh.flush()
            log.info("epoch %d total %.6f", epoch, row["total"])
            if progress:
                progress(epoch, row)
    finally:
        if fh:
            fh.close()
    return TrainResult(model, history, time.perf_counter() - start)


def save_model(path, model, train_cfg=None, extra=None):
    meta = {"format": CHECKPOINT_FORMAT, "model": model.cfg.to_dict()}
    if train_cfg is not None:
        meta["train"] = train_cfg.to_dict()
    if extra:
        meta.update(extra)
    nx.save_checkpoint(path, model.params, meta)


def load_model(path):
    arrays, meta = nx.read_checkpoint(path)
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise nx.CheckpointError(f"{path}: not a pose model checkpoint (format={meta.get('format')!r})")
    model = PoseModel(ModelConfig(**meta["model"]))
    nx.load_into(model.params, arrays)
    return model, meta
