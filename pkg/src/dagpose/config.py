"""Run configuration: one YAML (or JSON) file, with command-line flags as overrides.

Precedence, lowest to highest: built-in defaults, the config file, flags.

Top-level keys::

    seed: 0             # model init, batch order and augmentation draws
    train:    {epochs, batch_size, lr, lr_schedule, lambda_p, sigma, use_augment}
    model:    {crop_width, crop_height, channels, strides, use_adam, use_gcn,
               gcn_hidden, gcn_depth, num_hops, skeleton, dtype}
    augment:  {mask_prob, max_masked_joints, rect_size_range, paste_prob,
               rotation_range, scale_range, max_target_overlap}
    ablation: {seeds, epochs}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .augment import AugmentConfig, AugmentConfigError
from .pipeline.model import ModelConfig
from .pipeline.train import TrainConfig


class ConfigError(ValueError):
    pass


TRAIN_KEYS = ("epochs", "batch_size", "lr", "lr_schedule", "lambda_p", "sigma", "use_augment")


@dataclass
class AblationConfig:
    seeds: tuple = (0, 1, 2)
    epochs: int = 20

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        if len(self.seeds) < 1:
            raise ConfigError("ablation.seeds must list at least one seed")
        if int(self.epochs) != self.epochs or self.epochs < 0:
            raise ConfigError(f"ablation.epochs must be a non-negative integer, got {self.epochs}")


@dataclass
class RunConfig:
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)

    def train_config(self, **toggles):
        """TrainConfig with the run seed applied and optional toggle/epoch overrides."""
        cfg = self.train.to_dict()
        cfg["seed"] = self.seed
        cfg["augment"]["seed"] = self.seed
        for key in ("use_adam", "use_gcn"):
            if key in toggles:
                cfg["model"][key] = toggles.pop(key)
        cfg.update(toggles)
        return TrainConfig(**cfg)

    def to_dict(self):
        t = self.train.to_dict()
        return {"seed": self.seed,
                "train": {k: t[k] for k in TRAIN_KEYS},
                "model": t["model"],
                "augment": {k: v for k, v in t["augment"].items() if k != "seed"},
                "ablation": {"seeds": list(self.ablation.seeds), "epochs": self.ablation.epochs}}


def _check_keys(section, d, allowed):
    if not isinstance(d, dict):
        raise ConfigError(f"{section}: expected a mapping, got {type(d).__name__}")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"{section}: unknown keys {unknown}")


def from_dict(doc):
    doc = doc or {}
    _check_keys("config", doc, ("seed", "train", "model", "augment", "ablation"))
    train = dict(doc.get("train") or {})
    _check_keys("train", train, TRAIN_KEYS)
    model = dict(doc.get("model") or {})
    _check_keys("model", model, [f.name for f in fields(ModelConfig)])
    aug = dict(doc.get("augment") or {})
    _check_keys("augment", aug, [f.name for f in fields(AugmentConfig) if f.name != "seed"])
    abl = dict(doc.get("ablation") or {})
    _check_keys("ablation", abl, ("seeds", "epochs"))
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be a 64-bit non-negative integer, got {seed!r}")
    try:
        tc = TrainConfig(**train, seed=seed, model=ModelConfig(**model),
                         augment=AugmentConfig(**aug, seed=seed))
        return RunConfig(seed, tc, AblationConfig(**abl))
    except (AugmentConfigError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path=None, overrides=None):
    """Read ``path`` (YAML or JSON) and apply ``overrides`` given as dotted keys."""
    doc = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            doc = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: cannot parse config ({exc})") from exc
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = doc
        *parents, leaf = dotted.split(".")
        for key in parents:
            if not isinstance(node.get(key), dict):
                node[key] = {}
            node = node[key]
        node[leaf] = value
    return from_dict(doc)


def dump_config(cfg, path):
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))


def config_json(cfg):
    return json.dumps(cfg.to_dict(), indent=2)
