"""Occlusion augmentation: joint masking and instance paste.

Both operations leave the ground truth untouched. Masked joints keep their
labels so the network learns to infer them, and pasted people are pure
distractors whose joints are never added to the annotation.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .annotations import AnnotatedImage, validate_keypoints
from .imaging import apply_affine, invert_affine, rotation_scale_matrix, warp_rgba

MAX_PASTE_RETRIES = 20


class AugmentConfigError(ValueError):
    pass


@dataclass
class AugmentConfig:
    mask_prob: float = 0.5
    max_masked_joints: int = 4
    rect_size_range: tuple = (0.05, 0.20)
    paste_prob: float = 0.5
    rotation_range: float = 30.0
    scale_range: tuple = (0.7, 1.3)
    max_target_overlap: float = 0.5
    seed: int = 0

    def __post_init__(self):
        self.rect_size_range = tuple(float(v) for v in self.rect_size_range)
        self.scale_range = tuple(float(v) for v in self.scale_range)
        self.validate()

    def validate(self):
        for name in ("mask_prob", "paste_prob", "max_target_overlap"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise AugmentConfigError(f"{name} must lie in [0, 1], got {v}")
        if int(self.max_masked_joints) != self.max_masked_joints or self.max_masked_joints < 0:
            raise AugmentConfigError(f"max_masked_joints must be a non-negative integer, got {self.max_masked_joints}")
        lo, hi = self.rect_size_range
        if not 0 < lo <= hi:
            raise AugmentConfigError(f"rect_size_range must satisfy 0 < min <= max, got {self.rect_size_range}")
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise AugmentConfigError(f"scale_range must satisfy 0 < min <= max, got {self.scale_range}")
        if not 0 <= self.rotation_range <= 180:
            raise AugmentConfigError(f"rotation_range must lie in [0, 180], got {self.rotation_range}")

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise AugmentConfigError(f"unknown augment keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


@dataclass
class InstanceCutout:
    pixels: np.ndarray     # (h, w, 4) uint8
    keypoints: np.ndarray  # (N, 3) in cutout coordinates

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 4 or self.pixels.dtype != np.uint8:
            raise AugmentConfigError(f"cutout must be an (h, w, 4) uint8 image, got {self.pixels.shape} {self.pixels.dtype}")
        if not (self.pixels[..., 3] > 0).any():
            raise AugmentConfigError("cutout has no opaque pixels")
        self.keypoints = validate_keypoints(self.keypoints)


@dataclass
class MaskedJoint:
    person: int
    joint: int
    rect: tuple   # integer (x, y, w, h), clipped to the image
    color: tuple


@dataclass
class PasteRecord:
    pool_index: int
    angle: float
    scale: float
    offset: tuple   # top-left of the transformed cutout canvas in image coordinates
    region: tuple   # tight (x, y, w, h) of pasted pixels, clipped to the image
    overlap: float  # intersection area / target bbox area
    attempts: int
    # pasted person's joints in image coordinates (never added to the annotation)
    keypoints: list = field(default_factory=list)


@dataclass
class AugmentRecord:
    masked: list = field(default_factory=list)
    paste: PasteRecord | None = None

    @property
    def empty(self):
        return not self.masked and self.paste is None

    def to_dict(self):
        """JSON-ready: numpy scalars and arrays become Python numbers and lists."""
        return _plain({"masked": [asdict(m) for m in self.masked],
                       "paste": None if self.paste is None else asdict(self.paste)})


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.ndarray, np.generic)):
        return obj.tolist()
    return obj


def _rng(rng_state):
    return rng_state if isinstance(rng_state, np.random.Generator) else np.random.default_rng(rng_state)


def mask_joints(img, cfg, rng_state):
    """Cover up to ``max_masked_joints`` labeled joints with random-color rectangles."""
    rng = _rng(rng_state)
    out = img.copy()
    record = AugmentRecord()
    if cfg.max_masked_joints == 0 or rng.random() >= cfg.mask_prob:
        return out, record
    H, W = out.pixels.shape[:2]
    candidates = [(p, j) for p, person in enumerate(out.persons)
                  for j, (x, y, v) in enumerate(person.keypoints)
                  if v > 0 and 0 <= x < W and 0 <= y < H]
    if not candidates:
        return out, record
    k = int(rng.integers(1, cfg.max_masked_joints + 1))
    chosen = rng.choice(len(candidates), size=min(k, len(candidates)), replace=False)
    for c in chosen:
        p, j = candidates[int(c)]
        person = out.persons[p]
        x, y = person.keypoints[j, :2]
        diag = float(np.hypot(person.bbox[2], person.bbox[3]))
        w, h = rng.uniform(*cfg.rect_size_range, size=2) * diag
        cx, cy = x + rng.uniform(-0.25, 0.25) * w, y + rng.uniform(-0.25, 0.25) * h
        x0, y0 = max(int(round(cx - w / 2)), 0), max(int(round(cy - h / 2)), 0)
        x1, y1 = min(int(round(cx + w / 2)) + 1, W), min(int(round(cy + h / 2)) + 1, H)
        color = tuple(int(v) for v in rng.integers(0, 256, size=3))
        out.pixels[y0:y1, x0:x1] = color
        record.masked.append(MaskedJoint(p, j, (x0, y0, x1 - x0, y1 - y0), color))
    return out, record


def transform_cutout(cutout, angle, scale):
    """Rotate and scale a cutout about its center onto a canvas that holds the whole result."""
    h, w = cutout.pixels.shape[:2]
    fwd = rotation_scale_matrix(angle, scale, ((w - 1) / 2, (h - 1) / 2))
    corners = apply_affine(fwd, [[0, 0], [w - 1, 0], [0, h - 1], [w - 1, h - 1]])
    lo = np.floor(corners.min(axis=0)) - 1
    hi = np.ceil(corners.max(axis=0)) + 1
    fwd[:, 2] -= lo
    size = (int(hi[1] - lo[1]) + 1, int(hi[0] - lo[0]) + 1)
    rgba = warp_rgba(cutout.pixels, invert_affine(fwd), size)
    return rgba, fwd


def _tight_box(alpha):
    ys, xs = np.nonzero(alpha > 0)
    if len(xs) == 0:
        return None
    return xs.min(), ys.min(), xs.max() + 1, ys.max() + 1


def box_overlap(a, b):
    """Intersection area of two (x0, y0, x1, y1) boxes."""
    return max(0.0, min(a[2], b[2]) - max(a[0], b[0])) * max(0.0, min(a[3], b[3]) - max(a[1], b[1]))


def instance_paste(img, pool, cfg, rng_state):
    """Alpha-composite a rotated, scaled pool person at a random position."""
    rng = _rng(rng_state)
    out = img.copy()
    record = AugmentRecord()
    if cfg.paste_prob == 0:
        return out, record
    if not pool:
        raise AugmentConfigError("instance pool is empty but paste_prob > 0")
    if rng.random() >= cfg.paste_prob:
        return out, record
    H, W = out.pixels.shape[:2]
    idx = int(rng.integers(len(pool)))
    angle = float(rng.uniform(-cfg.rotation_range, cfg.rotation_range))
    scale = float(rng.uniform(*cfg.scale_range))
    rgba, fwd = transform_cutout(pool[idx], angle, scale)
    tight = _tight_box(rgba[..., 3])
    if tight is None:
        return out, record
    tx0, ty0, tx1, ty1 = tight
    tb = out.target.bbox
    target_box = (tb[0], tb[1], tb[0] + tb[2], tb[1] + tb[3])
    target_area = float(tb[2] * tb[3])
    # the tight box may hang off the image by up to half its size
    lo_x, hi_x = -tx0 - (tx1 - tx0) // 2, W - tx1 + (tx1 - tx0) // 2
    lo_y, hi_y = -ty0 - (ty1 - ty0) // 2, H - ty1 + (ty1 - ty0) // 2
    for attempt in range(1 + MAX_PASTE_RETRIES):
        px = int(rng.integers(lo_x, max(hi_x, lo_x) + 1))
        py = int(rng.integers(lo_y, max(hi_y, lo_y) + 1))
        box = (max(px + tx0, 0), max(py + ty0, 0), min(px + tx1, W), min(py + ty1, H))
        if box[2] <= box[0] or box[3] <= box[1]:
            continue
        overlap = box_overlap(box, target_box) / target_area if target_area > 0 else 0.0
        if overlap <= cfg.max_target_overlap:
            break
    else:
        return out, record
    x0, y0, x1, y1 = box
    patch = rgba[y0 - py:y1 - py, x0 - px:x1 - px].astype(np.float64)
    a = patch[..., 3:4] / 255.0
    region = out.pixels[y0:y1, x0:x1].astype(np.float64)
    blended = np.clip(np.rint(a * patch[..., :3] + (1 - a) * region), 0, 255).astype(np.uint8)
    out.pixels[y0:y1, x0:x1] = np.where(a > 0, blended, out.pixels[y0:y1, x0:x1])
    kps = pool[idx].keypoints.copy()
    kps[:, :2] = apply_affine(fwd, kps[:, :2]) + (px, py)
    kps[kps[:, 2] == 0, :2] = 0
    record.paste = PasteRecord(idx, angle, scale, (px, py), (x0, y0, x1 - x0, y1 - y0),
                               float(overlap), attempt + 1, kps.tolist())
    return out, record


def augment(img, pool, cfg, rng_state):
    """Instance paste followed by joint masking, both drawn from one generator."""
    rng = _rng(rng_state)
    out, rec = instance_paste(img, pool, cfg, rng) if cfg.paste_prob > 0 else (img.copy(), AugmentRecord())
    out, mrec = mask_joints(out, cfg, rng)
    rec.masked = mrec.masked
    return out, rec


# ------------------------------------------------------------------ pool I/O

def load_pool(directory):
    """Read ``*.png`` RGBA cutouts, each with a ``.json`` sidecar holding ``keypoints``."""
    from PIL import Image

    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"instance pool directory not found: {directory}")
    pool = []
    for png in sorted(directory.glob("*.png")):
        side = png.with_suffix(".json")
        if not side.exists():
            raise AugmentConfigError(f"{png.name}: missing keypoint sidecar {side.name}")
        kps = json.loads(side.read_text()).get("keypoints")
        if not isinstance(kps, list) or len(kps) % 3:
            raise AugmentConfigError(f"{side.name}: keypoints must be a flat list of 3N numbers")
        with Image.open(png) as im:
            rgba = np.asarray(im.convert("RGBA"), dtype=np.uint8)
        pool.append(InstanceCutout(rgba, np.asarray(kps, dtype=np.float64).reshape(-1, 3)))
    return pool


class OcclusionAugmenter(TransformerMixin, BaseEstimator):
    """Transformer over lists of :class:`AnnotatedImage`; sample i uses seed (seed, i)."""

    def __init__(self, mask_prob=0.5, max_masked_joints=4, rect_size_range=(0.05, 0.20),
                 paste_prob=0.5, rotation_range=30.0, scale_range=(0.7, 1.3),
                 max_target_overlap=0.5, seed=0, pool=None):
        self.mask_prob = mask_prob
        self.max_masked_joints = max_masked_joints
        self.rect_size_range = rect_size_range
        self.paste_prob = paste_prob
        self.rotation_range = rotation_range
        self.scale_range = scale_range
        self.max_target_overlap = max_target_overlap
        self.seed = seed
        self.pool = pool

    def _config(self):
        params = self.get_params()
        params.pop("pool")
        return AugmentConfig(**params)

    def fit(self, X=None, y=None):
        self.config_ = self._config()
        self.pool_ = list(self.pool or [])
        return self

    def transform(self, X):
        cfg = getattr(self, "config_", None) or self._config()
        pool = getattr(self, "pool_", None)
        pool = list(self.pool or []) if pool is None else pool
        out = []
        for i, img in enumerate(X):
            if not isinstance(img, AnnotatedImage) or img.pixels is None:
                raise TypeError(f"sample {i}: expected an AnnotatedImage with pixels")
            out.append(augment(img, pool, cfg, np.random.default_rng([cfg.seed, i]))[0])
        return out
