"""Turning annotated images into network-ready crops and targets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..annotations import OCCLUDED, VISIBLE
from .crop import crop_box, crop_image, crop_keypoints
from .heatmaps import encode_heatmaps, encode_multi

PIXEL_MEAN = 127.5
PIXEL_STD = 64.0


def normalize_pixels(crop):
    """(h, w, 3) crop in [0, 255] to a (3, h, w) zero-centered array."""
    return ((np.asarray(crop, dtype=np.float64) - PIXEL_MEAN) / PIXEL_STD).transpose(2, 0, 1)


def body_center(kps, crop_size):
    """Mean of joints flagged 2 or 3, else the crop center (crop pixels)."""
    sel = np.isin(kps[:, 2], (VISIBLE, OCCLUDED))
    if sel.any():
        return kps[sel, :2].mean(axis=0)
    return crop_center(crop_size)


def crop_center(crop_size):
    return np.array([(crop_size[0] - 1) / 2, (crop_size[1] - 1) / 2])


@dataclass
class SampleSet:
    """Crops, targets and crop geometry for a list of annotated images."""

    images: list          # source AnnotatedImage records (pixels kept for augmentation)
    boxes: list           # CropBox per sample
    crops: np.ndarray     # (S, 3, h, w) normalized
    gt_target: np.ndarray  # (S, J, h/4, w/4)
    gt_multi: np.ndarray   # (S, J, h/4, w/4)
    pose: np.ndarray       # (S, J, 3) target keypoints in crop pixels
    centers: np.ndarray    # (S, 2) body centers fed to the attention module, crop pixels
    crop_size: tuple

    def __len__(self):
        return len(self.boxes)


def build_samples(images, crop_size, sigma=2.0, num_joints=None, center="crop"):
    """Crop every target and encode its targets.

    ``center`` picks the body center used at training time: ``"crop"`` (the
    same point inference uses) or ``"joints"`` (mean of labeled joints). The
    joint mean leaks the target location into the attention module and then
    disappears at test time, so the crop center is the default.
    """
    if center not in ("crop", "joints"):
        raise ValueError(f"center must be 'crop' or 'joints', got {center!r}")
    if not images:
        raise ValueError("dataset is empty")
    boxes, crops, gt_t, gt_m, poses, centers = [], [], [], [], [], []
    for i, img in enumerate(images):
        if img.pixels is None:
            raise ValueError(f"sample {i} ({img.file_name or img.image_id}) has no pixels loaded")
        if not img.persons:
            raise ValueError(f"sample {i} ({img.file_name or img.image_id}) has no annotated person")
        target = img.target
        if num_joints is not None and target.keypoints.shape[0] != num_joints:
            raise ValueError(f"sample {i}: expected {num_joints} joints, got {target.keypoints.shape[0]}")
        box = crop_box(target.bbox, crop_size)
        kps = crop_keypoints(target.keypoints, box)
        others = [crop_keypoints(p.keypoints, box) for p in img.persons]
        boxes.append(box)
        crops.append(normalize_pixels(crop_image(img.pixels, box)))
        gt_t.append(encode_heatmaps(kps, crop_size, sigma))
        gt_m.append(encode_multi(others, crop_size, sigma))
        poses.append(kps)
        centers.append(body_center(kps, crop_size) if center == "joints" else crop_center(crop_size))
    return SampleSet(list(images), boxes, np.stack(crops), np.stack(gt_t), np.stack(gt_m),
                     np.stack(poses), np.stack(centers), tuple(crop_size))
