"""PCK@0.2 evaluation with visible and occluded splits."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..annotations import NOT_VISIBLE, OCCLUDED, VISIBLE
from ..skeleton import COCO17_JOINTS
from .data import build_samples, crop_center

PCK_THRESHOLD = 0.2


@dataclass
class EvalReport:
    pck: float                # mean over all labeled joints
    pck_visible: float        # joints with v=2
    pck_occluded: float       # joints with v in {1, 3}
    pck_per_joint: dict
    mean_pixel_error: float   # image pixels
    num_samples: int
    num_joints: dict          # labeled joint counts per split

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def torso_diagonal(kps, names=COCO17_JOINTS):
    """Reference length: left-shoulder to right-hip, else right-shoulder to left-hip; NaN if neither."""
    idx = {n: i for i, n in enumerate(names)}
    for a, b in (("left_shoulder", "right_hip"), ("right_shoulder", "left_hip")):
        if a in idx and b in idx:
            pa, pb = kps[idx[a]], kps[idx[b]]
            if pa[2] > 0 and pb[2] > 0:
                return float(np.hypot(*(pa[:2] - pb[:2])))
    return float("nan")


def pck(pred, gt, threshold=PCK_THRESHOLD, names=COCO17_JOINTS):
    """Hit mask over labeled joints: ``(hits, labeled, errors)`` each shaped (S, J).

    Samples without a usable reference length contribute no labeled joints.
    """
    pred = np.asarray(pred, dtype=np.float64)[..., :2]
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape[:2] != gt.shape[:2]:
        raise ValueError(f"prediction joints {pred.shape[:2]} do not match ground truth {gt.shape[:2]}")
    ref = np.array([torso_diagonal(g, names) for g in gt])
    err = np.linalg.norm(pred - gt[..., :2], axis=-1)
    labeled = (gt[..., 2] > 0) & np.isfinite(ref)[:, None] & (ref[:, None] > 0)
    hits = labeled & (err <= threshold * np.where(np.isfinite(ref), ref, 0.0)[:, None])
    return hits, labeled, err


def _rate(hits, mask):
    n = int(mask.sum())
    return float(hits[mask].mean()) if n else float("nan")


def report_from_predictions(pred, gt, names=COCO17_JOINTS, threshold=PCK_THRESHOLD):
    gt = np.asarray(gt, dtype=np.float64)
    hits, labeled, err = pck(pred, gt, threshold, names)
    vis = labeled & (gt[..., 2] == VISIBLE)
    occ = labeled & np.isin(gt[..., 2], (NOT_VISIBLE, OCCLUDED))
    per_joint = {n: _rate(hits[:, j], labeled[:, j]) for j, n in enumerate(names)}
    return EvalReport(_rate(hits, labeled), _rate(hits, vis), _rate(hits, occ), per_joint,
                      float(err[labeled].mean()) if labeled.any() else float("nan"), len(gt),
                      {"all": int(labeled.sum()), "visible": int(vis.sum()), "occluded": int(occ.sum())})


def predict_images(model, images=None, samples=None, batch_size=64):
    """(S, J, 2) image-coordinate predictions using the crop center as body center."""
    if samples is None:
        samples = build_samples(images, model.cfg.crop_size, num_joints=model.num_joints)
    center = crop_center(model.cfg.crop_size)
    preds = []
    for s in range(0, len(samples), batch_size):
        crops = samples.crops[s:s + batch_size]
        centers = np.tile(center, (len(crops), 1))
        preds.append(model.predict_pose(crops, centers))
    pose = np.concatenate(preds)
    return np.stack([box.to_image(p) for box, p in zip(samples.boxes, pose)]), samples


def evaluate(model, images=None, samples=None):
    if images is not None and images and images[0].target.keypoints.shape[0] != model.num_joints:
        raise ValueError(f"dataset has {images[0].target.keypoints.shape[0]} joints, "
                         f"model expects {model.num_joints}")
    pred, samples = predict_images(model, images, samples)
    gt = np.stack([img.target.keypoints for img in samples.images])
    return report_from_predictions(pred, gt, model.graph.joint_names)
