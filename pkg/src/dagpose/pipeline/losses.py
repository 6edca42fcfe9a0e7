"""Composite training loss: two heatmap MSE terms plus a weighted pose L1 term."""

import numpy as np

from .. import numerics as nx
from ..numerics import Tensor


def heatmap_mse(pred, gt):
    return nx.mean(nx.square(pred - Tensor(np.asarray(gt, dtype=pred.dtype))))


def pose_l1(refined, gt_pose, visibility, crop_size):
    """Mean over labeled joints of |dx| / width + |dy| / height; 0 without labeled joints."""
    vis = np.asarray(visibility)
    count = int(np.count_nonzero(vis > 0))
    if count == 0:
        return Tensor(np.zeros((), dtype=refined.dtype))
    scale = np.array([1.0 / crop_size[0], 1.0 / crop_size[1]], dtype=refined.dtype)
    weight = ((vis > 0)[..., None] * scale).astype(refined.dtype)
    diff = refined - Tensor(np.asarray(gt_pose, dtype=refined.dtype))
    return nx.sum(nx.absolute(diff) * weight) / float(count)


def total_loss(pred_multi, pred_target, gt_multi, gt_target, refined, gt_pose, visibility,
               crop_size, lambda_p=1.0):
    """Return ``(total, parts)`` with ``parts`` = floats for ``l_m``, ``l_t``, ``l_p``.

    ``pred_multi`` or ``refined`` may be None when the matching component is
    disabled; their terms are then 0.
    """
    if not np.isfinite(lambda_p) or lambda_p < 0:
        raise ValueError(f"lambda_p must be a finite non-negative number, got {lambda_p}")
    l_t = heatmap_mse(pred_target, gt_target)
    total = l_t
    l_m = l_p = None
    if pred_multi is not None:
        l_m = heatmap_mse(pred_multi, gt_multi)
        total = l_m + total
    if refined is not None:
        l_p = pose_l1(refined, gt_pose, visibility, crop_size)
        if lambda_p:
            total = total + l_p * lambda_p
    parts = {"l_m": 0.0 if l_m is None else float(l_m.item()), "l_t": float(l_t.item()),
             "l_p": 0.0 if l_p is None else float(l_p.item())}
    return total, parts
