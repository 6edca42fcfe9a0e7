"""Gaussian heatmap targets and argmax decoding at a fixed stride."""

import numpy as np

STRIDE = 4


def heatmap_shape(crop_size, stride=STRIDE):
    """(rows, cols) of the heatmap for a ``(width, height)`` crop."""
    w, h = crop_size
    return int(h) // stride, int(w) // stride


def encode_heatmaps(kps, crop_size, sigma=2.0, stride=STRIDE):
    """One unnormalized Gaussian per labeled joint, peak 1 at ``(x / stride, y / stride)``.

    ``kps`` is ``(J, 3)`` in crop pixels; unlabeled joints (v=0) give all-zero maps.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    kps = np.asarray(kps, dtype=np.float64)
    rows, cols = heatmap_shape(crop_size, stride)
    ys = np.arange(rows, dtype=np.float64)[:, None]
    xs = np.arange(cols, dtype=np.float64)[None, :]
    out = np.zeros((len(kps), rows, cols))
    for j, (x, y, v) in enumerate(kps):
        if v > 0:
            gx = np.exp(-((xs - x / stride) ** 2) / (2 * sigma ** 2))
            gy = np.exp(-((ys - y / stride) ** 2) / (2 * sigma ** 2))
            out[j] = gy * gx
    return out


def encode_multi(kps_list, crop_size, sigma=2.0, stride=STRIDE):
    """Per-joint maximum over several people's heatmaps."""
    rows, cols = heatmap_shape(crop_size, stride)
    out = np.zeros((len(kps_list[0]) if kps_list else 0, rows, cols))
    for kps in kps_list:
        np.maximum(out, encode_heatmaps(kps, crop_size, sigma, stride), out=out)
    return out


def decode_heatmaps(hm, stride=STRIDE):
    """Argmax plus a quarter-cell shift toward the larger neighbor, scaled to crop pixels.

    A neighbor beyond the map edge counts as smaller than any value, so a
    border peak shifts inward.

    ``hm`` is ``(J, h, w)`` or ``(B, J, h, w)``. Returns ``(keypoints, confidence)``
    where keypoints carry v=2, or v=0 (and x=y=0) for an all-zero map.
    """
    hm = np.asarray(hm, dtype=np.float64)
    single = hm.ndim == 3
    if single:
        hm = hm[None]
    B, J, h, w = hm.shape
    flat = hm.reshape(B, J, -1)
    idx = flat.argmax(axis=2)
    conf = np.take_along_axis(flat, idx[..., None], axis=2)[..., 0]
    py, px = np.divmod(idx, w)
    bi, ji = np.meshgrid(np.arange(B), np.arange(J), indexing="ij")

    def neighbor(dy, dx):
        yy, xx = py + dy, px + dx
        ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        return np.where(ok, hm[bi, ji, np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)], -np.inf)

    def shift(hi, lo):
        return np.where(hi > lo, 0.25, np.where(lo > hi, -0.25, 0.0))

    x = px + shift(neighbor(0, 1), neighbor(0, -1))
    y = py + shift(neighbor(1, 0), neighbor(-1, 0))
    empty = ~np.any(flat != 0, axis=2)
    kps = np.stack([x * stride, y * stride, np.where(empty, 0.0, 2.0)], axis=-1)
    kps[empty, :2] = 0.0
    return (kps[0], conf[0]) if single else (kps, conf)
