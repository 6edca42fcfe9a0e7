"""Small image resampling helpers (pixel centers sit at integer coordinates)."""

import numpy as np


def bilinear_lookup(img, xs, ys):
    """Sample ``img`` (H, W, C) at float coordinates; outside samples are 0.

    Returns ``(values, inside)`` where ``inside`` marks samples whose four taps
    all fall in the image.
    """
    H, W = img.shape[:2]
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    ax = xs - x0
    ay = ys - y0
    # one ring of zeros: any tap off the image lands on it after clipping
    padded = np.zeros((H + 2, W + 2) + img.shape[2:], dtype=np.float64)
    padded[1:-1, 1:-1] = img
    flat = padded.reshape((H + 2) * (W + 2), -1)
    xa = np.clip(x0 + 1, 0, W + 1)
    xb = np.clip(x0 + 2, 0, W + 1)
    ya = np.clip(y0 + 1, 0, H + 1) * (W + 2)
    yb = np.clip(y0 + 2, 0, H + 1) * (W + 2)
    wa, wb = 1 - ax, ax
    out = flat[ya + xa] * (wa * (1 - ay))[..., None]
    out += flat[ya + xb] * (wb * (1 - ay))[..., None]
    out += flat[yb + xa] * (wa * ay)[..., None]
    out += flat[yb + xb] * (wb * ay)[..., None]
    out = out.reshape(xs.shape + img.shape[2:])
    # the far tap only counts when it carries weight
    in_x = (x0 >= 0) & (x0 < W) & ((ax == 0) | (x0 + 1 < W))
    in_y = (y0 >= 0) & (y0 < H) & ((ay == 0) | (y0 + 1 < H))
    inside = in_x & in_y
    return out, inside


def warp_affine(img, inv_matrix, out_shape):
    """Resample ``img`` so output pixel (u, v) reads source ``inv_matrix @ (u, v, 1)``."""
    h, w = out_shape
    vs, us = np.mgrid[0:h, 0:w].astype(np.float64)
    xs = inv_matrix[0, 0] * us + inv_matrix[0, 1] * vs + inv_matrix[0, 2]
    ys = inv_matrix[1, 0] * us + inv_matrix[1, 1] * vs + inv_matrix[1, 2]
    if img.ndim == 2:
        vals, inside = bilinear_lookup(img[..., None], xs, ys)
        return vals[..., 0], inside
    return bilinear_lookup(img, xs, ys)


def warp_rgba(rgba, inv_matrix, out_shape):
    """Alpha-aware bilinear warp; regions sampled outside the source are transparent."""
    src = rgba.astype(np.float64)
    alpha = src[..., 3:4] / 255.0
    premult = np.concatenate([src[..., :3] * alpha, alpha], axis=-1)
    vals, _ = warp_affine(premult, inv_matrix, out_shape)
    a = vals[..., 3:4]
    rgb = np.where(a > 1e-6, vals[..., :3] / np.maximum(a, 1e-6), 0.0)
    out = np.concatenate([rgb, a * 255.0], axis=-1)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def rotation_scale_matrix(angle_deg, scale, center):
    """2x3 forward matrix rotating by ``angle_deg`` and scaling about ``center``."""
    t = np.deg2rad(angle_deg)
    c, s = np.cos(t) * scale, np.sin(t) * scale
    cx, cy = center
    return np.array([[c, -s, cx - c * cx + s * cy],
                     [s, c, cy - s * cx - c * cy]])


def invert_affine(m):
    full = np.vstack([m, [0.0, 0.0, 1.0]])
    return np.linalg.inv(full)[:2]


def apply_affine(m, pts):
    pts = np.asarray(pts, dtype=np.float64)
    return pts @ m[:, :2].T + m[:, 2]
