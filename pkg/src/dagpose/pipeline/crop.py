"""Person-centered 4:3 crops (height:width) around a target bounding box."""

from dataclasses import dataclass

import numpy as np

from ..imaging import warp_affine

PADDING = 1.25


@dataclass(frozen=True)
class CropBox:
    """Crop pixel (u, v) sits at image point ``center + ((u, v) - (size - 1) / 2) * scale``."""

    center: tuple
    scale: float   # image pixels per crop pixel
    size: tuple    # crop (width, height)

    def inverse_matrix(self):
        """Crop-to-image affine map."""
        w, h = self.size
        cx, cy = self.center
        s = self.scale
        return np.array([[s, 0.0, cx - (w - 1) / 2 * s], [0.0, s, cy - (h - 1) / 2 * s]])

    def to_crop(self, pts):
        pts = np.asarray(pts, dtype=np.float64)
        w, h = self.size
        return (pts - np.asarray(self.center)) / self.scale + np.array([(w - 1) / 2, (h - 1) / 2])

    def to_image(self, pts):
        pts = np.asarray(pts, dtype=np.float64)
        w, h = self.size
        return (pts - np.array([(w - 1) / 2, (h - 1) / 2])) * self.scale + np.asarray(self.center)


def check_crop_size(crop_size):
    w, h = crop_size
    if w <= 0 or h <= 0 or 3 * h != 4 * w:
        raise ValueError(f"crop size must have height:width = 4:3, got width={w} height={h}")
    if w % 4 or h % 4:
        raise ValueError(f"crop size must be a multiple of the heatmap stride 4, got {crop_size}")


def crop_box(bbox, crop_size, padding=PADDING):
    """Expand ``bbox`` (x, y, w, h) to the crop aspect ratio and pad it."""
    check_crop_size(crop_size)
    x, y, w, h = (float(v) for v in bbox)
    cw, ch = crop_size
    aspect = cw / ch
    w, h = max(w, 1.0), max(h, 1.0)
    if w > aspect * h:
        h = w / aspect
    else:
        w = h * aspect
    return CropBox((x + float(bbox[2]) / 2, y + float(bbox[3]) / 2), h * padding / ch, (int(cw), int(ch)))


def crop_image(pixels, box):
    """Bilinear crop of an (H, W, 3) uint8 image; returns float64 (h, w, 3)."""
    vals, _ = warp_affine(pixels, box.inverse_matrix(), (box.size[1], box.size[0]))
    return vals


def crop_keypoints(kps, box):
    """Map (J, 3) image keypoints into crop pixels; unlabeled joints stay (0, 0, 0)."""
    kps = np.asarray(kps, dtype=np.float64)
    out = np.zeros_like(kps)
    lab = kps[:, 2] > 0
    out[lab, :2] = box.to_crop(kps[lab, :2])
    out[:, 2] = kps[:, 2]
    return out
