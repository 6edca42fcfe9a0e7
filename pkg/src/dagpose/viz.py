"""PNG renderings of heatmaps and of initial versus refined poses."""

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .pipeline.crop import crop_box, crop_image
from .pipeline.data import crop_center, normalize_pixels

UPSCALE = 4
INITIAL_COLOR = (40, 120, 255)
REFINED_COLOR = (255, 60, 40)


def _heat_colors(v):
    """Map [0, 1] to a black-red-yellow ramp."""
    v = np.clip(v, 0, 1)[..., None]
    return np.concatenate([np.clip(2 * v, 0, 1), np.clip(2 * v - 1, 0, 1), np.zeros_like(v)], axis=-1) * 255


def _draw_pose(draw, pts, edges, color, scale):
    for a, b in edges:
        draw.line([tuple(pts[a] * scale), tuple(pts[b] * scale)], fill=color, width=2)
    for x, y in pts * scale:
        draw.ellipse([x - 3, y - 3, x + 3, y + 3], outline=color, width=2)


def render_visualizations(model, pixels, bbox, out_dir, stem="image"):
    """Write ``<stem>_heatmaps.png`` and ``<stem>_pose.png``; returns their paths."""
    box = crop_box(bbox, model.cfg.crop_size)
    crop = crop_image(pixels, box)
    out = model.forward(normalize_pixels(crop)[None], crop_center(model.cfg.crop_size)[None])
    hm = out["hm_target"].data[0]
    h, w = crop.shape[:2]
    big = np.asarray(Image.fromarray(np.clip(crop, 0, 255).astype(np.uint8)).resize((w * UPSCALE, h * UPSCALE)))

    peak = hm.max(axis=0)
    peak = peak / peak.max() if peak.max() > 0 else peak
    heat = Image.fromarray(_heat_colors(peak).astype(np.uint8)).resize((w * UPSCALE, h * UPSCALE), Image.BILINEAR)
    overlay = (0.5 * big + 0.5 * np.asarray(heat, dtype=np.float64)).astype(np.uint8)
    out_dir = Path(out_dir)
    hm_path = out_dir / f"{stem}_heatmaps.png"
    Image.fromarray(overlay).save(hm_path)

    canvas = Image.fromarray(big.copy())
    draw = ImageDraw.Draw(canvas)
    edges = model.graph.edges
    _draw_pose(draw, out["initial"][0], edges, INITIAL_COLOR, UPSCALE)
    if out["refined"] is not None:
        _draw_pose(draw, out["refined"].data[0], edges, REFINED_COLOR, UPSCALE)
    pose_path = out_dir / f"{stem}_pose.png"
    canvas.save(pose_path)
    return [hm_path, pose_path]
