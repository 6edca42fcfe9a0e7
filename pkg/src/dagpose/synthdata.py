"""Procedural occluded-pose scenes.

Stick figures on the COCO-17 skeleton are drawn back to front over a smooth
noise background, together with look-alike distractor figures and solid
occluder rectangles. An owner buffer records which entity drew each pixel
last, so every joint's visibility flag follows exactly from the z-order:
a joint is visible (v=2) when its own figure owns the joint pixel and
occluded (v=3) otherwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .annotations import OCCLUDED, VISIBLE, AnnotatedImage, Person, save_annotations
from .skeleton import COCO17_JOINTS

J = {name: i for i, name in enumerate(COCO17_JOINTS)}
PARTS = ("head", "torso", "left_arm", "right_arm", "left_leg", "right_leg")

# Bone lengths as fractions of the figure height.
DEFAULT_PROPORTIONS = {
    "torso": 0.30, "shoulder_width": 0.24, "hip_width": 0.16, "neck": 0.14,
    "upper_arm": 0.17, "forearm": 0.15, "thigh": 0.23, "shin": 0.22,
}

ANGLE_RANGES = {
    "torso_tilt": (-15.0, 15.0), "head_tilt": (-20.0, 20.0),
    "left_shoulder": (-20.0, 160.0), "right_shoulder": (-20.0, 160.0),
    "left_elbow": (-30.0, 120.0), "right_elbow": (-30.0, 120.0),
    "left_hip": (-10.0, 40.0), "right_hip": (-10.0, 40.0),
    "left_knee": (-40.0, 20.0), "right_knee": (-40.0, 20.0),
}


class SceneError(ValueError):
    pass


@dataclass
class FigureSpec:
    root: tuple            # pelvis center (x, y)
    height: float          # overall figure scale in pixels
    lengths: dict          # bone name -> pixels
    angles: dict           # joint name -> degrees
    thickness: float
    palette: np.ndarray    # (6, 3) uint8, one color per body part
    seed: int = 0

    @property
    def head_radius(self):
        return 0.085 * self.height


@dataclass
class Occluder:
    x: float
    y: float
    w: float
    h: float
    color: tuple


@dataclass
class SceneSpec:
    target: FigureSpec
    distractors: list = field(default_factory=list)
    in_front: list = field(default_factory=list)   # per distractor: drawn after the target?
    occluders: list = field(default_factory=list)
    background_seed: int = 0
    size: tuple = (112, 112)  # (height, width)

    def draw_order(self):
        """Entities back to front as (kind, index) pairs; index -1 is the target."""
        order = [("figure", i) for i, f in enumerate(self.in_front) if not f]
        order.append(("figure", -1))
        order += [("figure", i) for i, f in enumerate(self.in_front) if f]
        order += [("occluder", i) for i in range(len(self.occluders))]
        return order

    def figure(self, index):
        return self.target if index == -1 else self.distractors[index]


# ------------------------------------------------------------------ kinematics

def _rot(v, deg):
    t = np.deg2rad(deg)
    c, s = np.cos(t), np.sin(t)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def figure_joints(fig):
    """(17, 2) joint coordinates of a front-facing figure (person's left on image right)."""
    L, A = fig.lengths, fig.angles
    for name, val in L.items():
        if not val > 0:
            raise SceneError(f"bone length {name!r} must be positive, got {val}")
    root = np.asarray(fig.root, dtype=np.float64)
    up = _rot(np.array([0.0, -1.0]), A["torso_tilt"])
    right = np.array([-up[1], up[0]])  # image-right when upright
    down = -up
    pts = np.zeros((17, 2))
    pts[J["left_hip"]] = root + right * L["hip_width"] / 2
    pts[J["right_hip"]] = root - right * L["hip_width"] / 2
    sc = root + up * L["torso"]
    pts[J["left_shoulder"]] = sc + right * L["shoulder_width"] / 2
    pts[J["right_shoulder"]] = sc - right * L["shoulder_width"] / 2
    hu = _rot(up, A["head_tilt"])
    hr = np.array([-hu[1], hu[0]])
    s = fig.height
    nose = sc + hu * L["neck"]
    pts[J["nose"]] = nose
    pts[J["left_eye"]] = nose + hu * 0.03 * s + hr * 0.03 * s
    pts[J["right_eye"]] = nose + hu * 0.03 * s - hr * 0.03 * s
    pts[J["left_ear"]] = nose + hu * 0.015 * s + hr * 0.06 * s
    pts[J["right_ear"]] = nose + hu * 0.015 * s - hr * 0.06 * s
    # outward rotation sign: the left side turns toward +right, i.e. counter-clockwise from down
    for side, sign in (("left", -1.0), ("right", 1.0)):
        sh = pts[J[f"{side}_shoulder"]]
        d1 = _rot(down, sign * A[f"{side}_shoulder"])
        elbow = sh + d1 * L["upper_arm"]
        d2 = _rot(d1, sign * A[f"{side}_elbow"])
        pts[J[f"{side}_elbow"]] = elbow
        pts[J[f"{side}_wrist"]] = elbow + d2 * L["forearm"]
        hip = pts[J[f"{side}_hip"]]
        d1 = _rot(down, sign * A[f"{side}_hip"])
        knee = hip + d1 * L["thigh"]
        d2 = _rot(d1, sign * A[f"{side}_knee"])
        pts[J[f"{side}_knee"]] = knee
        pts[J[f"{side}_ankle"]] = knee + d2 * L["shin"]
    return pts


def figure_primitives(fig):
    """Drawing primitives of a figure, in drawing order.

    Each item is ``(kind, geometry, part)``: ``("capsule", (p0, p1, r))``,
    ``("disc", (c, r))`` or ``("polygon", vertices)``. A pixel center belongs
    to a capsule/disc when its distance to the segment/center is <= r, and to
    the convex polygon when it lies on the inner side of every edge.
    """
    p = figure_joints(fig)
    r = fig.thickness / 2
    prims = []
    torso = [p[J["left_shoulder"]], p[J["right_shoulder"]], p[J["right_hip"]], p[J["left_hip"]]]
    prims.append(("polygon", np.array(torso), "torso"))
    prims.append(("capsule", (p[J["left_shoulder"]], p[J["right_shoulder"]], r), "torso"))
    prims.append(("capsule", (p[J["left_hip"]], p[J["right_hip"]], r), "torso"))
    prims.append(("capsule", (p[J["left_shoulder"]], p[J["left_hip"]], r), "torso"))
    prims.append(("capsule", (p[J["right_shoulder"]], p[J["right_hip"]], r), "torso"))
    for side in ("left", "right"):
        prims.append(("capsule", (p[J[f"{side}_hip"]], p[J[f"{side}_knee"]], r), f"{side}_leg"))
        prims.append(("capsule", (p[J[f"{side}_knee"]], p[J[f"{side}_ankle"]], r), f"{side}_leg"))
    sc = (p[J["left_shoulder"]] + p[J["right_shoulder"]]) / 2
    head_c = p[J["nose"]] + (p[J["left_eye"]] + p[J["right_eye"]] - 2 * p[J["nose"]]) / 3
    prims.append(("capsule", (sc, head_c, r), "torso"))
    prims.append(("disc", (head_c, fig.head_radius), "head"))
    for side in ("left", "right"):
        prims.append(("capsule", (p[J[f"{side}_shoulder"]], p[J[f"{side}_elbow"]], r), f"{side}_arm"))
        prims.append(("capsule", (p[J[f"{side}_elbow"]], p[J[f"{side}_wrist"]], r), f"{side}_arm"))
    return prims


# --------------------------------------------------------------- rasterizing

def _bounds(kind, geom, shape):
    H, W = shape
    if kind == "capsule":
        a, b, r = geom
        lo = np.minimum(a, b) - r
        hi = np.maximum(a, b) + r
    elif kind == "disc":
        c, r = geom
        lo, hi = c - r, c + r
    elif kind == "rect":
        x, y, w, h = geom
        lo, hi = np.array([x, y]), np.array([x + w, y + h])
    else:
        lo, hi = geom.min(axis=0), geom.max(axis=0)
    x0 = max(int(np.floor(lo[0])), 0)
    y0 = max(int(np.floor(lo[1])), 0)
    x1 = min(int(np.ceil(hi[0])) + 1, W)
    y1 = min(int(np.ceil(hi[1])) + 1, H)
    return x0, y0, x1, y1


def primitive_mask(kind, geom, shape):
    """Boolean (H, W) coverage of one primitive, evaluated at pixel centers."""
    H, W = shape
    mask = np.zeros((H, W), dtype=bool)
    x0, y0, x1, y1 = _bounds(kind, geom, shape)
    if x1 <= x0 or y1 <= y0:
        return mask
    ys, xs = np.mgrid[y0:y1, x0:x1].astype(np.float64)
    if kind == "capsule":
        a, b, r = geom
        d = b - a
        dd = float(d @ d)
        t = np.zeros_like(xs) if dd == 0 else np.clip(((xs - a[0]) * d[0] + (ys - a[1]) * d[1]) / dd, 0, 1)
        inside = (xs - a[0] - t * d[0]) ** 2 + (ys - a[1] - t * d[1]) ** 2 <= r * r
    elif kind == "disc":
        c, r = geom
        inside = (xs - c[0]) ** 2 + (ys - c[1]) ** 2 <= r * r
    elif kind == "polygon":
        v = geom
        n = len(v)
        area = sum(v[i, 0] * v[(i + 1) % n, 1] - v[(i + 1) % n, 0] * v[i, 1] for i in range(n))
        sgn = 1.0 if area >= 0 else -1.0
        inside = np.ones_like(xs, dtype=bool)
        for i in range(n):
            p, q = v[i], v[(i + 1) % n]
            cross = (q[0] - p[0]) * (ys - p[1]) - (q[1] - p[1]) * (xs - p[0])
            inside &= sgn * cross >= 0
    elif kind == "rect":
        x, y, w, h = geom
        inside = (xs >= x) & (xs <= x + w) & (ys >= y) & (ys <= y + h)
    else:
        raise SceneError(f"unknown primitive {kind!r}")
    mask[y0:y1, x0:x1] = inside
    return mask


def figure_mask_and_colors(fig, shape):
    """Draw one figure alone: returns (mask, rgb) with part colors."""
    mask = np.zeros(shape, dtype=bool)
    rgb = np.zeros(shape + (3,), dtype=np.uint8)
    for kind, geom, part in figure_primitives(fig):
        m = primitive_mask(kind, geom, shape)
        rgb[m] = fig.palette[PARTS.index(part)]
        mask |= m
    return mask, rgb


def background(seed, shape, grid=5):
    rng = np.random.default_rng(seed)
    H, W = shape
    coarse = rng.uniform(40, 215, size=(grid, grid, 3))
    ys = np.linspace(0, grid - 1, H)
    xs = np.linspace(0, grid - 1, W)
    y0 = np.minimum(np.floor(ys).astype(int), grid - 2)
    x0 = np.minimum(np.floor(xs).astype(int), grid - 2)
    ay = (ys - y0)[:, None, None]
    ax = (xs - x0)[None, :, None]
    img = (coarse[y0][:, x0] * (1 - ay) * (1 - ax) + coarse[y0 + 1][:, x0] * ay * (1 - ax)
           + coarse[y0][:, x0 + 1] * (1 - ay) * ax + coarse[y0 + 1][:, x0 + 1] * ay * ax)
    img += rng.normal(0, 6, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


@dataclass
class RenderResult:
    image: AnnotatedImage
    owner: np.ndarray          # (H, W) int: 0 background, k = k-th drawn entity
    order: list                # draw_order() of the scene
    target_visible_fraction: float


def _joint_pixel(pt):
    return int(np.floor(pt[1] + 0.5)), int(np.floor(pt[0] + 0.5))


def render(spec):
    """Render a scene, returning the annotated image and the owner buffer."""
    H, W = spec.size
    if H < 8 or W < 8:
        raise SceneError(f"image size {spec.size} too small")
    for idx in [-1] + list(range(len(spec.distractors))):
        fig = spec.figure(idx)
        if not fig.height > 0 or not fig.thickness > 0:
            raise SceneError("figure height and thickness must be positive")
    if len(spec.in_front) != len(spec.distractors):
        raise SceneError("in_front must give one flag per distractor")
    img = background(spec.background_seed, (H, W))
    owner = np.zeros((H, W), dtype=np.int64)
    order = spec.draw_order()
    target_mask = None
    joints = {}
    masks = {}
    for k, (kind, idx) in enumerate(order, start=1):
        if kind == "figure":
            fig = spec.figure(idx)
            mask, rgb = figure_mask_and_colors(fig, (H, W))
            img[mask] = rgb[mask]
            joints[idx] = figure_joints(fig)
            if idx == -1:
                target_mask = mask
        else:
            occ = spec.occluders[idx]
            if not (occ.w > 0 and occ.h > 0):
                raise SceneError(f"occluder {idx} has non-positive size")
            mask = primitive_mask("rect", (occ.x, occ.y, occ.w, occ.h), (H, W))
            img[mask] = np.asarray(occ.color, dtype=np.uint8)
        owner[mask] = k
        masks[(kind, idx)] = mask
    if not target_mask.any():
        raise SceneError("target figure is entirely outside the image")
    tid = order.index(("figure", -1)) + 1
    visible_fraction = float((owner[target_mask] == tid).mean())

    persons = []
    for idx in [-1] + list(range(len(spec.distractors))):
        eid = order.index(("figure", idx)) + 1
        kps = np.zeros((17, 3))
        for j, pt in enumerate(joints[idx]):
            r, c = _joint_pixel(pt)
            if not (0 <= r < H and 0 <= c < W):
                continue
            kps[j] = (pt[0], pt[1], VISIBLE if owner[r, c] == eid else OCCLUDED)
        ys, xs = np.nonzero(masks[("figure", idx)])
        if len(xs) == 0:
            continue
        bbox = np.array([xs.min(), ys.min(), xs.max() - xs.min() + 1, ys.max() - ys.min() + 1], float)
        persons.append(Person(bbox, kps))
    ann = AnnotatedImage(img, persons, 0)
    return RenderResult(ann, owner, order, visible_fraction)


def render_scene(spec):
    """Annotated image of a scene; the target is ``persons[0]``."""
    return render(spec).image


# -------------------------------------------------------------------- sampling

def sample_figure(rng, root, height, palette=None):
    lengths = {k: v * height * rng.uniform(0.92, 1.08) for k, v in DEFAULT_PROPORTIONS.items()}
    angles = {k: float(rng.uniform(*r)) for k, r in ANGLE_RANGES.items()}
    if palette is None:
        palette = rng.integers(0, 256, size=(len(PARTS), 3)).astype(np.uint8)
    return FigureSpec(tuple(map(float, root)), float(height), lengths, angles,
                      float(height * rng.uniform(0.06, 0.08)), palette,
                      int(rng.integers(0, 2**31)))


def similar_palette(rng, palette, jitter=20):
    return np.clip(palette.astype(np.int64) + rng.integers(-jitter, jitter + 1, palette.shape),
                   0, 255).astype(np.uint8)


@dataclass
class SceneConfig:
    size: tuple = (112, 112)
    height_range: tuple = (64.0, 80.0)
    distractor_probs: tuple = (0.3, 0.5, 0.2)       # P(0), P(1), P(2)
    occluder_probs: tuple = (0.2, 0.35, 0.3, 0.15)  # P(0..3)
    occluder_size: tuple = (0.14, 0.3)             # fraction of target height
    min_visible_fraction: float = 0.3


def sample_scene(rng, cfg=None):
    """Random scene whose target stays at least ``min_visible_fraction`` unoccluded."""
    cfg = cfg or SceneConfig()
    rng = np.random.default_rng(rng)
    H, W = cfg.size
    s = rng.uniform(*cfg.height_range)
    root = (W / 2 + rng.uniform(-0.08, 0.08) * W,
            rng.uniform(0.56 * s + 3, H - 0.48 * s - 3))
    target = sample_figure(rng, root, s)
    n_dis = int(rng.choice(len(cfg.distractor_probs), p=cfg.distractor_probs))
    distractors, in_front = [], []
    for _ in range(n_dis):
        side = rng.choice([-1.0, 1.0])
        droot = (root[0] + side * rng.uniform(0.25, 0.6) * s, root[1] + rng.uniform(-0.1, 0.1) * s)
        distractors.append(sample_figure(rng, droot, s * rng.uniform(0.85, 1.1),
                                         similar_palette(rng, target.palette)))
        in_front.append(bool(rng.random() < 0.5))
    joints = figure_joints(target)
    occluders = []
    for _ in range(int(rng.choice(len(cfg.occluder_probs), p=cfg.occluder_probs))):
        cx, cy = joints[rng.integers(0, 17)] + rng.normal(0, 0.04 * s, 2)
        w, h = rng.uniform(*cfg.occluder_size, size=2) * s
        occluders.append(Occluder(float(cx - w / 2), float(cy - h / 2), float(w), float(h),
                                  tuple(int(c) for c in rng.integers(0, 256, 3))))
    spec = SceneSpec(target, distractors, in_front, occluders, int(rng.integers(0, 2**31)), (H, W))
    # drop occluders, then front distractors, until enough of the target shows
    while render(spec).target_visible_fraction < cfg.min_visible_fraction:
        if spec.occluders:
            spec.occluders.pop()
        elif any(spec.in_front):
            i = max(i for i, f in enumerate(spec.in_front) if f)
            spec.in_front[i] = False
        else:
            break
    return spec


def generate_scenes(n, seed=0, cfg=None):
    """``n`` (SceneSpec, AnnotatedImage) pairs; scene i depends only on (seed, i)."""
    out = []
    for i in range(n):
        spec = sample_scene(np.random.default_rng([seed, i]), cfg)
        img = render_scene(spec)
        img.image_id = i + 1
        img.file_name = f"{i:06d}.png"
        for k, person in enumerate(img.persons):
            person.ann_id = (i + 1) * 10 + k
        out.append((spec, img))
    return out


def figure_cutout(fig, shape):
    """RGBA cutout of a single figure cropped to its mask, with keypoints in cutout coordinates."""
    mask, rgb = figure_mask_and_colors(fig, shape)
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        raise SceneError("figure does not intersect the canvas")
    x0, y0, x1, y1 = xs.min(), ys.min(), xs.max() + 1, ys.max() + 1
    rgba = np.zeros((y1 - y0, x1 - x0, 4), dtype=np.uint8)
    rgba[..., :3] = rgb[y0:y1, x0:x1]
    rgba[..., 3] = np.where(mask[y0:y1, x0:x1], 255, 0)
    kps = np.zeros((17, 3))
    kps[:, :2] = figure_joints(fig) - [x0, y0]
    kps[:, 2] = VISIBLE
    return rgba, kps


def generate_dataset(n, seed, out_dir, cfg=None, pool_size=200):
    """Write ``images/``, ``annotations.json`` and an RGBA instance ``pool/``."""
    from PIL import Image

    if n <= 0:
        raise ValueError(f"n must be positive, got {n}")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "pool").mkdir(parents=True, exist_ok=True)
    scenes = generate_scenes(n, seed, cfg)
    records = []
    for i, (spec, img) in enumerate(scenes):
        Image.fromarray(img.pixels).save(out / "images" / img.file_name)
        if i < pool_size:
            # larger canvas so limbs never clip
            rgba, kps = figure_cutout(spec.target, (spec.size[0] * 2, spec.size[1] * 2))
            Image.fromarray(rgba, mode="RGBA").save(out / "pool" / f"{i:06d}.png")
            (out / "pool" / f"{i:06d}.json").write_text(json.dumps({"keypoints": kps.reshape(-1).tolist()}))
        records.append(img)
    save_annotations(out / "annotations.json", records)
    return records
