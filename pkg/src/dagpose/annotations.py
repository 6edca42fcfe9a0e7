"""Keypoint annotations and the COCO keypoint JSON subset.

Keypoints are ``(N, 3)`` float arrays of ``(x, y, v)`` with the extended
visibility convention: 0 unlabeled, 1 labeled but not visible, 2 labeled and
visible, 3 labeled and occluded.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .skeleton import COCO17_EDGES, COCO17_JOINTS

UNLABELED, NOT_VISIBLE, VISIBLE, OCCLUDED = 0, 1, 2, 3
VISIBILITY_VALUES = (UNLABELED, NOT_VISIBLE, VISIBLE, OCCLUDED)


class SchemaError(ValueError):
    """Annotation file does not follow the expected schema; message starts with the JSON path."""


@dataclass
class Person:
    bbox: np.ndarray       # (4,) x, y, w, h
    keypoints: np.ndarray  # (N, 3)
    ann_id: int = 0

    def copy(self):
        return Person(self.bbox.copy(), self.keypoints.copy(), self.ann_id)


@dataclass
class AnnotatedImage:
    pixels: np.ndarray | None
    persons: list = field(default_factory=list)
    target_index: int = 0
    image_id: int = 0
    file_name: str = ""
    width: int = 0
    height: int = 0

    def __post_init__(self):
        if self.pixels is not None:
            self.height, self.width = self.pixels.shape[:2]

    @property
    def target(self):
        return self.persons[self.target_index]

    def copy(self):
        return AnnotatedImage(None if self.pixels is None else self.pixels.copy(),
                              [p.copy() for p in self.persons], self.target_index,
                              self.image_id, self.file_name, self.width, self.height)


def validate_keypoints(kps, num_joints=None):
    kps = np.asarray(kps, dtype=np.float64)
    if kps.ndim != 2 or kps.shape[1] != 3:
        raise SchemaError(f"keypoints must be (N, 3), got {kps.shape}")
    if num_joints is not None and kps.shape[0] != num_joints:
        raise SchemaError(f"expected {num_joints} joints, got {kps.shape[0]}")
    if not np.isin(kps[:, 2], VISIBILITY_VALUES).all():
        raise SchemaError(f"visibility flags must be in {VISIBILITY_VALUES}")
    return kps


def labeled(kps):
    return kps[:, 2] > 0


def clamp_bbox(bbox, width, height):
    x, y, w, h = (float(v) for v in bbox)
    x0, y0 = min(max(x, 0.0), width), min(max(y, 0.0), height)
    x1, y1 = min(max(x + w, 0.0), width), min(max(y + h, 0.0), height)
    return np.array([x0, y0, x1 - x0, y1 - y0])


# ------------------------------------------------------------------ COCO JSON

def _require(obj, key, path, kind):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"{path}.{key}: missing required field")
    val = obj[key]
    if kind is not None and not isinstance(val, kind):
        raise SchemaError(f"{path}.{key}: expected {getattr(kind, '__name__', kind)}, got {type(val).__name__}")
    return val


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def parse_coco(doc, num_joints=None):
    """Build :class:`AnnotatedImage` metadata records (no pixels) from a COCO dict."""
    if not isinstance(doc, dict):
        raise SchemaError("$: top level must be an object")
    images = _require(doc, "images", "$", list)
    anns = _require(doc, "annotations", "$", list)
    cats = doc.get("categories", [])
    if num_joints is None:
        for cat in cats:
            if isinstance(cat, dict) and isinstance(cat.get("keypoints"), list):
                num_joints = len(cat["keypoints"])
                break
    records = {}
    target_ids = {}
    order = []
    for i, img in enumerate(images):
        path = f"$.images[{i}]"
        iid = _require(img, "id", path, int)
        rec = AnnotatedImage(None, [], 0, iid, str(img.get("file_name", "")),
                             int(_require(img, "width", path, int)),
                             int(_require(img, "height", path, int)))
        target_ids[iid] = img.get("target_id")
        records[iid] = rec
        order.append(iid)
    for i, ann in enumerate(anns):
        path = f"$.annotations[{i}]"
        iid = _require(ann, "image_id", path, int)
        if iid not in records:
            raise SchemaError(f"{path}.image_id: unknown image id {iid}")
        kp = _require(ann, "keypoints", path, list)
        if len(kp) % 3 != 0 or (num_joints is not None and len(kp) != 3 * num_joints):
            want = f"3N with N={num_joints}" if num_joints is not None else "a multiple of 3"
            raise SchemaError(f"{path}.keypoints: length {len(kp)} is not {want}")
        for j, v in enumerate(kp):
            if not _is_number(v):
                raise SchemaError(f"{path}.keypoints[{j}]: not a finite number")
        arr = np.asarray(kp, dtype=np.float64).reshape(-1, 3)
        for j, v in enumerate(arr[:, 2]):
            if v not in VISIBILITY_VALUES:
                raise SchemaError(f"{path}.keypoints[{3 * j + 2}]: visibility {v} not in {VISIBILITY_VALUES}")
        bbox = _require(ann, "bbox", path, list)
        if len(bbox) != 4 or not all(_is_number(v) for v in bbox):
            raise SchemaError(f"{path}.bbox: expected 4 numbers")
        cat = ann.get("category_id", 1)
        if cat != 1:
            raise SchemaError(f"{path}.category_id: only the person category (1) is supported")
        records[iid].persons.append(Person(np.asarray(bbox, dtype=np.float64), arr,
                                           int(ann.get("id", i + 1))))
    out = []
    for iid in order:
        rec = records[iid]
        target_id = target_ids[iid]
        if target_id is not None:
            ids = [p.ann_id for p in rec.persons]
            if target_id not in ids:
                raise SchemaError(f"$.images[{order.index(iid)}].target_id: no annotation with id {target_id}")
            rec.target_index = ids.index(target_id)
        out.append(rec)
    return out


def to_coco(records, joint_names=COCO17_JOINTS, edges=COCO17_EDGES):
    images, anns = [], []
    next_id = 1
    for rec in records:
        entry = {"id": int(rec.image_id), "file_name": rec.file_name,
                 "width": int(rec.width), "height": int(rec.height)}
        ids = []
        for person in rec.persons:
            aid = int(person.ann_id) if person.ann_id else next_id
            next_id = max(next_id, aid) + 1
            ids.append(aid)
            kps = []
            for x, y, v in person.keypoints:
                kps.extend([float(x), float(y), int(v)])
            anns.append({"id": aid, "image_id": int(rec.image_id), "category_id": 1,
                         "bbox": [float(v) for v in person.bbox], "keypoints": kps,
                         "num_keypoints": int(np.count_nonzero(person.keypoints[:, 2] > 0)),
                         "iscrowd": 0})
        if rec.persons:
            entry["target_id"] = ids[rec.target_index]
        images.append(entry)
    categories = [{"id": 1, "name": "person", "supercategory": "person",
                   "keypoints": list(joint_names),
                   "skeleton": [[a + 1, b + 1] for a, b in edges]}]
    return {"images": images, "annotations": anns, "categories": categories}


def load_annotations(path, num_joints=None):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"$: malformed JSON ({exc})") from exc
    return parse_coco(doc, num_joints)


def save_annotations(path, records, joint_names=COCO17_JOINTS, edges=COCO17_EDGES):
    Path(path).write_text(json.dumps(to_coco(records, joint_names, edges)))


def load_image(path):
    from PIL import Image
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def load_dataset(root, with_pixels=True):
    """Read ``root/annotations.json`` and, optionally, ``root/images/*``."""
    root = Path(root)
    records = load_annotations(root / "annotations.json")
    if with_pixels:
        for rec in records:
            rec.pixels = load_image(root / "images" / rec.file_name)
            if rec.pixels.shape[:2] != (rec.height, rec.width):
                raise SchemaError(f"{rec.file_name}: image size {rec.pixels.shape[:2]} does not match "
                                  f"annotation ({rec.height}, {rec.width})")
    return records
