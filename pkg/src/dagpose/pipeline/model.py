"""Small CNN pose model with optional attention and graph refinement."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import numerics as nx
from ..attention import adam_forward, init_adam_params
from ..gcn import init_refiner, refine_pose
from ..numerics import Tensor
from ..skeleton import coco17_skeleton, skeleton_by_name
from .heatmaps import STRIDE, decode_heatmaps

DTYPES = {"float32": np.float32, "float64": np.float64}


@dataclass
class ModelConfig:
    crop_width: int = 48
    crop_height: int = 64
    channels: tuple = (16, 32, 32, 32)
    strides: tuple = (2, 2, 1, 1)
    use_adam: bool = True
    use_gcn: bool = True
    gcn_hidden: int = 64
    gcn_depth: int = 3
    num_hops: int = 3
    skeleton: str = "coco17"
    dtype: str = "float32"

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.strides = tuple(int(s) for s in self.strides)
        if len(self.channels) != len(self.strides):
            raise ValueError("channels and strides must have the same length")
        if int(np.prod(self.strides)) != STRIDE:
            raise ValueError(f"backbone strides must multiply to {STRIDE}, got {self.strides}")
        if self.dtype not in DTYPES:
            raise ValueError(f"dtype must be one of {sorted(DTYPES)}, got {self.dtype!r}")

    @property
    def crop_size(self):
        return (self.crop_width, self.crop_height)

    def to_dict(self):
        d = asdict(self)
        d["channels"], d["strides"] = list(self.channels), list(self.strides)
        return d


def init_backbone(channels, strides, rng, dtype, in_channels=3):
    """He-initialized [conv3x3(stride) + ReLU + conv3x3 + ReLU] blocks."""
    params = {}
    c_in = in_channels
    for b, c in enumerate(channels):
        for k, (ci, co) in enumerate(((c_in, c), (c, c))):
            w = rng.standard_normal((co, ci, 3, 3)) * np.sqrt(2.0 / (ci * 9))
            params[f"backbone.{b}.{k}.w"] = Tensor(w.astype(dtype), requires_grad=True, name=f"backbone.{b}.{k}.w")
            params[f"backbone.{b}.{k}.b"] = Tensor(np.zeros(co, dtype), requires_grad=True, name=f"backbone.{b}.{k}.b")
        c_in = c
    return params


def backbone_forward(x, params, strides, trace=None):
    """Feature map at 1/prod(strides) resolution; ``trace`` collects ReLU pre-activations."""
    h = x
    for b, s in enumerate(strides):
        for k, stride in ((0, s), (1, 1)):
            pre = nx.conv2d(h, params[f"backbone.{b}.{k}.w"], params[f"backbone.{b}.{k}.b"], stride=stride, pad=1)
            if trace is not None:
                trace.append(pre.data)
            h = nx.relu(pre)
    return h


HEAD_INIT_STD = 1e-3


def _head(rng, c_in, joints, dtype, name):
    # near-zero start: heatmap targets are mostly zero, so a unit-scale head
    # spends its first epochs just learning to be quiet
    w = rng.standard_normal((joints, c_in, 1, 1)) * HEAD_INIT_STD
    return {f"{name}.w": Tensor(w.astype(dtype), requires_grad=True, name=f"{name}.w"),
            f"{name}.b": Tensor(np.zeros(joints, dtype), requires_grad=True, name=f"{name}.b")}


class PoseModel:
    """Parameters plus forward pass.

    Disabled components own no parameters, so a model built with both
    toggles off is exactly the plain backbone + target head network.
    """

    def __init__(self, cfg: ModelConfig, seed=0):
        self.cfg = cfg
        self.graph = coco17_skeleton(cfg.num_hops) if cfg.skeleton == "coco17" else skeleton_by_name(cfg.skeleton, cfg.num_hops)
        dtype = DTYPES[cfg.dtype]
        rng = np.random.default_rng(seed)
        J, C = self.graph.joint_count, cfg.channels[-1]
        self.params = init_backbone(cfg.channels, cfg.strides, rng, dtype)
        self.adam = None
        self.refiner = None
        if cfg.use_adam:
            self.params.update(_head(rng, C, J, dtype, "head_multi"))
            self.adam = init_adam_params(C, rng, dtype=dtype)
            self.params.update(self.adam.named("adam."))
        self.params.update(_head(rng, C, J, dtype, "head_target"))
        if cfg.use_gcn:
            self.refiner = init_refiner(C, J, cfg.num_hops, hidden=cfg.gcn_hidden, depth=cfg.gcn_depth,
                                        rng=rng, dtype=dtype)
            self.params.update(self.refiner.named("gcn."))

    @property
    def dtype(self):
        return DTYPES[self.cfg.dtype]

    @property
    def num_joints(self):
        return self.graph.joint_count

    def parameter_count(self):
        return int(sum(p.size for p in self.params.values()))

    def forward(self, crops, centers):
        """Run the network on normalized crops.

        ``crops`` is ``(B, 3, H, W)``; ``centers`` the ``(B, 2)`` body centers
        in crop pixels. Returns a dict with ``features``, ``hm_multi`` (None
        without attention), ``hm_target``, ``initial`` (decoded target pose,
        crop pixels, constant) and ``refined`` (None without refinement).
        """
        p = self.params
        x = Tensor(np.asarray(crops, dtype=self.dtype))
        feats = backbone_forward(x, p, self.cfg.strides)
        hm_multi = None
        if self.cfg.use_adam:
            hm_multi = nx.conv2d(feats, p["head_multi.w"], p["head_multi.b"])
            feats = adam_forward(feats, np.asarray(centers, dtype=np.float64) / STRIDE, self.adam)
        hm_target = nx.conv2d(feats, p["head_target.w"], p["head_target.b"])
        initial = decode_heatmaps(hm_target.data)[0][..., :2]
        refined = None
        if self.cfg.use_gcn:
            refined = refine_pose(initial, feats, self.refiner, self.graph, self.cfg.crop_size)
        return {"features": feats, "hm_multi": hm_multi, "hm_target": hm_target,
                "initial": initial, "refined": refined}

    def predict_pose(self, crops, centers):
        """Final (B, J, 2) crop-pixel pose: refined when refinement is on."""
        out = self.forward(crops, centers)
        return out["refined"].data if out["refined"] is not None else out["initial"]

    def state(self):
        return {k: v.data for k, v in self.params.items()}
