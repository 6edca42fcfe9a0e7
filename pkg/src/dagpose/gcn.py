"""Feature-guided multi-hop graph refinement of an initial pose.

Node features are ``(D, N)`` matrices (or ``(B, D, N)`` batches), one column
per joint. A layer mixes a self transform and a hop-k neighbour transform for
every hop and modulates each hop elementwise before summing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .numerics import ShapeError, Tensor


@dataclass
class GcnLayerParams:
    w0: Tensor    # (Dout, Din) self transform
    w1: Tensor    # (Dout, Din) neighbour transform
    mods: Tensor  # (K, Dout, N) per-hop modulation

    @property
    def num_hops(self):
        return self.mods.shape[0]

    def named(self, prefix):
        return {prefix + "w0": self.w0, prefix + "w1": self.w1, prefix + "mods": self.mods}


@dataclass
class RefinerParams:
    proj_w: Tensor        # (D, C + 2)
    proj_b: Tensor        # (D, 1)
    feature_gate: Tensor  # (1,) scale on sampled joint features
    layers: list = field(default_factory=list)
    head_w: Tensor = None  # (2, D)
    head_b: Tensor = None  # (2, 1)

    def named(self, prefix="gcn."):
        out = {prefix + "proj_w": self.proj_w, prefix + "proj_b": self.proj_b,
               prefix + "feature_gate": self.feature_gate,
               prefix + "head_w": self.head_w, prefix + "head_b": self.head_b}
        for i, layer in enumerate(self.layers):
            out.update(layer.named(f"{prefix}layer{i}."))
        return out


def _param(arr, dtype, name):
    return Tensor(np.asarray(arr, dtype=dtype), requires_grad=True, name=name)


def init_gcn_layer(d_in, d_out, num_joints, num_hops, rng=None, dtype=np.float64):
    rng = np.random.default_rng(rng)
    scale = np.sqrt(2.0 / d_in)
    return GcnLayerParams(
        w0=_param(rng.standard_normal((d_out, d_in)) * scale * 0.5, dtype, "w0"),
        w1=_param(rng.standard_normal((d_out, d_in)) * scale * 0.5, dtype, "w1"),
        mods=_param(np.full((num_hops, d_out, num_joints), 1.0 / num_hops), dtype, "mods"),
    )


def init_refiner(channels, num_joints, num_hops, hidden=64, depth=3, rng=None,
                 dtype=np.float64, zero_head=True):
    rng = np.random.default_rng(rng)
    d_in = channels + 2
    layers = [init_gcn_layer(hidden, hidden, num_joints, num_hops, rng, dtype) for _ in range(depth)]
    head = np.zeros((2, hidden)) if zero_head else rng.standard_normal((2, hidden)) * 0.01
    return RefinerParams(
        proj_w=_param(rng.standard_normal((hidden, d_in)) * np.sqrt(2.0 / d_in), dtype, "proj_w"),
        proj_b=_param(np.zeros((hidden, 1)), dtype, "proj_b"),
        feature_gate=_param(np.ones(1), dtype, "feature_gate"),
        layers=layers,
        head_w=_param(head, dtype, "head_w"),
        head_b=_param(np.zeros((2, 1)), dtype, "head_b"),
    )


def gcn_layer(M, p, hops, activation="relu", trace=None):
    """``act(sum_k mods[k] * (W0 M + W1 M A_k))``.

    ``hops`` is the list of normalized hop matrices; the modulation is an
    elementwise product over the ``(Dout, N)`` output.
    """
    M = nx.as_tensor(M)
    if len(hops) != p.num_hops:
        raise ShapeError(f"layer has {p.num_hops} hop modulations but {len(hops)} hop matrices were given")
    N = M.shape[-1]
    if p.mods.shape[-1] != N:
        raise ShapeError(f"layer is built for {p.mods.shape[-1]} joints, input has {N}")
    A = Tensor(np.stack([np.asarray(h) for h in hops]).astype(M.dtype, copy=False))
    self_part = nx.matmul(p.w0, M)              # (..., Dout, N)
    neigh = nx.matmul(p.w1, M)                  # (..., Dout, N)
    lead = neigh.shape[:-2]
    neigh = nx.reshape(neigh, lead + (1,) + neigh.shape[-2:])
    per_hop = nx.matmul(neigh, A)               # (..., K, Dout, N)
    self_b = nx.reshape(self_part, lead + (1,) + self_part.shape[-2:])
    out = nx.sum((per_hop + self_b) * p.mods, axis=-3)
    if trace is not None:
        trace.append(out.data)
    if activation == "relu":
        return nx.relu(out)
    if activation in (None, "identity"):
        return out
    raise ValueError(f"unknown activation {activation!r}")


def build_node_features(initial_pose, fm, crop_size, gate=None, coord_origin=(0.0, 0.0)):
    """Stack sampled joint features over normalized joint coordinates.

    ``initial_pose`` is ``(N, 2)`` or ``(B, N, 2)`` crop-pixel (x, y)
    coordinates; ``fm`` the matching ``(C, h, w)`` / ``(B, C, h, w)`` feature
    map; ``crop_size`` is ``(width, height)``. Returns ``(C + 2, N)`` or
    ``(B, C + 2, N)``. Coordinates are constants for the tape.
    """
    fm = nx.as_tensor(fm)
    pose = np.asarray(initial_pose, dtype=np.float64)
    single = fm.ndim == 3
    if single:
        fm = nx.reshape(fm, (1,) + fm.shape)
        pose = pose.reshape(1, -1, 2)
    B, C, h, w = fm.shape
    cw, ch = float(crop_size[0]), float(crop_size[1])
    stride = np.array([cw / w, ch / h])
    sampled = nx.grid_sample_bilinear(fm, pose / stride)        # (B, N, C)
    if gate is not None:
        sampled = sampled * gate
    feats = nx.transpose(sampled, (0, 2, 1))                    # (B, C, N)
    coords = (pose - np.asarray(coord_origin, dtype=np.float64)) / np.array([cw, ch])
    coords = Tensor(coords.transpose(0, 2, 1).astype(fm.dtype, copy=False))
    out = nx.concat([feats, coords], axis=1)
    return nx.reshape(out, out.shape[1:]) if single else out


def predict_offsets(node_features, p, hops, trace=None):
    """Run the layer stack on node features; returns normalized (x, y) offsets ``(..., N, 2)``.

    ``trace``, if a list, collects every pre-activation array.
    """
    pre = nx.matmul(p.proj_w, node_features) + p.proj_b
    if trace is not None:
        trace.append(pre.data)
    h = nx.relu(pre)
    for layer in p.layers:
        h = gcn_layer(h, layer, hops, trace=trace)
    out = nx.matmul(p.head_w, h) + p.head_b                     # (..., 2, N)
    axes = (1, 0) if out.ndim == 2 else (0, 2, 1)
    return nx.transpose(out, axes)


def refine_pose(initial_pose, fm, p, graph, crop_size, coord_origin=(0.0, 0.0), trace=None):
    """Refined (x, y) coordinates = initial pose + predicted offsets in crop pixels.

    Returns a tensor shaped like ``initial_pose``; visibility is handled by
    the caller and is never altered here.
    """
    pose = np.asarray(initial_pose, dtype=np.float64)[..., :2]
    feats = build_node_features(pose, fm, crop_size, p.feature_gate, coord_origin)
    offsets = predict_offsets(feats, p, graph.hop_matrices, trace)
    scale = np.array([float(crop_size[0]), float(crop_size[1])], dtype=offsets.dtype)
    return Tensor(pose.astype(offsets.dtype, copy=False)) + offsets * scale
