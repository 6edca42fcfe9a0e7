"""Adaptive discriminative attention: instance-driven channel gating followed by
pixel self-attention.

Feature maps are ``(C, H, W)`` or batched ``(B, C, H, W)``; body centers are
``(x, y)`` feature-map coordinates, one per batch item.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .numerics import ShapeError, Tensor


@dataclass
class AdamParams:
    """Learnable tensors of the attention module.

    ``linear_w``/``linear_b`` form the gate transform applied to the
    instance feature; ``conv_q``/``conv_k``/``conv_v`` are the query, key and
    value convolutions; ``residual_gain`` scales the attention branch.
    """

    linear_w: Tensor
    linear_b: Tensor
    conv_q: Tensor
    conv_k: Tensor
    conv_v: Tensor
    residual_gain: Tensor
    gate_sigmoid: bool = False
    residual: bool = True

    @property
    def channels(self):
        return self.linear_w.shape[0]

    def named(self, prefix="adam."):
        return {prefix + k: getattr(self, k) for k in
                ("linear_w", "linear_b", "conv_q", "conv_k", "conv_v", "residual_gain")}


def init_adam_params(channels, rng=None, kernel=1, dtype=np.float64, gate_sigmoid=False,
                     residual=True):
    """Constant unit gate, random Q/K/V and zero residual gain, so the module starts as the identity.

    The gate weights start at zero (bias 1) rather than at the identity
    matrix: an identity map would multiply each channel by its own value at
    the body center and silence every channel that happens to be zero there.
    With ``gate_sigmoid`` the bias starts at 0, a uniform gate of one half.
    """
    rng = np.random.default_rng(rng)
    C = channels
    scale = 1.0 / np.sqrt(C * kernel * kernel)

    def t(a, name):
        return Tensor(np.asarray(a, dtype=dtype), requires_grad=True, name=name)

    return AdamParams(
        linear_w=t(np.zeros((C, C)), "linear_w"),
        linear_b=t(np.full(C, 0.0 if gate_sigmoid else 1.0), "linear_b"),
        conv_q=t(rng.standard_normal((C, C, kernel, kernel)) * scale, "conv_q"),
        conv_k=t(rng.standard_normal((C, C, kernel, kernel)) * scale, "conv_k"),
        conv_v=t(rng.standard_normal((C, C, kernel, kernel)) * scale, "conv_v"),
        residual_gain=t(np.zeros(1), "residual_gain"),
        gate_sigmoid=gate_sigmoid,
        residual=residual,
    )


def _batched(fm):
    fm = nx.as_tensor(fm)
    if fm.ndim == 3:
        return nx.reshape(fm, (1,) + fm.shape), True
    if fm.ndim != 4:
        raise ShapeError(f"feature map must be (C,H,W) or (B,C,H,W), got {fm.shape}")
    return fm, False


def _unbatch(t, single):
    return nx.reshape(t, t.shape[1:]) if single else t


def instance_feature(fm, center):
    """Bilinear sample of ``fm`` at the body center, clamped to the map."""
    fm, single = _batched(fm)
    pts = np.asarray(center, dtype=np.float64).reshape(fm.shape[0], 1, 2)
    feat = nx.grid_sample_bilinear(fm, pts)
    return nx.reshape(feat, (fm.shape[1],) if single else (fm.shape[0], fm.shape[1]))


def channel_gate(inst, p):
    inst = nx.as_tensor(inst)
    if inst.shape[-1] != p.channels:
        raise ShapeError(f"instance feature has {inst.shape[-1]} channels, module expects {p.channels}")
    row = nx.reshape(inst, (-1, p.channels))
    g = nx.matmul(row, nx.transpose(p.linear_w)) + p.linear_b
    if p.gate_sigmoid:
        g = nx.sigmoid(g)
    return g


def channel_attention(fm, inst, p):
    """Scale every channel of ``fm`` by the linear transform of the instance feature."""
    fm, single = _batched(fm)
    B, C = fm.shape[:2]
    if C != p.channels:
        raise ShapeError(f"feature map has {C} channels, module expects {p.channels}")
    g = channel_gate(inst, p)
    if g.shape[0] != B:
        raise ShapeError(f"{g.shape[0]} instance features for a batch of {B}")
    return _unbatch(fm * nx.reshape(g, (B, C, 1, 1)), single)


def attention_weights(fm, p):
    """Per-query attention distribution over key pixels, shape ``(B, N_key, N_query)``."""
    fm, _ = _batched(fm)
    B, C, H, W = fm.shape
    pad = p.conv_q.shape[-1] // 2
    q = nx.reshape(nx.conv2d(fm, p.conv_q, pad=pad), (B, C, H * W))
    k = nx.reshape(nx.conv2d(fm, p.conv_k, pad=pad), (B, C, H * W))
    logits = nx.matmul(nx.transpose(k, (0, 2, 1)), q)
    return nx.softmax(logits, axis=1)


def spatial_attention(fm, p):
    """Self-attention over pixels with a gated residual.

    logits[j, i] = <key_j, query_i>; the softmax runs over keys j so each
    query pixel i receives a convex combination of value vectors.
    """
    fm, single = _batched(fm)
    B, C, H, W = fm.shape
    pad = p.conv_v.shape[-1] // 2
    weights = attention_weights(fm, p)
    v = nx.reshape(nx.conv2d(fm, p.conv_v, pad=pad), (B, C, H * W))
    attended = nx.reshape(nx.matmul(v, weights), (B, C, H, W))
    out = fm + attended * p.residual_gain if p.residual else attended
    return _unbatch(out, single)


def adam_forward(fm, center, p):
    """Channel attention driven by the body-center feature, then spatial attention."""
    fm, single = _batched(fm)
    inst = instance_feature(fm, np.asarray(center, dtype=np.float64).reshape(fm.shape[0], 2))
    gated = channel_attention(fm, inst, p)
    return _unbatch(spatial_attention(gated, p), single)
