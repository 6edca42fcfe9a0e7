"""Finite-difference gradient suite over every differentiable building block.

Each case draws ``instances`` random 64-bit problems and compares tape
gradients against central differences (h=1e-3, relative error < 1e-4).
Feature maps entering attention are drawn at half unit scale, which keeps
the unscaled dot-product logits, and with them the O(h^2) truncation error
of the central difference, moderate. Functions containing ReLU or absolute
value are sampled away from their kinks: an instance is redrawn while any
kinked input lies within a small margin of zero, a rule that looks only at
the forward pass.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .attention import adam_forward, channel_attention, init_adam_params, spatial_attention
from .gcn import GcnLayerParams, gcn_layer, init_refiner, refine_pose
from .numerics import Tensor, grad_check
from .pipeline.losses import total_loss
from .pipeline.model import backbone_forward, init_backbone
from .skeleton import coco17_skeleton

H_STEP = 1e-3
TOLERANCE = 1e-4
MARGIN = 5e-3


@dataclass
class CaseResult:
    name: str
    errors: list     # worst relative error per instance
    seconds: float

    @property
    def passed(self):
        return all(e < TOLERANCE for e in self.errors)


def _t(arr, name):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True, name=name)


def _check(f, params, seed=0):
    return grad_check(f, params, h=H_STEP, tol=TOLERANCE, seed=seed).worst


def case_matmul(seed):
    rng = np.random.default_rng(seed)
    a, b = _t(rng.standard_normal((3, 4)), "a"), _t(rng.standard_normal((2, 4, 5)), "b")
    probe = rng.standard_normal((2, 3, 5))
    return _check(lambda: nx.sum(nx.matmul(a, b) * probe), [a, b])


def case_conv2d(seed):
    rng = np.random.default_rng(seed)
    x = _t(rng.standard_normal((2, 3, 6, 5)), "x")
    w = _t(rng.standard_normal((4, 3, 3, 3)), "w")
    b = _t(rng.standard_normal(4), "b")
    stride = 1 + seed % 2
    probe = rng.standard_normal(nx.conv2d(x.data, w.data, stride=stride, pad=1).shape)
    return _check(lambda: nx.sum(nx.conv2d(x, w, b, stride=stride, pad=1) * probe), [x, w, b])


def case_softmax(seed):
    rng = np.random.default_rng(seed)
    x = _t(rng.standard_normal((3, 6)) * 2, "x")
    probe = rng.standard_normal((3, 6))
    return _check(lambda: nx.sum(nx.softmax(x, axis=seed % 2) * probe), [x])


def case_grid_sample(seed):
    rng = np.random.default_rng(seed)
    f = _t(rng.standard_normal((2, 3, 5, 6)), "f")
    pts = rng.uniform(-0.5, 5.5, size=(2, 7, 2))
    probe = rng.standard_normal((2, 7, 3))
    return _check(lambda: nx.sum(nx.grid_sample_bilinear(f, pts) * probe), [f])


def _random_adam(C, rng):
    p = init_adam_params(C, rng)
    p.linear_w.data = rng.standard_normal((C, C)) * 0.5
    p.linear_b.data = rng.standard_normal(C) * 0.5
    p.residual_gain.data = rng.uniform(0.3, 1.0, size=1)
    return p


def case_channel_attention(seed):
    rng = np.random.default_rng(seed)
    p = _random_adam(3, rng)
    fm, inst = _t(rng.standard_normal((3, 4, 4)), "fm"), _t(rng.standard_normal(3), "inst")
    probe = rng.standard_normal((3, 4, 4))
    return _check(lambda: nx.sum(channel_attention(fm, inst, p) * probe),
                  {"fm": fm, "inst": inst, "linear_w": p.linear_w, "linear_b": p.linear_b})


def case_spatial_attention(seed):
    rng = np.random.default_rng(seed)
    p = _random_adam(3, rng)
    fm = _t(rng.standard_normal((3, 3, 4)) * 0.5, "fm")
    probe = rng.standard_normal((3, 3, 4))
    params = {"fm": fm, "conv_q": p.conv_q, "conv_k": p.conv_k, "conv_v": p.conv_v,
              "residual_gain": p.residual_gain}
    return _check(lambda: nx.sum(spatial_attention(fm, p) * probe), params)


def case_adam_forward(seed):
    rng = np.random.default_rng(seed)
    p = _random_adam(3, rng)
    fm = _t(rng.standard_normal((2, 3, 3, 4)) * 0.5, "fm")
    centers = rng.uniform(0.2, 2.8, size=(2, 2))
    probe = rng.standard_normal((2, 3, 3, 4))
    return _check(lambda: nx.sum(adam_forward(fm, centers, p) * probe), dict(p.named(""), fm=fm))


def case_gcn_layer(seed):
    g = coco17_skeleton()
    for attempt in range(200):
        rng = np.random.default_rng([seed, attempt])
        M = _t(rng.standard_normal((4, 17)), "M")
        p = GcnLayerParams(_t(rng.standard_normal((3, 4)), "w0"), _t(rng.standard_normal((3, 4)), "w1"),
                           _t(rng.standard_normal((3, 3, 17)), "mods"))
        trace = []
        gcn_layer(M.data, p, g.hop_matrices, trace=trace)
        if np.abs(trace[0]).min() > MARGIN:
            break
    else:
        raise RuntimeError(f"no kink-free instance for seed {seed}")
    probe = rng.standard_normal((3, 17))
    return _check(lambda: nx.sum(gcn_layer(M, p, g.hop_matrices) * probe),
                  {"M": M, "w0": p.w0, "w1": p.w1, "mods": p.mods})


def case_refiner(seed):
    g = coco17_skeleton()
    for attempt in range(200):
        rng = np.random.default_rng([seed, attempt])
        p = init_refiner(3, 17, 3, hidden=4, depth=2, rng=rng, zero_head=False)
        p.head_w.data = rng.standard_normal(p.head_w.shape) * 0.3
        for layer in p.layers:
            layer.mods.data = rng.standard_normal(layer.mods.shape)
        pose = rng.uniform(2, 46, size=(17, 2))
        fm = _t(rng.standard_normal((3, 16, 12)), "fm")
        trace = []
        refine_pose(pose, fm, p, g, (48, 64), trace=trace)
        if min(np.abs(t).min() for t in trace) > MARGIN:
            break
    else:
        raise RuntimeError(f"no kink-free instance for seed {seed}")
    probe = rng.standard_normal((17, 2))
    return _check(lambda: nx.sum(refine_pose(pose, fm, p, g, (48, 64)) * probe), dict(p.named(""), fm=fm))


def case_total_loss(seed):
    rng = np.random.default_rng(seed)
    B, J, h, w = 2, 17, 4, 3
    pm, pt = _t(rng.standard_normal((B, J, h, w)), "pred_multi"), _t(rng.standard_normal((B, J, h, w)), "pred_target")
    gm, gt = rng.random((B, J, h, w)), rng.random((B, J, h, w))
    gt_pose = rng.uniform(0, 40, size=(B, J, 2))
    # keep every |refined - gt| clear of the absolute-value kink
    offset = rng.uniform(0.5, 3.0, size=(B, J, 2)) * rng.choice([-1.0, 1.0], size=(B, J, 2))
    refined = _t(gt_pose + offset, "refined")
    vis = rng.integers(0, 4, size=(B, J))
    lam = float(rng.uniform(0.1, 2.0))

    def f():
        return total_loss(pm, pt, gm, gt, refined, gt_pose, vis, (12, 16), lam)[0]
    return _check(f, [pm, pt, refined])


def case_backbone(seed):
    strides = (2, 2)
    for attempt in range(200):
        rng = np.random.default_rng([seed, attempt])
        params = init_backbone((3, 3), strides, rng, np.float64, in_channels=2)
        for p in params.values():
            p.data = p.data + rng.standard_normal(p.shape) * 0.1
        x = _t(rng.standard_normal((1, 2, 8, 8)), "x")
        trace = []
        backbone_forward(x.data, params, strides, trace=trace)
        if min(np.abs(t).min() for t in trace) > 4 * MARGIN:
            break
    else:
        raise RuntimeError(f"no kink-free instance for seed {seed}")
    probe = rng.standard_normal((1, 3, 2, 2))
    return _check(lambda: nx.sum(backbone_forward(x, params, strides) * probe), dict(params, x=x))


CASES = {
    "matmul": case_matmul,
    "conv2d": case_conv2d,
    "softmax": case_softmax,
    "grid_sample": case_grid_sample,
    "channel_attention": case_channel_attention,
    "spatial_attention": case_spatial_attention,
    "adam_forward": case_adam_forward,
    "gcn_layer": case_gcn_layer,
    "refiner": case_refiner,
    "total_loss": case_total_loss,
    "backbone_2block": case_backbone,
}


def run_suite(instances=10, cases=None, report=None):
    """Run every case on ``instances`` seeds; ``report`` receives each :class:`CaseResult`."""
    results = []
    for name in cases or CASES:
        start = time.perf_counter()
        errors = [float(CASES[name](seed)) for seed in range(instances)]
        res = CaseResult(name, errors, time.perf_counter() - start)
        results.append(res)
        if report:
            report(res)
    return results
