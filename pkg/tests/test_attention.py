import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dagpose import numerics as nx
from dagpose.attention import (
    adam_forward,
    attention_weights,
    channel_attention,
    init_adam_params,
    instance_feature,
    spatial_attention,
)
from dagpose.numerics import Tensor, grad_check

from oracles import bilinear_point, dense_attention


def randomized(C, seed, gain=0.7):
    rng = np.random.default_rng(seed)
    p = init_adam_params(C, rng)
    p.linear_w.data = rng.standard_normal((C, C)) * 0.5
    p.linear_b.data = rng.standard_normal(C) * 0.5
    p.residual_gain.data = np.array([gain])
    return p


def test_instance_feature_constant_and_lattice():
    fm = np.full((4, 5, 6), 7.0)
    np.testing.assert_array_equal(instance_feature(fm, (2.3, 1.7)).data, [7.0] * 4)
    fm = np.random.default_rng(0).standard_normal((3, 5, 6))
    np.testing.assert_array_equal(instance_feature(fm, (4.0, 2.0)).data, fm[:, 2, 4])
    np.testing.assert_allclose(instance_feature(fm, (1.3, 3.6)).data, bilinear_point(fm, 1.3, 3.6),
                               atol=1e-14)


def test_channel_attention_identity_gate():
    fm = np.random.default_rng(1).standard_normal((3, 4, 4))
    p = init_adam_params(3)
    np.testing.assert_array_equal(channel_attention(fm, np.ones(3), p).data, fm)


def test_channel_attention_explicit_gate():
    fm = np.random.default_rng(2).standard_normal((2, 3, 3))
    p = init_adam_params(2)
    p.linear_w.data = np.eye(2)
    p.linear_b.data = np.zeros(2)
    out = channel_attention(fm, np.array([2.0, 0.0]), p).data
    np.testing.assert_array_equal(out[0], 2 * fm[0])
    np.testing.assert_array_equal(out[1], 0 * fm[1])


def test_channel_attention_broadcast_oracle():
    rng = np.random.default_rng(3)
    fm, inst = rng.standard_normal((4, 3, 5)), rng.standard_normal(4)
    p = randomized(4, 3)
    gate = p.linear_w.data @ inst + p.linear_b.data
    expected = np.stack([fm[c] * gate[c] for c in range(4)])
    np.testing.assert_allclose(channel_attention(fm, inst, p).data, expected, atol=1e-12, rtol=0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-3, 3))
def test_channel_attention_linear_in_fm(seed, a):
    rng = np.random.default_rng(seed)
    fm, inst = rng.standard_normal((3, 4, 4)), rng.standard_normal(3)
    p = randomized(3, seed)
    np.testing.assert_allclose(channel_attention(a * fm, inst, p).data,
                               a * channel_attention(fm, inst, p).data, atol=1e-12)


def test_spatial_attention_single_pixel():
    rng = np.random.default_rng(4)
    fm = rng.standard_normal((3, 1, 1))
    p = randomized(3, 4, gain=0.3)
    v = p.conv_v.data[:, :, 0, 0] @ fm[:, 0, 0]
    np.testing.assert_allclose(spatial_attention(fm, p).data[:, 0, 0], fm[:, 0, 0] + 0.3 * v,
                               atol=1e-14)


def test_spatial_attention_zero_gain():
    fm = np.random.default_rng(5).standard_normal((3, 4, 4))
    p = randomized(3, 5, gain=0.0)
    np.testing.assert_array_equal(spatial_attention(fm, p).data, fm)


def test_spatial_attention_dense_oracle():
    rng = np.random.default_rng(6)
    fm = rng.standard_normal((2, 3, 3))
    p = randomized(2, 6)
    ref = dense_attention(fm, p.conv_q.data[:, :, 0, 0], p.conv_k.data[:, :, 0, 0],
                          p.conv_v.data[:, :, 0, 0], 0.7)
    np.testing.assert_allclose(spatial_attention(fm, p).data, ref, atol=1e-12, rtol=0)


def test_attention_weights_are_distributions_per_query():
    fm = np.random.default_rng(7).standard_normal((2, 4, 3, 5))
    w = attention_weights(fm, randomized(4, 7)).data
    assert w.shape == (2, 15, 15)
    assert np.all(w > 0)
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-9)


def test_adam_full_identity():
    fm = np.random.default_rng(8).standard_normal((3, 4, 5))
    p = init_adam_params(3)
    p.linear_w.data = np.zeros((3, 3))
    p.linear_b.data = np.ones(3)  # gate == 1 whatever the instance feature
    np.testing.assert_allclose(adam_forward(fm, (2.0, 1.5), p).data, fm, atol=1e-12, rtol=0)


def test_adam_default_init_is_identity():
    fm = np.random.default_rng(9).standard_normal((3, 4, 5))
    p = init_adam_params(3, rng=0)
    np.testing.assert_allclose(adam_forward(fm, (2.0, 2.0), p).data, fm, atol=1e-12, rtol=0)


def test_adam_permutation_equivariance():
    rng = np.random.default_rng(10)
    C, H, W = 3, 3, 4
    fm = rng.standard_normal((C, H, W))
    p = randomized(C, 10)
    center = (1.0, 2.0)
    perm = rng.permutation(H * W)
    permuted = fm.reshape(C, -1)[:, perm].reshape(C, H, W)
    # the center pixel's new location under the permutation
    src = int(center[1]) * W + int(center[0])
    dst = int(np.flatnonzero(perm == src)[0])
    new_center = (dst % W, dst // W)
    out = adam_forward(fm, center, p).data.reshape(C, -1)
    out_perm = adam_forward(permuted, new_center, p).data.reshape(C, -1)
    np.testing.assert_allclose(out_perm, out[:, perm], atol=1e-12)


def test_adam_output_shape_batched():
    fm = np.random.default_rng(11).standard_normal((2, 3, 4, 5))
    out = adam_forward(fm, np.array([[1.0, 1.0], [2.5, 3.0]]), randomized(3, 11))
    assert out.shape == fm.shape


def test_channel_mismatch():
    with pytest.raises(nx.ShapeError):
        channel_attention(np.zeros((3, 2, 2)), np.ones(4), init_adam_params(3))


def test_sigmoid_gate_flag():
    fm = np.ones((2, 2, 2))
    p = init_adam_params(2, gate_sigmoid=True)
    np.testing.assert_allclose(channel_attention(fm, np.zeros(2), p).data, 0.5 * fm)


def test_no_residual_flag():
    fm = np.random.default_rng(12).standard_normal((2, 1, 1))
    p = randomized(2, 12)
    p.residual = False
    v = p.conv_v.data[:, :, 0, 0] @ fm[:, 0, 0]
    np.testing.assert_allclose(spatial_attention(fm, p).data[:, 0, 0], v, atol=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_channel_attention_gradients(seed):
    rng = np.random.default_rng(100 + seed)
    p = randomized(3, seed)
    fm = Tensor(rng.standard_normal((3, 4, 4)), requires_grad=True, name="fm")
    inst = Tensor(rng.standard_normal(3), requires_grad=True, name="inst")
    probe = rng.standard_normal((3, 4, 4))
    params = {"fm": fm, "inst": inst, "linear_w": p.linear_w, "linear_b": p.linear_b}
    report = grad_check(lambda: nx.sum(channel_attention(fm, inst, p) * probe), params)
    assert report.passed, str(report)


@pytest.mark.parametrize("seed", range(10))
def test_spatial_attention_gradients(seed):
    rng = np.random.default_rng(200 + seed)
    p = randomized(3, seed)
    fm = Tensor(rng.standard_normal((3, 3, 3)), requires_grad=True, name="fm")
    probe = rng.standard_normal((3, 3, 3))
    params = dict(p.named(""), fm=fm)
    params.pop("linear_w"), params.pop("linear_b")
    report = grad_check(lambda: nx.sum(spatial_attention(fm, p) * probe), params)
    assert report.passed, str(report)


@pytest.mark.parametrize("seed", range(3))
def test_adam_forward_gradients(seed):
    rng = np.random.default_rng(300 + seed)
    p = randomized(3, seed)
    fm = Tensor(rng.standard_normal((2, 3, 3, 4)), requires_grad=True, name="fm")
    centers = rng.uniform(0.2, 2.8, size=(2, 2))
    probe = rng.standard_normal((2, 3, 3, 4))
    params = dict(p.named(""), fm=fm)
    report = grad_check(lambda: nx.sum(adam_forward(fm, centers, p) * probe), params)
    assert report.passed, str(report)
