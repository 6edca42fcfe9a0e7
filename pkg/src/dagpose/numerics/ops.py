"""Differentiable primitives over :class:`~dagpose.numerics.tensor.Tensor`.

Every op computes its forward value with numpy and registers a closure that
maps the output gradient to one gradient per input (``None`` for inputs that
need none).
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, make_result


def _unbroadcast(g, shape):
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _pair(a, b):
    a = as_tensor(a)
    b = as_tensor(b, dtype=a.dtype) if not isinstance(b, Tensor) else b
    return a, b


# ----------------------------------------------------------------- elementwise

def add(a, b):
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return make_result(a.data + b.data, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return make_result(a.data - b.data, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    a, b = _pair(a, b)
    ad, bd = a.data, b.data
    return make_result(ad * bd, (a, b),
                       lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b):
    a, b = _pair(a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def back(g):
        return _unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)

    return make_result(out, (a, b), back)


def neg(a):
    a = as_tensor(a)
    return make_result(-a.data, (a,), lambda g: (-g,))


def square(a):
    a = as_tensor(a)
    ad = a.data
    return make_result(ad * ad, (a,), lambda g: (2.0 * ad * g,))


def absolute(a):
    a = as_tensor(a)
    ad = a.data
    return make_result(np.abs(ad), (a,), lambda g: (np.sign(ad) * g,))


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return make_result(np.where(mask, a.data, 0.0).astype(a.dtype, copy=False), (a,),
                       lambda g: (g * mask,))


def sigmoid(a):
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return make_result(out, (a,), lambda g: (g * out * (1.0 - out),))


# ------------------------------------------------------------------ reductions

def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    shape = a.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return make_result(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), back)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


# ------------------------------------------------------------------- structure

def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    return make_result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = np.argsort(axes)
    return make_result(np.transpose(a.data, axes), (a,),
                       lambda g: (np.transpose(g, inverse),))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return make_result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors),
                       lambda g: tuple(np.split(g, cuts, axis=axis)))


# ---------------------------------------------------------------------- linear

def matmul(a, b):
    """Matrix product with numpy batching rules; both operands need ndim >= 2."""
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def back(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return make_result(ad @ bd, (a, b), back)


def softmax(x, axis=-1):
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax axis {axis} out of range for rank {x.ndim}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_result(out, (x,), back)


# ----------------------------------------------------------------- convolution

def conv_output_size(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def conv2d(x, w, bias=None, stride=1, pad=0):
    """2D cross-correlation.

    ``x`` is ``(B, Cin, H, W)`` or a single ``(Cin, H, W)`` map, ``w`` is
    ``(Cout, Cin, kh, kw)`` with odd kernel sides. ``bias`` is optional ``(Cout,)``.
    """
    x = as_tensor(x)
    w = as_tensor(w)
    single = x.ndim == 3
    if single:
        x = reshape(x, (1,) + x.shape)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects x of rank 3/4 and w of rank 4, got {x.shape}, {w.shape}")
    B, C, H, W = x.shape
    O, Ci, kh, kw = w.shape
    if Ci != C:
        raise ShapeError(f"conv2d channel mismatch: input has {C} channels, kernel expects {Ci}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d supports odd kernel sizes only, got {kh}x{kw}")
    Ho = conv_output_size(H, kh, stride, pad)
    Wo = conv_output_size(W, kw, stride, pad)
    if Ho < 1 or Wo < 1:
        raise ShapeError(f"conv2d output would be empty for input {x.shape} and kernel {w.shape}")

    xd, wd = x.data, w.data
    # im2col with rows ordered (kh, kw, C) and one column per output pixel;
    # channels-first copies move whole image rows, which beats per-pixel runs
    wmat = wd.transpose(0, 2, 3, 1).reshape(O, -1)
    xp = np.zeros((C, B, H + 2 * pad, W + 2 * pad), dtype=xd.dtype)
    xp[:, :, pad:pad + H, pad:pad + W] = xd.transpose(1, 0, 2, 3)
    cols = np.empty((kh, kw, C, B, Ho, Wo), dtype=xd.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[i, j] = xp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride]
    cols = cols.reshape(kh * kw * C, -1)
    out = (wmat @ cols).reshape(O, B, Ho, Wo)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[:, None, None, None]
    out = out.transpose(1, 0, 2, 3)
    parents = (x, w) if bias is None else (x, w, bias)

    def back(g):
        gm = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(O, -1)
        gw = (gm @ cols.T).reshape(O, kh, kw, C).transpose(0, 3, 1, 2)
        gx = None
        if x.requires_grad:
            gcols = (wmat.T @ gm).reshape(kh, kw, C, B, Ho, Wo)
            gxp = np.zeros((C, B, H + 2 * pad, W + 2 * pad), dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += gcols[i, j]
            gx = gxp[:, :, pad:pad + H, pad:pad + W].transpose(1, 0, 2, 3)
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    res = make_result(out, parents, back)
    if single:
        res = reshape(res, res.shape[1:])
    return res


# --------------------------------------------------------------- grid sampling

def _bilinear_taps(points, H, W):
    """Clamped corner indices and weights for bilinear lookup at (x, y) points."""
    x = np.clip(points[..., 0], 0.0, W - 1)
    y = np.clip(points[..., 1], 0.0, H - 1)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x0 = np.minimum(x0, max(W - 2, 0))
    y0 = np.minimum(y0, max(H - 2, 0))
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    wx = x - x0
    wy = y - y0
    return (y0, x0, (1 - wy) * (1 - wx)), (y0, x1, (1 - wy) * wx), \
           (y1, x0, wy * (1 - wx)), (y1, x1, wy * wx)


def grid_sample_bilinear(f, points):
    """Sample feature maps at pixel coordinates.

    ``f`` is ``(C, H, W)`` with ``points`` shaped ``(P, 2)``, or batched
    ``(B, C, H, W)`` with ``points`` shaped ``(B, P, 2)``. Points are (x, y)
    with x along width; lattice point (i, j) reads ``f[:, j, i]``. Coordinates
    outside the map are clamped to the border. Returns ``(P, C)`` or
    ``(B, P, C)``. Points are constants; only ``f`` receives a gradient.
    """
    f = as_tensor(f)
    pts = np.asarray(points.data if isinstance(points, Tensor) else points, dtype=np.float64)
    single = f.ndim == 3
    fd = f.data[None] if single else f.data
    if single:
        pts = pts.reshape(1, -1, 2) if pts.size else np.zeros((1, 0, 2))
    if fd.ndim != 4:
        raise ShapeError(f"grid_sample expects a (C,H,W) or (B,C,H,W) map, got {f.shape}")
    B, C, H, W = fd.shape
    if pts.shape[0] != B or pts.shape[-1] != 2:
        raise ShapeError(f"points shape {pts.shape} does not match feature batch {f.shape}")
    P = pts.shape[1]
    taps = _bilinear_taps(pts, H, W)
    flat = fd.reshape(B, C, H * W)
    bidx = np.arange(B)[:, None]
    out = np.zeros((B, P, C), dtype=fd.dtype)
    for yy, xx, wgt in taps:
        out += flat[bidx, :, yy * W + xx] * wgt[..., None].astype(fd.dtype)

    def back(g):
        if single:
            g = g[None]
        gf = np.zeros((B, H * W, C), dtype=g.dtype)
        for yy, xx, wgt in taps:
            np.add.at(gf, (np.broadcast_to(bidx, yy.shape), yy * W + xx), g * wgt[..., None])
        gf = gf.transpose(0, 2, 1).reshape(B, C, H, W)
        return (gf[0] if single else gf,)

    return make_result(out[0] if single else out, (f,), back)


# ------------------------------------------------------------ operator binding

def _rsub(a, b):
    return sub(b, a)


def _rdiv(a, b):
    return div(b, a)


Tensor.__add__ = add
Tensor.__radd__ = lambda a, b: add(b, a)
Tensor.__sub__ = sub
Tensor.__rsub__ = _rsub
Tensor.__mul__ = mul
Tensor.__rmul__ = lambda a, b: mul(b, a)
Tensor.__truediv__ = div
Tensor.__rtruediv__ = _rdiv
Tensor.__neg__ = neg
Tensor.__matmul__ = matmul
Tensor.__rmatmul__ = lambda a, b: matmul(b, a)
Tensor.sum = sum
Tensor.mean = mean
Tensor.reshape = lambda self, *shape: reshape(self, shape[0] if len(shape) == 1 else shape)
Tensor.transpose = transpose
Tensor.T = property(lambda self: transpose(self))
