"""Naive reference implementations used as independent test oracles.

These loop over indices explicitly and never call into ``dagpose``.
"""

import math
from collections import deque

import numpy as np


def matmul_loops(a, b):
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def conv2d_loops(x, w, stride=1, pad=0):
    """Six nested loops over (out channel, out row, out col, in channel, kernel row, kernel col)."""
    C, H, W = x.shape
    O, _, kh, kw = w.shape
    Ho = (H + 2 * pad - kh) // stride + 1
    Wo = (W + 2 * pad - kw) // stride + 1
    out = np.zeros((O, Ho, Wo))
    for o in range(O):
        for r in range(Ho):
            for c in range(Wo):
                s = 0.0
                for ci in range(C):
                    for i in range(kh):
                        for j in range(kw):
                            y = r * stride + i - pad
                            xx = c * stride + j - pad
                            if 0 <= y < H and 0 <= xx < W:
                                s += x[ci, y, xx] * w[o, ci, i, j]
                out[o, r, c] = s
    return out


def bilinear_point(f, x, y):
    """Hand-expanded four-term bilinear interpolation with border clamping."""
    C, H, W = f.shape
    x = min(max(x, 0.0), W - 1)
    y = min(max(y, 0.0), H - 1)
    x0 = int(math.floor(x))
    y0 = int(math.floor(y))
    x1 = min(x0 + 1, W - 1)
    y1 = min(y0 + 1, H - 1)
    ax = x - x0
    ay = y - y0
    return ((1 - ax) * (1 - ay) * f[:, y0, x0] + ax * (1 - ay) * f[:, y0, x1]
            + (1 - ax) * ay * f[:, y1, x0] + ax * ay * f[:, y1, x1])


def bfs_distances(n, edges):
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    dist = np.full((n, n), -1, dtype=int)
    for s in range(n):
        dist[s, s] = 0
        q = deque([s])
        while q:
            u = q.popleft()
            for v in adj[u]:
                if dist[s, v] < 0:
                    dist[s, v] = dist[s, u] + 1
                    q.append(v)
    return dist


def dense_attention(fm, wq, wk, wv, gain):
    """Spatial self-attention by looping over every (query, key) pixel pair."""
    C, H, W = fm.shape
    N = H * W
    flat = fm.reshape(C, N)
    q = wq @ flat
    k = wk @ flat
    v = wv @ flat
    out = np.zeros((C, N))
    for qi in range(N):
        logits = [float(np.dot(k[:, ki], q[:, qi])) for ki in range(N)]
        top = max(logits)
        weights = [math.exp(l - top) for l in logits]
        total = sum(weights)
        for ki in range(N):
            out[:, qi] += v[:, ki] * weights[ki] / total
    return fm + gain * out.reshape(C, H, W)


def gcn_layer_loops(M, W0, W1, mods, hops, relu=True):
    """Per-joint accumulation over hop neighbour lists."""
    Din, N = M.shape
    Dout = W0.shape[0]
    out = np.zeros((Dout, N))
    self_part = W0 @ M
    for j in range(N):
        for k, A in enumerate(hops):
            nb = np.zeros(Din)
            for i in range(N):
                if A[i, j] != 0.0:
                    nb += M[:, i] * A[i, j]
            out[:, j] += mods[k][:, j] * (self_part[:, j] + W1 @ nb)
    return np.maximum(out, 0.0) if relu else out


def _point_in_primitive(kind, geom, x, y):
    if kind == "capsule":
        (ax, ay), (bx, by), r = geom
        dx, dy = bx - ax, by - ay
        dd = dx * dx + dy * dy
        t = 0.0 if dd == 0 else min(1.0, max(0.0, ((x - ax) * dx + (y - ay) * dy) / dd))
        return (x - ax - t * dx) ** 2 + (y - ay - t * dy) ** 2 <= r * r
    if kind == "disc":
        (cx, cy), r = geom
        return (x - cx) ** 2 + (y - cy) ** 2 <= r * r
    if kind == "polygon":
        # convex polygon: same side of every edge (either winding)
        signs = []
        n = len(geom)
        for i in range(n):
            (px, py), (qx, qy) = geom[i], geom[(i + 1) % n]
            signs.append((qx - px) * (y - py) - (qy - py) * (x - px))
        return all(s >= 0 for s in signs) or all(s <= 0 for s in signs)
    raise ValueError(kind)


def provenance_owner(spec, x, y):
    """Topmost entity (kind, index) covering pixel center (x, y), or None for background."""
    from dagpose.synthdata import figure_primitives

    for kind, idx in reversed(spec.draw_order()):
        if kind == "occluder":
            o = spec.occluders[idx]
            if o.x <= x <= o.x + o.w and o.y <= y <= o.y + o.h:
                return kind, idx
        elif any(_point_in_primitive(k, g, x, y) for k, g, _ in figure_primitives(spec.figure(idx))):
            return kind, idx
    return None
