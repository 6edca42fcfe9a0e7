"""Joint graphs and their normalized multi-hop adjacency matrices."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

COCO17_JOINTS = (
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
)

# The usual COCO keypoint skeleton, 0-indexed.
COCO17_EDGES = (
    (0, 1), (0, 2), (1, 2), (1, 3), (2, 4),    # face
    (3, 5), (4, 6),                            # ears to shoulders
    (5, 6), (5, 7), (7, 9), (6, 8), (8, 10),   # shoulders and arms
    (5, 11), (6, 12), (11, 12),                # torso
    (11, 13), (13, 15), (12, 14), (14, 16),    # legs
)

CROWDPOSE14_JOINTS = (
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle", "head", "neck",
)

CROWDPOSE14_EDGES = (
    (12, 13), (13, 0), (13, 1), (0, 2), (2, 4), (1, 3), (3, 5),
    (13, 6), (13, 7), (6, 8), (8, 10), (7, 9), (9, 11),
)

HOP_MODES = ("exact", "within")


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class SkeletonGraph:
    joint_names: tuple
    edges: tuple
    hop_matrices: tuple = field(default=(), repr=False)
    hop_mode: str = "exact"

    @property
    def joint_count(self):
        return len(self.joint_names)

    @property
    def num_hops(self):
        return len(self.hop_matrices)

    def index(self, name):
        return self.joint_names.index(name)

    def has_edge(self, a, b):
        a = self.index(a) if isinstance(a, str) else a
        b = self.index(b) if isinstance(b, str) else b
        return (min(a, b), max(a, b)) in self.edges

    def distances(self):
        return shortest_path_lengths(self.joint_count, self.edges)

    def with_hops(self, num_hops, mode=None):
        mode = mode or self.hop_mode
        return make_skeleton(self.joint_names, self.edges, num_hops, mode)


def _validate_edges(n, edges):
    seen = set()
    for a, b in edges:
        a, b = int(a), int(b)
        if not (0 <= a < n and 0 <= b < n):
            raise GraphError(f"edge ({a}, {b}) references a joint outside 0..{n - 1}")
        if a == b:
            raise GraphError(f"self-loop on joint {a}")
        key = (min(a, b), max(a, b))
        if key in seen:
            raise GraphError(f"duplicate edge {key}")
        seen.add(key)
    return tuple(sorted(seen))


def shortest_path_lengths(n, edges):
    """All-pairs hop distances; -1 marks unreachable pairs."""
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    dist = np.full((n, n), -1, dtype=np.int64)
    for src in range(n):
        dist[src, src] = 0
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if dist[src, v] < 0:
                    dist[src, v] = dist[src, u] + 1
                    queue.append(v)
    return dist


def connected_components(n, edges):
    dist = shortest_path_lengths(n, edges)
    comps, seen = [], set()
    for i in range(n):
        if i in seen:
            continue
        comp = sorted(int(j) for j in np.flatnonzero(dist[i] >= 0))
        seen.update(comp)
        comps.append(comp)
    return comps


def normalize_symmetric(adj):
    """D^-1/2 A D^-1/2; rows with zero degree stay zero."""
    deg = adj.sum(axis=1)
    inv = np.zeros_like(deg, dtype=np.float64)
    nz = deg > 0
    inv[nz] = 1.0 / np.sqrt(deg[nz])
    return adj * inv[:, None] * inv[None, :]


def build_hop_adjacency(graph_or_edges, num_hops, n=None, mode="exact"):
    """Normalized hop adjacency list ``[Â_1, ..., Â_K]``.

    In ``"exact"`` mode A_k links joints whose shortest-path distance is
    exactly k, so supports of different hops are disjoint. ``"within"`` links
    every pair at distance 1..k. Diagonals are always zero.
    """
    if isinstance(graph_or_edges, SkeletonGraph):
        n, edges = graph_or_edges.joint_count, graph_or_edges.edges
    else:
        edges = graph_or_edges
        if n is None:
            raise ValueError("joint count n is required when passing an edge list")
    if num_hops < 1:
        raise GraphError(f"number of hops must be >= 1, got {num_hops}")
    if mode not in HOP_MODES:
        raise ValueError(f"hop mode must be one of {HOP_MODES}, got {mode!r}")
    edges = _validate_edges(n, edges)
    comps = connected_components(n, edges)
    if len(comps) > 1:
        raise GraphError(f"skeleton graph is disconnected; components: {comps}")
    dist = shortest_path_lengths(n, edges)
    hops = []
    for k in range(1, num_hops + 1):
        if mode == "exact":
            adj = (dist == k).astype(np.float64)
        else:
            adj = ((dist >= 1) & (dist <= k)).astype(np.float64)
        hops.append(normalize_symmetric(adj))
    return hops


def make_skeleton(joint_names, edges, num_hops=3, mode="exact"):
    names = tuple(joint_names)
    if len(set(names)) != len(names):
        raise GraphError("joint names must be unique")
    edges = _validate_edges(len(names), edges)
    hops = build_hop_adjacency(edges, num_hops, n=len(names), mode=mode)
    for A in hops:
        A.setflags(write=False)
    return SkeletonGraph(names, edges, tuple(hops), mode)


def coco17_skeleton(num_hops=3, mode="exact"):
    return make_skeleton(COCO17_JOINTS, COCO17_EDGES, num_hops, mode)


def crowdpose14_skeleton(num_hops=3, mode="exact"):
    return make_skeleton(CROWDPOSE14_JOINTS, CROWDPOSE14_EDGES, num_hops, mode)


def load_skeleton(path, num_hops=None, mode=None):
    """Read a skeleton config (JSON or YAML) with ``joints`` and ``edges``.

    Edges may be given as index pairs or joint-name pairs. Optional keys
    ``num_hops`` and ``hop_mode`` are overridden by the arguments.
    """
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml
        cfg = yaml.safe_load(text)
    else:
        cfg = json.loads(text)
    if not isinstance(cfg, dict) or "joints" not in cfg or "edges" not in cfg:
        raise GraphError(f"{path}: skeleton config needs 'joints' and 'edges'")
    names = [str(j) for j in cfg["joints"]]
    edges = []
    for pair in cfg["edges"]:
        if len(pair) != 2:
            raise GraphError(f"{path}: edge {pair!r} is not a pair")
        try:
            edges.append(tuple(names.index(p) if isinstance(p, str) else int(p) for p in pair))
        except ValueError as exc:
            raise GraphError(f"{path}: edge {pair!r} names an unknown joint") from exc
    k = num_hops if num_hops is not None else int(cfg.get("num_hops", 3))
    m = mode if mode is not None else cfg.get("hop_mode", "exact")
    return make_skeleton(names, edges, k, m)


def skeleton_by_name(name, num_hops=3, mode="exact"):
    if name == "coco17":
        return coco17_skeleton(num_hops, mode)
    if name == "crowdpose14":
        return crowdpose14_skeleton(num_hops, mode)
    return load_skeleton(name, num_hops, mode)
