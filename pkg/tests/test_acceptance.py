"""Acceptance criteria, one test each. Run with ``-s`` to see the detail lines.

The terminal summary (see conftest.py) prints one PASS/FAIL line per criterion.
"""

import json
import math
import time

import numpy as np
import pytest

from dagpose import numerics as nx
from dagpose.ablation import check_directional, run_ablation, to_markdown
from dagpose.annotations import load_annotations, load_dataset, save_annotations
from dagpose.attention import adam_forward, init_adam_params, spatial_attention
from dagpose.augment import AugmentConfig, augment, instance_paste, load_pool
from dagpose.cli import main
from dagpose.config import RunConfig
from dagpose.gcn import GcnLayerParams, gcn_layer, init_refiner, refine_pose
from dagpose.gradsuite import CASES, TOLERANCE, run_suite
from dagpose.numerics import Tensor
from dagpose.pipeline import TrainConfig, decode_heatmaps, encode_heatmaps, train
from dagpose.skeleton import COCO17_EDGES, build_hop_adjacency, coco17_skeleton
from dagpose.synthdata import generate_dataset, generate_scenes

from oracles import bfs_distances, conv2d_loops, dense_attention, gcn_layer_loops, matmul_loops


def say(num, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'}  criterion {num}: {detail}")


# ---------------------------------------------------------------- criterion 1

def test_criterion_1_gradient_suite():
    required = {"matmul", "conv2d", "softmax", "grid_sample", "channel_attention",
                "spatial_attention", "gcn_layer", "refiner", "total_loss"}
    assert required <= set(CASES)
    start = time.perf_counter()
    results = run_suite(10)
    seconds = time.perf_counter() - start
    worst = max(max(r.errors) for r in results)
    ok = all(r.passed and len(r.errors) >= 10 for r in results) and seconds < 120
    say(1, ok, f"{len(results)} ops x 10 instances, worst rel err {worst:.2e} "
               f"(< {TOLERANCE:g}), {seconds:.0f}s (< 120s)")
    for r in results:
        assert r.passed, f"{r.name}: worst {max(r.errors):.3e}"
    assert seconds < 120


# ---------------------------------------------------------------- criterion 2

@pytest.mark.parametrize("graph", ["coco17", "path3"])
def test_criterion_2_hop_matrix_oracle(graph):
    n, edges = (17, COCO17_EDGES) if graph == "coco17" else (3, [(0, 1), (1, 2)])
    dist = bfs_distances(n, edges)
    hops = build_hop_adjacency(edges, 4, n=n)
    worst = 0.0
    for k, A in enumerate(hops, start=1):
        np.testing.assert_array_equal(A != 0, dist == k)
        worst = max(worst, float(np.abs(A - A.T).max()))
        deg = (dist == k).sum(axis=1)
        for i, j in zip(*np.nonzero(dist == k)):
            assert A[i, j] == pytest.approx(1 / math.sqrt(deg[i] * deg[j]), abs=1e-12)
    assert worst <= 1e-12
    say(2, True, f"{graph}: supports k=1..4 equal BFS exact distance, asymmetry {worst:.1e}")


# ---------------------------------------------------------------- criterion 3

def test_criterion_3_identity_configurations():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((6, 17))
    ident = GcnLayerParams(Tensor(np.eye(6)), Tensor(np.zeros((6, 6))), Tensor(np.ones((1, 6, 17))))
    hops = coco17_skeleton(num_hops=1).hop_matrices
    np.testing.assert_array_equal(gcn_layer(M, ident, hops, activation="identity").data, M)
    # with more hops, the extra modulations are switched off
    mods = np.zeros((3, 6, 17))
    mods[0] = 1
    ident3 = GcnLayerParams(Tensor(np.eye(6)), Tensor(np.zeros((6, 6))), Tensor(mods))
    np.testing.assert_array_equal(
        gcn_layer(M, ident3, coco17_skeleton(num_hops=3).hop_matrices, activation="identity").data, M)

    fm = rng.standard_normal((8, 5, 4))
    p = init_adam_params(8)
    p.linear_w.data = np.zeros((8, 8))
    p.linear_b.data = np.ones(8)
    p.residual_gain.data = np.zeros(1)
    adam_err = float(np.abs(adam_forward(fm, (1.5, 2.0), p).data - fm).max())
    assert adam_err <= 1e-12

    pose = rng.uniform(0, 48, (3, 17, 2))
    ref = refine_pose(pose, rng.standard_normal((3, 8, 16, 12)),
                      init_refiner(8, 17, 3, hidden=16, rng=rng), coco17_skeleton(), (48, 64))
    np.testing.assert_array_equal(ref.data, pose)
    say(3, True, f"gcn identity exact, adam identity err {adam_err:.1e}, zero-head refiner exact")


# ---------------------------------------------------------------- criterion 4

def test_criterion_4_oracle_equivalence():
    worst = {}
    for seed in range(100):
        rng = np.random.default_rng(seed)
        m, k, n = rng.integers(1, 6, 3)
        a, b = rng.standard_normal((m, k)), rng.standard_normal((k, n))
        worst["matmul"] = max(worst.get("matmul", 0), np.abs(nx.matmul(a, b).data - matmul_loops(a, b)).max())

        cin, cout, h, w = rng.integers(1, 4), rng.integers(1, 4), rng.integers(3, 7), rng.integers(3, 7)
        kk = int(rng.choice([1, 3]))
        stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, 2))
        x, wt = rng.standard_normal((cin, h, w)), rng.standard_normal((cout, cin, kk, kk))
        got = nx.conv2d(x, wt, stride=stride, pad=pad).data
        worst["conv2d"] = max(worst.get("conv2d", 0), np.abs(got - conv2d_loops(x, wt, stride, pad)).max())

        C = int(rng.integers(1, 4))
        fm = rng.standard_normal((C, int(rng.integers(1, 4)), int(rng.integers(1, 4))))
        p = init_adam_params(C, rng)
        p.residual_gain.data = np.array([rng.uniform(-1, 1)])
        ref = dense_attention(fm, p.conv_q.data[:, :, 0, 0], p.conv_k.data[:, :, 0, 0],
                              p.conv_v.data[:, :, 0, 0], float(p.residual_gain.data[0]))
        worst["spatial_attention"] = max(worst.get("spatial_attention", 0),
                                         np.abs(spatial_attention(fm, p).data - ref).max())

        K, d_in, d_out = int(rng.integers(1, 4)), int(rng.integers(1, 5)), int(rng.integers(1, 5))
        g = coco17_skeleton(num_hops=K)
        lay = GcnLayerParams(Tensor(rng.standard_normal((d_out, d_in))), Tensor(rng.standard_normal((d_out, d_in))),
                             Tensor(rng.standard_normal((K, d_out, 17))))
        M = rng.standard_normal((d_in, 17))
        ref = gcn_layer_loops(M, lay.w0.data, lay.w1.data, lay.mods.data, g.hop_matrices)
        worst["gcn_layer"] = max(worst.get("gcn_layer", 0), np.abs(gcn_layer(M, lay, g.hop_matrices).data - ref).max())
    ok = all(v <= 1e-12 for v in worst.values())
    say(4, ok, "100 cases each, worst abs err " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert ok, worst


# ---------------------------------------------------------------- criterion 5

def test_criterion_5_augmentation_contracts(tmp_path):
    from dagpose.augment import InstanceCutout
    from dagpose.synthdata import figure_cutout

    specs = generate_scenes(20, seed=11)
    scenes = [img for _, img in specs]
    pool = [InstanceCutout(*figure_cutout(s.target, (224, 224))) for s, _ in specs[:5]]

    # determinism
    cfg = AugmentConfig(mask_prob=1.0, paste_prob=1.0)
    for seed in range(20):
        a, ra = augment(scenes[seed], pool, cfg, seed)
        b, rb = augment(scenes[seed], pool, cfg, seed)
        np.testing.assert_array_equal(a.pixels, b.pixels)
        assert ra.to_dict() == rb.to_dict()

    # locality: pixels outside recorded regions are bitwise unchanged
    for seed in range(100):
        img = scenes[seed % 20]
        out, rec = augment(img, pool, cfg, seed)
        allowed = np.zeros(img.pixels.shape[:2], bool)
        regions = [m.rect for m in rec.masked] + ([rec.paste.region] if rec.paste else [])
        for x, y, w, h in regions:
            allowed[y:y + h, x:x + w] = True
        assert not ((out.pixels != img.pixels).any(axis=2) & ~allowed).any()
        for p, q in zip(out.persons, img.persons):
            np.testing.assert_array_equal(p.keypoints, q.keypoints)

    # overlap bound over 1000 trials
    ocfg = AugmentConfig(paste_prob=1.0, max_target_overlap=0.25)
    worst, accepted = 0.0, 0
    for trial in range(1000):
        img = scenes[trial % 20]
        out, rec = instance_paste(img, pool, ocfg, trial)
        if rec.paste is None:
            continue
        accepted += 1
        x, y, w, h = rec.paste.region
        bx, by, bw, bh = img.target.bbox
        iw = max(0.0, min(x + w, bx + bw) - max(x, bx))
        ih = max(0.0, min(y + h, by + bh) - max(y, by))
        worst = max(worst, iw * ih / (bw * bh))
    assert worst <= 0.25 and accepted > 500

    # COCO JSON round trip keeps every value, v=3 included
    generate_dataset(10, 4, tmp_path, pool_size=0)
    first = load_annotations(tmp_path / "annotations.json")
    v3 = sum(int((p.keypoints[:, 2] == 3).sum()) for r in first for p in r.persons)
    assert v3 > 0
    save_annotations(tmp_path / "again.json", first)
    again = load_annotations(tmp_path / "again.json")
    for r1, r2 in zip(first, again):
        assert r1.target_index == r2.target_index
        for p1, p2 in zip(r1.persons, r2.persons):
            np.testing.assert_array_equal(p1.keypoints, p2.keypoints)
            np.testing.assert_array_equal(p1.bbox, p2.bbox)
    assert json.loads((tmp_path / "again.json").read_text()) == json.loads(
        (tmp_path / "annotations.json").read_text())
    say(5, True, f"determinism, locality over 100 draws, overlap worst {worst:.3f} <= 0.25 "
                 f"over {accepted} accepted pastes, round trip with {v3} v=3 joints")


# ---------------------------------------------------------------- criterion 6

def test_criterion_6_heatmap_round_trip():
    crop = (48, 64)
    worst = 0.0
    # every quarter-pixel position inside the heatmap lattice hull
    for x in np.arange(0, 44.01, 0.25):
        for y in np.arange(0, 60.01, 0.25):
            kps, _ = decode_heatmaps(encode_heatmaps(np.array([[x, y, 2.0]]), crop))
            worst = max(worst, float(np.hypot(kps[0, 0] - x, kps[0, 1] - y)))
    say(6, worst <= 2.0, f"worst encode/decode error {worst:.3f} px over 42,000+ positions (<= 2 px)")
    assert worst <= 2.0


# ------------------------------------------------------------ criteria 7 and 8

@pytest.fixture(scope="module")
def synth(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    generate_dataset(2000, 100, root / "train")
    generate_dataset(500, 200, root / "val", pool_size=0)
    return root


@pytest.mark.slow
def test_criterion_7_directional_ablation(synth):
    run = RunConfig()
    assert run.ablation.seeds == (0, 1, 2)
    train_images, val_images = load_dataset(synth / "train"), load_dataset(synth / "val")
    pool = load_pool(synth / "train" / "pool")
    assert len(train_images) == 2000 and len(val_images) == 500

    def progress(name, seed, rep, res):
        print(f"  {name:10s} seed {seed}: PCK {100 * rep.pck:.2f}  occluded {100 * rep.pck_occluded:.2f}"
              f"  ({res.seconds:.0f}s)", flush=True)

    start = time.perf_counter()
    rows = run_ablation(train_images, val_images, run, pool=pool, progress=progress)
    minutes = (time.perf_counter() - start) / 60
    print(to_markdown(rows))
    checks = check_directional(rows)
    for claim, ok in checks.items():
        print(f"  {'ok ' if ok else 'BAD'} {claim}")
    ok = all(checks.values()) and minutes < 45
    say(7, ok, f"{len(rows)} rows x 3 seeds in {minutes:.1f} min; "
               + "; ".join(f"{c}: {'yes' if v else 'no'}" for c, v in checks.items()))
    assert all(checks.values()), checks
    assert minutes < 45


@pytest.mark.slow
def test_criterion_8_training_sanity(synth, tmp_path):
    images = load_dataset(synth / "train")
    res = train(images, TrainConfig(), pool=load_pool(synth / "train" / "pool"))
    totals = [row["total"] for row in res.history]
    assert len(totals) == 30 and all(np.isfinite(totals))
    ratio = totals[-1] / totals[0]

    # documented command sequence from a clean directory, reduced sizes
    d = tmp_path / "e2e"
    steps = [
        ["gradcheck", "--instances", "2"],
        ["gen", "--n", "40", "--seed", "1", "--out", str(d / "data" / "train"), "--pool-size", "10"],
        ["gen", "--n", "20", "--seed", "2", "--out", str(d / "data" / "val"), "--pool-size", "0"],
        ["train", "--data", str(d / "data" / "train"), "--out-ckpt", str(d / "dag.ckpt"), "--epochs", "2"],
        ["eval", "--data", str(d / "data" / "val"), "--ckpt", str(d / "dag.ckpt")],
        ["ablate", "--data", str(d / "data"), "--seeds", "0", "1", "2", "--epochs", "1", "--out", str(d / "abl")],
    ]
    codes = [main(argv) for argv in steps]
    report = json.loads((d / "dag.eval.json").read_text())
    ok = ratio < 0.5 and codes == [0] * len(steps)
    say(8, ok, f"epoch-30/epoch-1 loss {ratio:.3f} (< 0.5), no NaN; CLI exit codes {codes}; "
               f"e2e PCK {report['pck']:.3f}")
    assert ratio < 0.5, totals
    assert codes == [0] * len(steps)
    assert (d / "abl" / "ablation.md").exists()
