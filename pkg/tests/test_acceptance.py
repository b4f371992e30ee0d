"""Acceptance gate: one test per criterion, each printing a single pass/fail line.

The lines are repeated in the pytest terminal summary.
"""
import time

import networkx as nx
import numpy as np
import pytest

from skelsign import fileio
from skelsign.core import Tensor, grad_check, ops, precision
from skelsign.core.nn import Conv2d
from skelsign.fusion import (
    GEM, RGB_WEIGHTS, RGBD_WEIGHTS, GEMConfig, GEMTrainConfig, LogitMatrix, complementary_benchmark,
    fuse_fixed, gem_forward, gem_train, parse_grid, sensitivity_sweep,
)
from skelsign.metrics import evaluate, topk_hits
from skelsign.skeleton import build_adjacency, normalize_adjacency, reduced_graph
from skelsign.slgcn import DecoupledGCN, STCAttention, make_identity_unit
from skelsign.sstcn import SSTCN, SSTCNConfig, channel_shuffle, from_stage1_layout, to_stage1_layout
from skelsign.streams import AugmentationConfig, StreamTensor, augment, derive_bones, derive_motion, mirror
from skelsign.toy import multistream_run, sstcn_overfit
from skelsign.training import smooth_labels, smoothed_ce


# lines are echoed again in the terminal summary (see conftest)
RESULT_LINES = []


def report(number, title, checks):
    """Print one line for the criterion and fail with the broken checks."""
    failed = [f"{name} ({detail})" for name, ok, detail in checks if not ok]
    status = "PASS" if not failed else "FAIL"
    summary = "; ".join(f"{name}: {detail}" for name, _, detail in checks)
    line = f"criterion {number} [{title}]: {status} | {summary}"
    RESULT_LINES.append(line)
    print("\n" + line)
    assert not failed, "failed: " + ", ".join(failed)


def test_criterion_1_equation_fidelity():
    checks = []
    # adjacency against a BFS oracle
    g = reduced_graph()
    ng = nx.Graph(list(g.edges))
    oracle = np.zeros((27, 27))
    for s, lengths in nx.all_pairs_shortest_path_length(ng):
        for t, d in lengths.items():
            oracle[s, t] = d == 1
    checks.append(("adjacency", np.array_equal(build_adjacency(g), oracle), "exact vs networkx BFS"))

    # normalization of the 3-node path, degrees of A + I are 2, 3, 2
    path = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    r6 = 1 / np.sqrt(6)
    hand = np.array([[1 / 2, r6, 0], [r6, 1 / 3, r6], [0, r6, 1 / 2]])
    err = np.abs(normalize_adjacency(path).full - hand).max()
    checks.append(("normalization", err <= 1e-9, f"max err {err:.1e}"))

    # bone and motion streams against adjacent-difference oracles
    rng = np.random.default_rng(0)
    joints = rng.uniform(-1, 1, (3, 6, 27))
    parents = np.array(g.parents())
    bone = derive_bones(StreamTensor("joint", joints)).data
    want_bone = joints.copy()
    want_bone[:2, :, 1:] = joints[:2, :, 1:] - joints[:2][:, :, parents[1:]]
    want_bone[:2, :, 0] = 0
    motion = derive_motion(StreamTensor("joint", joints)).data
    want_motion = np.concatenate([np.diff(joints[:2], axis=1), np.zeros((2, 1, 27))], axis=1)
    bone_motion = derive_motion(StreamTensor("bone", bone)).data
    want_bm = np.concatenate([np.diff(want_bone[:2], axis=1), np.zeros((2, 1, 27))], axis=1)
    exact = (np.array_equal(bone, want_bone) and np.array_equal(motion[:2], want_motion)
             and np.array_equal(bone_motion[:2], want_bm))
    checks.append(("streams", exact, "exact vs differences"))

    # smoothed label distribution
    q = smooth_labels(1, 4, 0.1)
    err = max(abs(q.sum() - 1), np.abs(q - [0.025, 0.925, 0.025, 0.025]).max())
    checks.append(("label smoothing", err <= 1e-12, f"err {err:.1e}"))

    # smoothed cross-entropy decomposition on random cases
    worst = 0.0
    with precision(np.float64):
        for _ in range(50):
            k = rng.integers(2, 10)
            z = rng.normal(0, 5, (4, k))
            y = rng.integers(0, k, 4)
            eps = rng.uniform()
            logp = z - z.max(1, keepdims=True)
            logp = logp - np.log(np.exp(logp).sum(1, keepdims=True))
            two_term = np.mean((1 - eps) * -logp[np.arange(4), y] + eps * -logp.mean(1))
            worst = max(worst, abs(float(smoothed_ce(z, y, eps).data) - two_term))
    checks.append(("cross-entropy", worst <= 1e-9, f"max err {worst:.1e}"))

    # swish at 0, 1 and a grid
    grid = np.linspace(-8, 8, 161)
    with precision(np.float64):
        sw = ops.swish(np.concatenate([[0.0, 1.0], grid])).data
    ref = np.concatenate([[0.0, 1.0], grid]) / (1 + np.exp(-np.concatenate([[0.0, 1.0], grid])))
    err = max(np.abs(sw - ref).max(), abs(sw[1] - 0.7310585786300049))
    checks.append(("swish", err <= 1e-6, f"max err {err:.1e}"))
    report(1, "equation fidelity", checks)


def test_criterion_2_gradients():
    start = time.time()
    rng = np.random.default_rng(0)
    checks = []
    path = np.diag(np.ones(4), 1) + np.diag(np.ones(4), -1)
    parts = normalize_adjacency(path, "spatial", np.stack([np.linspace(-1, 1, 5), np.zeros(5)], 1)).partitions

    def check(name, module, x, out_shape=None, max_coords=None):
        proj = Tensor(rng.normal(size=out_shape or module(x).shape))
        for p in module.parameters():
            p.data = p.data + rng.normal(0, 0.2, p.shape)
        err = grad_check(lambda: ops.sum(module(Tensor(x)) * proj), module.parameters(), max_coords=max_coords)
        checks.append((name, err < 1e-3, f"{err:.1e}"))

    check("decoupled gcn", DecoupledGCN(3, 4, parts, 2, rng), rng.normal(size=(2, 3, 4, 5)))
    check("stc attention", STCAttention(4, 5, rng, reduction=2, temporal_kernel=3), rng.normal(size=(2, 4, 6, 5)))
    check("temporal conv", Conv2d(4, 4, (9, 1), rng, stride=(2, 1)), rng.normal(size=(2, 4, 10, 5)))

    cfg = SSTCNConfig(num_classes=3, frames=4, joints=4, size=8, stage1_width=8, stage3_width=2,
                      hidden=6, dropout=0.0)
    net = SSTCN(cfg, rng)
    x = rng.uniform(0, 1, (3, 4, 4, 8, 8))
    y = np.array([0, 2, 1])
    err = grad_check(lambda: smoothed_ce(net(Tensor(x)), y), net.parameters(), max_coords=12)
    checks.append(("sstcn stages 0-4", err < 1e-3, f"{err:.1e}"))

    gem = GEM(GEMConfig(3, 5, 6), rng)
    for p in gem.parameters():
        p.data = p.data + rng.normal(0, 0.3, p.shape)
    q = rng.normal(size=(4, 3, 5))
    err = grad_check(lambda: smoothed_ce(gem(Tensor(q))[1], np.array([0, 4, 2, 1])), gem.parameters())
    checks.append(("gem", err < 1e-3, f"{err:.1e}"))
    took = time.time() - start
    checks.append(("runtime", took < 120, f"{took:.1f}s"))
    report(2, "gradients", checks)


def test_criterion_3_identity_ladder(tmp_path):
    rng = np.random.default_rng(0)
    checks = []
    unit = make_identity_unit(6, 27, rng)
    x = rng.normal(size=(2, 6, 8, 27))
    err = np.abs(unit(x).data - x).max()
    checks.append(("identity unit", err <= 1e-5, f"max err {err:.1e}"))

    clip = rng.uniform(-1, 1, (8, 27, 3))
    same = np.array_equal(augment(clip, AugmentationConfig.identity(), rng), clip)
    checks.append(("zero augmentation", same, "exact"))
    checks.append(("mirror twice", np.array_equal(mirror(mirror(clip)), clip), "exact"))

    feats = rng.normal(size=(2, 4, 5, 6, 6)).astype(np.float32)
    shuffled = rng.normal(size=(2, 12, 3)).astype(np.float32)
    reshapes = (np.array_equal(from_stage1_layout(to_stage1_layout(feats), 5).data, feats)
                and np.array_equal(channel_shuffle(channel_shuffle(shuffled, 3), 4).data, shuffled))
    checks.append(("reshape round trips", reshapes, "exact"))

    pts = np.concatenate([rng.uniform(0, 200, (3, 133, 2)), rng.uniform(0, 1, (3, 133, 1))], -1)
    blobs = [
        (fileio.encode_keypoints(pts, (200, 200)), lambda b: fileio.encode_keypoints(*fileio.decode_keypoints(b))),
        (fileio.encode_tensor(rng.normal(size=(2, 3, 4))), lambda b: fileio.encode_tensor(fileio.decode_tensor(b))),
        (fileio.encode_logits(fileio.LogitFile("joint", rng.normal(size=(3, 4)), "abc")),
         lambda b: fileio.encode_logits(fileio.decode_logits(b, "abc"))),
        (fileio.encode_checkpoint({"step": 3}, {"w": rng.normal(size=(2, 2))}),
         lambda b: fileio.encode_checkpoint(*fileio.decode_checkpoint(b))),
    ]
    files_ok = all(again(buf) == buf for buf, again in blobs)
    fileio.write_manifest(tmp_path / "m.csv", [("a", 1, "p")])
    files_ok &= fileio.read_manifest(tmp_path / "m.csv") == [("a", 1, "p")]
    checks.append(("file round trips", files_ok, "byte identical"))
    report(3, "identity ladder", checks)


@pytest.mark.slow
def test_criterion_4_toy_learning():
    checks = []
    result = multistream_run(steps=100)
    step = result["joint_target_step"]
    checks.append(("joint stream >= 95% train", step is not None and step <= 500, f"reached at step {step}"))
    sst_top1, sst_steps = sstcn_overfit()
    checks.append(("sstcn overfits 8 samples", sst_top1 == 1.0, f"top-1 {sst_top1:.3f} after {sst_steps} steps"))
    best = max(s["heldout_top1"] for s in result["streams"].values())
    fused = result["fused_top1"]
    streams = ", ".join(f"{k} {v['heldout_top1']:.3f}" for k, v in result["streams"].items())
    checks.append(("fusion >= best - 2%", fused >= best - 0.02, f"fused {fused:.3f} vs best {best:.3f} ({streams})"))
    checks.append(("runtime", result["seconds"] < 900, f"{result['seconds']:.0f}s"))
    report(4, "toy-scale learning", checks)


def test_criterion_5_fusion():
    rng = np.random.default_rng(0)
    checks = []
    exact = True
    for alpha in (RGB_WEIGHTS, RGBD_WEIGHTS):
        mods = [LogitMatrix(f"m{i}", rng.normal(size=(10, 6))) for i in range(len(alpha))]
        want = np.zeros((10, 6))
        for a, m in zip(alpha, mods):
            want = want + a * m.scores
        exact &= np.array_equal(fuse_fixed(mods, alpha), want)
    checks.append(("fixed weights", exact, "exact weighted sums"))

    train, y = complementary_benchmark(rng=np.random.default_rng(10))
    val, yv = complementary_benchmark(rng=np.random.default_rng(11))
    test, yt = complementary_benchmark(rng=np.random.default_rng(12))
    gem, _ = gem_train(train, y, GEMTrainConfig(epochs=60), val=(val, yv), rng=np.random.default_rng(0))
    gem_acc = evaluate(gem_forward(test, gem)[1], yt).top1
    singles = [evaluate(m.scores, yt).top1 for m in test]
    equal = evaluate(fuse_fixed(test, [1, 1]), yt).top1
    checks.append(("gem > every modality", gem_acc > max(singles),
                   f"gem {gem_acc:.3f} vs {', '.join(f'{s:.3f}' for s in singles)}"))
    checks.append(("gem > equal weights", gem_acc > equal, f"gem {gem_acc:.3f} vs {equal:.3f}"))

    mods = [LogitMatrix(f"m{i}", rng.normal(size=(60, 8))) for i in range(4)]
    labels = rng.integers(0, 8, 60)
    base = list(RGB_WEIGHTS)
    sweep = sensitivity_sweep(mods, labels, base, parse_grid("0.0:2.0:0.1"))
    loo_ok = True
    for i in range(4):
        at_zero = [r[2] for r in sweep.rows if r[0] == i and r[1] == 0.0]
        rest = [m for j, m in enumerate(mods) if j != i]
        loo = evaluate(fuse_fixed(rest, [b for j, b in enumerate(base) if j != i]), labels).top1
        loo_ok &= at_zero == [loo]
    checks.append(("sweep at 0 = leave-one-out", loo_ok and len(sweep.rows) == 84, f"{len(sweep.rows)} rows"))
    report(5, "fusion", checks)


def test_criterion_6_metrics():
    rng = np.random.default_rng(0)
    checks = []
    ordered = True
    for _ in range(200):
        k = rng.integers(2, 12)
        logits = rng.integers(-2, 3, (20, k)).astype(float)
        labels = rng.integers(0, k, 20)
        m = evaluate(logits, labels)
        ordered &= m.top1 <= m.top5 and m.per_class_top1 <= m.per_class_top5
    checks.append(("top-1 <= top-5", ordered, "200 random cases with ties"))

    worst = 0.0
    for _ in range(50):
        k, per = rng.integers(2, 9), rng.integers(1, 6)
        labels = np.repeat(np.arange(k), per)
        m = evaluate(rng.normal(size=(len(labels), k)), labels)
        worst = max(worst, abs(m.top1 - m.per_class_top1), abs(m.top5 - m.per_class_top5))
    checks.append(("balanced per-class = per-instance", worst <= 1e-12, f"max diff {worst:.1e}"))

    tied = np.zeros((3, 6))
    hits = topk_hits(tied, np.array([0, 4, 5]), 5)
    first = [evaluate(tied, np.array([0, 1, 2])) for _ in range(3)]
    determinism = (hits.tolist() == [True, True, False] and first[0] == first[1] == first[2]
                   and first[0].top1 == pytest.approx(1 / 3))
    checks.append(("tie-break determinism", determinism, "lowest class index wins"))
    report(6, "metrics", checks)
