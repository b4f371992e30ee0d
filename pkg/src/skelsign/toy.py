"""Desk-scale experiment setups shared by the scripts and the acceptance suite."""
import logging
import time

import numpy as np

from .core.tensor import make_rng
from .metrics import evaluate
from .slgcn import SLGCN, SLGCNConfig, multi_stream_fuse
from .sstcn import SSTCN, SSTCNConfig
from .streams import STREAM_KINDS, prepare_sequence
from .synthetic import SyntheticGestureSpec, generate_synthetic, synthetic_features
from .training import TrainConfig, fit, predict

log = logging.getLogger(__name__)

TOY_SLGCN = dict(num_classes=8, channels=[16] * 10, groups=4)
TOY_SSTCN = dict(num_classes=2, frames=16, size=12, stage1_width=16, dropout=0.0)


def stream_arrays(spec, seed):
    """{stream kind: (N, C, T, V) float32}, labels for a synthetic set."""
    seqs, labels = generate_synthetic(spec, make_rng(seed))
    prepared = [prepare_sequence(s, frames=spec.frames) for s in seqs]
    arrays = {k: np.stack([p[k].data for p in prepared]).astype(np.float32) for k in STREAM_KINDS}
    return arrays, labels


def multistream_run(spec=None, steps=100, train_seed=1, test_seed=2, model_seed=0, target=0.95):
    """Train one SL-GCN per stream on the toy set and fuse held-out logits.

    Returns a dict with per-stream train/held-out top-1, the first evaluated
    step at which the joint stream reached ``target`` train top-1 (None if
    it never did), the fused held-out top-1 and wall time.
    """
    spec = spec or SyntheticGestureSpec()
    train, y = stream_arrays(spec, train_seed)
    test, y_test = stream_arrays(spec, test_seed)
    out = {"streams": {}, "joint_target_step": None}
    logits = []
    start = time.time()
    for kind in STREAM_KINDS:
        model = SLGCN(SLGCNConfig(**TOY_SLGCN), make_rng(model_seed))
        cfg = TrainConfig(steps=steps, batch_size=16, lr=0.05, eval_every=10, seed=model_seed)
        history, _ = fit(model, train[kind], y, cfg)
        if kind == "joint":
            hits = [r["step"] for r in history if r.get("train_top1", 0) >= target]
            out["joint_target_step"] = hits[0] if hits else None
        held = predict(model, test[kind])
        logits.append(held)
        out["streams"][kind] = {"train_top1": history[-1]["train_top1"],
                                "heldout_top1": evaluate(held, y_test).top1}
        log.info("%s: %s", kind, out["streams"][kind])
    out["fused_top1"] = evaluate(multi_stream_fuse(logits), y_test).top1
    out["seconds"] = time.time() - start
    return out


def sstcn_overfit(steps=100, seed=3, model_seed=0):
    """Overfit a miniature SSTCN on 8 synthetic feature samples of 2 classes.

    Returns (final train top-1, steps used).
    """
    cfg = SSTCNConfig(**TOY_SSTCN)
    spec = SyntheticGestureSpec(classes=2, samples_per_class=4, frames=32)
    x, y = synthetic_features(spec, make_rng(seed), size=cfg.size, frames=cfg.frames)
    model = SSTCN(cfg, make_rng(model_seed))
    tcfg = TrainConfig(steps=steps, batch_size=8, lr=0.1, warmup=0, weight_decay=0.0,
                       eval_every=5, target_top1=1.0, seed=model_seed)
    history, _ = fit(model, x, y, tcfg)
    return evaluate(predict(model, x), y).top1, history[-1]["step"]
