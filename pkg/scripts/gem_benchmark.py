"""Learned ensemble versus fixed fusion on constructed logit benchmarks.

    python scripts/gem_benchmark.py --epochs 60
"""
import argparse

import numpy as np

from skelsign.fusion import GEMTrainConfig, complementary_benchmark, fuse_fixed, gem_forward, gem_train, noise_benchmark
from skelsign.metrics import evaluate


def run(name, make, epochs, seed):
    train, y = make(rng=np.random.default_rng(seed))
    val, yv = make(rng=np.random.default_rng(seed + 1))
    test, yt = make(rng=np.random.default_rng(seed + 2))
    gem, history = gem_train(train, y, GEMTrainConfig(epochs=epochs), val=(val, yv),
                             rng=np.random.default_rng(seed))
    weights, fused = gem_forward(test, gem)
    print(f"== {name}")
    for m in test:
        print(f"  {m.modality:>8}: {evaluate(m.scores, yt).top1:.3f}")
    print(f"  {'equal':>8}: {evaluate(fuse_fixed(test, np.ones(len(test))), yt).top1:.3f}")
    print(f"  {'gem':>8}: {evaluate(fused, yt).top1:.3f}  mean weights {np.round(weights.mean(0), 3)}")
    print("  held-out top-1 by epoch:", " ".join(f"{r['val_top1']:.2f}" for r in history[::10]))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    run("complementary", complementary_benchmark, args.epochs, args.seed)
    run("signal + noise", noise_benchmark, args.epochs, args.seed)


if __name__ == "__main__":
    main()
