"""One-at-a-time fusion weight sweep over toy logits.

Without logit files, four synthetic modalities of decreasing quality are
generated. With files, pass them plus a manifest holding the labels.

    python scripts/sensitivity_sweep.py --grid 0.0:2.0:0.1
    python scripts/sensitivity_sweep.py a.logits b.logits --labels manifest.csv
"""
import argparse

import numpy as np

from skelsign import fileio
from skelsign.fusion import RGB_WEIGHTS, LogitMatrix, parse_grid, sensitivity_sweep


def toy_modalities(rng, samples=400, classes=20, margins=(3.0, 2.5, 1.5, 1.0)):
    labels = rng.integers(0, classes, samples)
    mods = []
    for i, m in enumerate(margins):
        scores = rng.normal(size=(samples, classes))
        scores[np.arange(samples), labels] += m
        mods.append(LogitMatrix(f"mod{i}", scores))
    return mods, labels


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("logits", nargs="*")
    p.add_argument("--labels")
    p.add_argument("--weights", default=",".join(map(str, RGB_WEIGHTS)))
    p.add_argument("--grid", default="0.0:2.0:0.1")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    if args.logits:
        files = [fileio.read_logits(f) for f in args.logits]
        mods = [LogitMatrix(f.modality, f.scores, f.ids) for f in files]
        labels = fileio.labels_for(files[0].ids, fileio.read_manifest(args.labels))
    else:
        mods, labels = toy_modalities(np.random.default_rng(args.seed))
    base = [float(w) for w in args.weights.split(",")]
    result = sensitivity_sweep(mods, labels, base, parse_grid(args.grid))
    print(result.to_text(), end="")
    for i, w in result.best.items():
        print(f"best weight for {mods[i].modality}: {w:g}")


if __name__ == "__main__":
    main()
