"""Train one SL-GCN per stream on the 8-class synthetic set and fuse them.

    python scripts/toy_multistream.py --steps 100
"""
import argparse
import json
import logging

from skelsign.synthetic import SyntheticGestureSpec
from skelsign.toy import multistream_run, sstcn_overfit


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--samples", type=int, default=20, help="per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skip-sstcn", action="store_true")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    spec = SyntheticGestureSpec(classes=args.classes, samples_per_class=args.samples)
    result = multistream_run(spec, steps=args.steps, model_seed=args.seed)
    if not args.skip_sstcn:
        top1, steps = sstcn_overfit(model_seed=args.seed)
        result["sstcn"] = {"train_top1": top1, "steps": steps}
    print(json.dumps(result, indent=2))


if __name__ == "__main__":
    main()
