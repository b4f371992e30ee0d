"""Command line: synth, prepare, train, infer, fuse, sweep.

Typical run::

    skelsign synth --out data --classes 8 --samples 20
    skelsign prepare data --out prepared
    skelsign train prepared --model slgcn --stream joint --out joint.ckpt
    skelsign infer prepared --model joint.ckpt --out joint.logits
    skelsign fuse joint.logits bone.logits --weights 1,0.9 --labels data/manifest.csv --out fused.logits

Every error class maps to its own exit code (see ``errors``).
"""
import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .config import load_config, parse_config
from .core.tensor import make_rng
from .errors import ConfigError, InputError, SkelSignError
from .fusion import (
    GEM, GEMConfig, GEMTrainConfig, LogitMatrix, fuse_fixed, gem_forward, gem_train, parse_grid,
    sensitivity_sweep,
)
from .metrics import evaluate
from .slgcn import SLGCN
from .sstcn import SSTCN, SSTCNConfig, prepare_features
from .streams import STREAM_KINDS, prepare_sequence
from .synthetic import SyntheticGestureSpec, generate_synthetic, render_heatmaps, synthetic_depth
from .training import SGD, TrainConfig, fit, predict

log = logging.getLogger("skelsign")


def _seed(args, cfg):
    return cfg.train.seed if args.seed is None else args.seed


def _manifest_for(data, explicit=None):
    path = Path(explicit) if explicit else (Path(data) if Path(data).is_dir() else Path(data).parent) / "manifest.csv"
    if not path.exists():
        raise InputError(f"manifest not found: {path}")
    return fileio.read_manifest(path)


# synth

def cmd_synth(args, cfg):
    spec = SyntheticGestureSpec(classes=args.classes, samples_per_class=args.samples, frames=args.frames)
    rng = make_rng(_seed(args, cfg))
    seqs, labels = generate_synthetic(spec, rng)
    out = Path(args.out)
    rows, feats = [], []
    mode = args.mode or cfg.streams.mode
    for i, (seq, label) in enumerate(zip(seqs, labels)):
        sid = f"s{i:05d}"
        if mode == "3d":
            seq = dataclasses.replace(seq, depth=synthetic_depth(seq, rng))
        fileio.write_keypoints(out / f"{sid}.kp", seq)
        rows.append((sid, int(label), f"signer{i % 4}"))
        if args.features:
            size = cfg.sstcn.size
            maps = render_heatmaps(seq.points, seq.frame_size, size)
            feats.append(prepare_features(maps, cfg.sstcn.frames, size))
    fileio.write_manifest(out / "manifest.csv", rows)
    if args.features:
        fileio.write_tensor(out / "features.tensor", np.stack(feats))
    print(f"wrote {len(rows)} sequences to {out}")


# prepare

def cmd_prepare(args, cfg):
    rows = _manifest_for(args.data)
    mode = args.mode or cfg.streams.mode
    streams = {k: [] for k in STREAM_KINDS}
    for sid, _, _ in rows:
        seq = fileio.read_keypoints(Path(args.data) / f"{sid}.kp")
        for kind, st in prepare_sequence(seq, mode, cfg.streams.frames, train=False).items():
            streams[kind].append(st.data)
    out = Path(args.out)
    for kind, items in streams.items():
        fileio.write_tensor(out / f"{kind}.tensor", np.stack(items))
    fileio.write_manifest(out / "manifest.csv", rows)
    print(f"prepared {len(rows)} samples x {len(STREAM_KINDS)} streams in {out}")


# models and checkpoints

def _build(kind, cfg, meta, rng):
    if kind == "slgcn":
        return SLGCN(cfg.slgcn_config(meta["in_channels"], meta["num_classes"]), rng)
    if kind == "sstcn":
        return SSTCN(dataclasses.replace(cfg.sstcn, num_classes=meta["num_classes"]), rng)
    if kind == "gem":
        f = cfg.fusion
        return GEM(GEMConfig(meta["modalities"], meta["num_classes"], f.filters, f.depth, f.weight_mode), rng)
    raise ConfigError(f"unknown model kind {kind!r}")


def load_model(path):
    meta, arrays = fileio.read_checkpoint(path)
    cfg = parse_config(meta["config"])
    model = _build(meta["model"], cfg, meta, make_rng(0))
    model.load_state_dict({k: v for k, v in arrays.items() if not k.startswith("opt:")})
    velocity = [arrays[f"opt:{i}"] for i in range(sum(k.startswith("opt:") for k in arrays))]
    return model.eval(), meta, cfg, velocity


def _save(path, model, meta, opt=None):
    arrays = dict(model.state_dict())
    if opt is not None:
        arrays.update({f"opt:{i}": v for i, v in enumerate(opt.velocity)})
    fileio.write_checkpoint(path, meta, arrays)


def _training_data(args, cfg):
    """-> (kind, x, labels, ids, meta extras)."""
    kind = args.model
    if kind == "slgcn":
        stream = args.stream or "joint"
        x = fileio.read_tensor(Path(args.data[0]) / f"{stream}.tensor")
        rows = _manifest_for(args.data[0], args.labels)
        return x, rows, {"stream": stream, "in_channels": int(x.shape[1])}
    if kind == "sstcn":
        x = fileio.read_tensor(args.data[0])
        return x, _manifest_for(args.data[0], args.labels), {"stream": "sstcn"}
    raise ConfigError(f"unknown model kind {kind!r}")


def _append_report(path, rows):
    with open(path, "a", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")


def cmd_train(args, cfg):
    seed = _seed(args, cfg)
    rng = make_rng(seed)
    report = Path(str(args.out) + ".metrics.jsonl")
    if args.model == "gem":
        return _train_gem(args, cfg, rng, report)
    x, rows, extra = _training_data(args, cfg)
    ids = [r[0] for r in rows]
    if len(ids) != len(x):
        raise InputError(f"{len(x)} samples but {len(ids)} manifest rows")
    y = fileio.labels_for(ids, rows)
    section = cfg.sl_gcn if args.model == "slgcn" else cfg.sstcn
    if y.max() >= section.num_classes:
        raise ConfigError(f"labels reach {y.max()} but the model has {section.num_classes} classes")
    if args.model == "slgcn" and extra["in_channels"] != cfg.sl_gcn.in_channels:
        raise ConfigError(f"data has {extra['in_channels']} channels, config expects {cfg.sl_gcn.in_channels}")
    meta = {"model": args.model, "config": cfg.to_ini(), "config_hash": cfg.digest(),
            "num_classes": section.num_classes, "seed": seed, **extra}
    tcfg = dataclasses.replace(cfg.train, seed=seed)
    start, opt = 0, None
    if args.resume:
        model, old, _, velocity = load_model(args.resume)
        if old["config_hash"] != meta["config_hash"] or old["model"] != args.model:
            raise ConfigError("resume checkpoint was trained with a different config or model")
        model.train()
        start = int(old["step"])
        opt = SGD(model.parameters(), tcfg.lr, tcfg.momentum, tcfg.weight_decay)
        if velocity:
            opt.velocity = [v.astype(p.dtype) for v, p in zip(velocity, opt.params)]
    else:
        model = _build(args.model, cfg, meta, rng)
    history, opt = fit(model, x, y, tcfg, rng, start_step=start, optimizer=opt)
    step = history[-1]["step"] if history else start
    _save(args.out, model, {**meta, "step": step}, opt)
    _append_report(report, history)
    final = evaluate(predict(model, x), y)
    print(json.dumps({"step": step, **final.as_dict()}, sort_keys=True))


def _read_mods(paths):
    files = [fileio.read_logits(p) for p in paths]
    return [LogitMatrix(f.modality, f.scores, f.ids) for f in files]


def _train_gem(args, cfg, rng, report):
    mods = _read_mods(args.data)
    y = fileio.labels_for(mods[0].ids, _manifest_for(args.data[0], args.labels))
    f = cfg.fusion
    meta = {"model": "gem", "config": cfg.to_ini(), "config_hash": cfg.digest(),
            "num_classes": int(mods[0].shape[1]), "modalities": len(mods),
            "names": [m.modality for m in mods]}
    model = _build("gem", cfg, meta, rng)
    tcfg = GEMTrainConfig(f.epochs, f.lr, f.momentum, f.weight_decay, f.batch_size, f.label_smoothing)
    model, history = gem_train(mods, y, tcfg, model=model, rng=rng)
    if f.weight_mode == "global":
        model.calibrate(mods)
    _save(args.out, model, {**meta, "step": f.epochs})
    _append_report(report, history)
    print(json.dumps({"epochs": f.epochs, **evaluate(gem_forward(mods, model)[1], y).as_dict()}, sort_keys=True))


# infer

def cmd_infer(args, cfg):
    if not args.model:
        raise ConfigError("infer needs --model CHECKPOINT")
    model, meta, mcfg, _ = load_model(args.model)
    if meta["model"] == "slgcn":
        stream = args.stream or meta["stream"]
        x = fileio.read_tensor(Path(args.data) / f"{stream}.tensor")
    elif meta["model"] == "sstcn":
        stream = "sstcn"
        x = fileio.read_tensor(args.data)
    else:
        raise ConfigError("infer runs slgcn or sstcn checkpoints; use fuse for gem")
    rows = _manifest_for(args.data, args.labels)
    ids = [r[0] for r in rows]
    if len(ids) != len(x):
        raise InputError(f"{len(x)} samples but {len(ids)} manifest rows")
    labels = [r[1] for r in rows if r[1] is not None]
    if labels and max(labels) >= meta["num_classes"]:
        raise ConfigError(f"labels reach {max(labels)} but the checkpoint has {meta['num_classes']} classes")
    logits = predict(model, x)
    fileio.write_logits(args.out, fileio.LogitFile(stream, logits.astype(np.float32), ids))
    print(f"wrote {len(ids)} x {logits.shape[1]} logits to {args.out}")


# fuse and sweep

def cmd_fuse(args, cfg):
    mods = _read_mods(args.data)
    if args.method == "gem":
        if not args.model:
            raise ConfigError("gem fusion needs --model CHECKPOINT")
        model, meta, _, _ = load_model(args.model)
        _, fused = gem_forward(mods, model)
    else:
        weights = [float(v) for v in args.weights.split(",")] if args.weights else cfg.fusion.weight_values()
        fused = fuse_fixed(mods, weights)
    ids = mods[0].ids
    fileio.write_logits(args.out, fileio.LogitFile("fused", fused.astype(np.float32), ids))
    if args.labels:
        y = fileio.labels_for(ids, fileio.read_manifest(args.labels))
        print(json.dumps(evaluate(fused, y).as_dict(), sort_keys=True))
    else:
        print(f"wrote fused logits to {args.out}")


def cmd_sweep(args, cfg):
    mods = _read_mods(args.data)
    if not args.labels:
        raise InputError("sweep needs --labels MANIFEST")
    y = fileio.labels_for(mods[0].ids, fileio.read_manifest(args.labels))
    base = [float(v) for v in args.weights.split(",")] if args.weights else cfg.fusion.weight_values()
    grid = parse_grid(args.grid or cfg.fusion.grid)
    result = sensitivity_sweep(mods, y, base, grid)
    text = result.to_text()
    if args.out:
        fileio.atomic_write(args.out, text)
    sys.stdout.write(text)
    print("best: " + ", ".join(f"{mods[i].modality}={w:g}" for i, w in result.best.items()))


COMMANDS = {"synth": cmd_synth, "prepare": cmd_prepare, "train": cmd_train,
            "infer": cmd_infer, "fuse": cmd_fuse, "sweep": cmd_sweep}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--seed", type=int, help="overrides [train] seed")
    common.add_argument("--mode", choices=("2d", "3d"), help="overrides [streams] mode")
    common.add_argument("--model", help="model kind for train; checkpoint path for infer and gem fuse")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="skelsign", description=__doc__.split("\n")[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic keypoint dataset")
    s.add_argument("--classes", type=int, default=8)
    s.add_argument("--samples", type=int, default=20, help="samples per class")
    s.add_argument("--frames", type=int, default=32)
    s.add_argument("--features", action="store_true", help="also write heatmap features for sstcn")

    s = sub.add_parser("prepare", parents=[common], help="keypoint files -> four stream tensors")
    s.add_argument("data", help="directory with manifest.csv and .kp files")

    s = sub.add_parser("train", parents=[common], help="train slgcn, sstcn or gem")
    s.add_argument("data", nargs="+", help="prepared dir (slgcn), features file (sstcn) or logit files (gem)")
    s.add_argument("--stream", choices=STREAM_KINDS)
    s.add_argument("--labels", help="manifest with labels (default: manifest.csv beside the data)")
    s.add_argument("--resume", help="checkpoint to continue from")

    s = sub.add_parser("infer", parents=[common], help="eval-mode logits from a checkpoint")
    s.add_argument("data")
    s.add_argument("--stream", choices=STREAM_KINDS)
    s.add_argument("--labels")

    s = sub.add_parser("fuse", parents=[common], help="fuse logit files")
    s.add_argument("data", nargs="+")
    s.add_argument("--method", choices=("fixed", "gem"), default="fixed")
    s.add_argument("--weights", help="comma separated fixed weights")
    s.add_argument("--labels")

    s = sub.add_parser("sweep", parents=[common], help="one-at-a-time fusion weight sensitivity")
    s.add_argument("data", nargs="+")
    s.add_argument("--labels")
    s.add_argument("--weights")
    s.add_argument("--grid", help='"start:stop:step" or comma separated values')
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command in ("synth", "train", "infer", "prepare") and args.out is None:
            raise ConfigError(f"{args.command} needs --out")
        if args.command == "fuse" and args.out is None:
            raise ConfigError("fuse needs --out")
        COMMANDS[args.command](args, cfg)
    except SkelSignError as e:
        print(f"skelsign: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
