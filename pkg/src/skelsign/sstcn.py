"""Separable spatial-temporal convolution network over keypoint heatmap features.

Input per sample: (frames, joints, S, S) heatmaps, 60 x 33 x 24 x 24 by
default.

stage 0  depthwise 3x3 + pointwise 1x1 over joints, per frame

Every conv stage is followed by batch norm before its activation.
stage 1  reshape to (frames, joints*S, S) and mix frames with a 1x1 conv
stage 2  channel shuffle, 3x3 conv in ``frames`` groups
         (residual from the stage-0 input joins here)
stage 3  shuffle to keypoint-major channels, 3x3 conv in ``joints`` groups
stage 4  spatial average pool, hidden FC, classifier FC
"""
from dataclasses import dataclass

import numpy as np

from .core import ops
from .core.nn import BatchNorm, Conv2d, Dropout, Linear, Module
from .core.tensor import as_tensor
from .errors import ConfigError, DimensionError, FormatError
from .skeleton import NUM_WHOLE_BODY
from .streams import frame_indices

# nose; mouth corners and lip centers; shoulders, elbows, wrists; per hand the
# wrist plus knuckle and tip of every finger
FEATURE_JOINTS = np.array(
    [0, 71, 77, 74, 80, 5, 6, 7, 8, 9, 10]
    + [91, 92, 95, 96, 99, 100, 103, 104, 107, 108, 111]
    + [112, 113, 116, 117, 120, 121, 124, 125, 128, 129, 132]
)


@dataclass
class SSTCNConfig:
    num_classes: int = 226
    frames: int = 60
    joints: int = 33
    size: int = 24
    stage1_width: int = 120
    stage3_width: int = 4
    hidden: int = 128
    dropout: float = 0.25

    def __post_init__(self):
        if self.stage1_width % self.frames:
            raise ConfigError(
                f"stage1_width={self.stage1_width} must be a multiple of frames={self.frames}")
        if min(self.frames, self.joints, self.size, self.stage3_width, self.hidden) < 1:
            raise ConfigError("SSTCN sizes must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")


def channel_shuffle(x, groups):
    """(N, C, ...) -> channels reordered as (C/groups, groups) transposed."""
    n, c = x.shape[:2]
    rest = x.shape[2:]
    y = ops.reshape(x, (n, groups, c // groups) + rest)
    perm = (0, 2, 1) + tuple(range(3, 3 + len(rest)))
    return ops.reshape(ops.transpose(y, perm), (n, c) + rest)


def to_stage1_layout(x):
    """(N, F, J, S, S) -> (N, F, J*S, S); element (t, j, h, w) -> (t, j*S + h, w)."""
    n, f, j, h, w = x.shape
    return ops.reshape(x, (n, f, j * h, w))


def from_stage1_layout(x, joints):
    n, f, jh, w = x.shape
    return ops.reshape(x, (n, f, joints, jh // joints, w))


class SSTCN(Module):
    def __init__(self, cfg, rng):
        super().__init__()
        self.cfg = cfg
        f, j, w1, w3 = cfg.frames, cfg.joints, cfg.stage1_width, cfg.stage3_width
        self.depthwise = Conv2d(j, j, 3, rng, groups=j)
        self.pointwise = Conv2d(j, j, 1, rng)
        self.temporal = Conv2d(f, w1, 1, rng)
        self.spatial = Conv2d(w1, w1, 3, rng, groups=f)
        self.residual = Conv2d(f, w1, 1, rng, bias=False) if w1 != f else None
        self.keypoint = Conv2d(j * w1, j * w3, 3, rng, groups=j)
        self.hidden = Linear(j * w3, cfg.hidden, rng)
        self.classifier = Linear(cfg.hidden, cfg.num_classes, rng)
        # batch norm after every conv stage keeps sparse heatmap inputs from
        # shrinking the signal to nothing by stage 4
        self.bn0 = BatchNorm(j)
        self.bn1 = BatchNorm(w1)
        self.bn2 = BatchNorm(w1)
        self.bn3 = BatchNorm(j * w3)
        self.drops = [Dropout(cfg.dropout, rng) for _ in range(5)]

    def _check(self, x):
        c = self.cfg
        want = (c.frames, c.joints, c.size, c.size)
        if x.ndim == 4:
            x = ops.reshape(x, (1,) + x.shape)
        if x.ndim != 5 or x.shape[1:] != want:
            raise DimensionError(f"stage 0: expected input (N,) + {want}, got {x.shape}")
        return x

    def forward(self, x):
        c = self.cfg
        x = self._check(as_tensor(x))
        n, f, j, s = x.shape[0], c.frames, c.joints, c.size
        try:
            y = ops.reshape(x, (n * f, j, s, s))
            y = ops.swish(self.bn0(self.pointwise(self.depthwise(y))))
            y = self.drops[0](ops.reshape(y, (n, f, j, s, s)))
        except DimensionError as e:
            raise DimensionError(f"stage 0: {e}") from e
        skip = to_stage1_layout(x)
        if self.residual is not None:
            skip = self.residual(skip)
        try:
            y = to_stage1_layout(y)
            y = self.drops[1](ops.swish(self.bn1(self.temporal(y))))
        except DimensionError as e:
            raise DimensionError(f"stage 1: {e}") from e
        try:
            y = channel_shuffle(y, f)
            y = self.drops[2](ops.swish(self.bn2(self.spatial(y)) + skip))
        except DimensionError as e:
            raise DimensionError(f"stage 2: {e}") from e
        try:
            y = from_stage1_layout(y, j)  # N, W1, J, S, S
            y = ops.transpose(y, (0, 2, 1, 3, 4))
            y = ops.reshape(y, (n, j * c.stage1_width, s, s))
            y = self.drops[3](ops.swish(self.bn3(self.keypoint(y))))
        except DimensionError as e:
            raise DimensionError(f"stage 3: {e}") from e
        y = ops.mean(y, axis=(2, 3))
        y = self.drops[4](ops.swish(self.hidden(y)))
        return self.classifier(y)


def _adaptive_max(maps, out):
    """Max pool the last two axes to (out, out) with adaptive bins."""
    h, w = maps.shape[-2:]
    rows = [(i * h // out, -(-(i + 1) * h // out)) for i in range(out)]
    cols = [(i * w // out, -(-(i + 1) * w // out)) for i in range(out)]
    if h % out == 0 and w % out == 0:
        bh, bw = h // out, w // out
        return maps.reshape(maps.shape[:-2] + (out, bh, out, bw)).max(axis=(-3, -1))
    res = np.empty(maps.shape[:-2] + (out, out), dtype=maps.dtype)
    for a, (r0, r1) in enumerate(rows):
        for b, (c0, c1) in enumerate(cols):
            res[..., a, b] = maps[..., r0:r1, c0:c1].max(axis=(-2, -1))
    return res


def prepare_features(raw, frames=60, size=24, joints=FEATURE_JOINTS):
    """(T, 133, H, W) heatmaps -> (frames, 33, size, size) feature tensor.

    Selects the joint channels, samples frames uniformly (tiling short clips)
    and max-pools each map to size x size.
    """
    raw = np.asarray(raw)
    if raw.ndim != 4 or raw.shape[1] != NUM_WHOLE_BODY:
        raise FormatError(f"expected (T, {NUM_WHOLE_BODY}, H, W) heatmaps, got {raw.shape}")
    if raw.shape[2] < size or raw.shape[3] < size:
        raise FormatError(f"heatmaps {raw.shape[2:]} smaller than {size}x{size}")
    length = raw.shape[0]
    if length >= frames:
        idx = (np.arange(frames) * length) // frames
    else:
        idx = frame_indices(length, frames)
    sel = raw[idx][:, joints]
    return _adaptive_max(sel, size)
