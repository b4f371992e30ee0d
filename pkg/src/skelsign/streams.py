"""Joint, bone and motion streams from reduced keypoint sequences.

Working arrays are (T, V, C) frames-major while building; finished streams
are (C, T, V). The channel layout is (x, y, s) or (x, y, z, s): coordinates
first, confidence last.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InputError, ValidationError
from .skeleton import MIRROR_PAIRS, attach_depth, reduce_graph, reduced_graph

STREAM_KINDS = ("joint", "bone", "joint_motion", "bone_motion")


@dataclass
class StreamTensor:
    kind: str
    data: np.ndarray  # (C, T, V)

    def __post_init__(self):
        if self.kind not in STREAM_KINDS:
            raise ValidationError(f"unknown stream kind {self.kind!r}")
        self.data = np.asarray(self.data)
        if self.data.ndim != 3 or self.data.shape[0] not in (3, 4):
            raise ValidationError(f"stream data must be (C=3|4, T, V), got {self.data.shape}")

    @property
    def shape(self):
        return self.data.shape


@dataclass
class AugmentationConfig:
    mirror_prob: float = 0.5
    rotation_range: float = 13.0  # degrees, symmetric
    scale_range: float = 0.1  # scale drawn from [1 - r, 1 + r]
    jitter_std: float = 0.01
    shift_range: float = 0.1
    temporal_sampling: str = "random_window"

    def __post_init__(self):
        if not 0.0 <= self.mirror_prob <= 1.0:
            raise ValidationError(f"mirror_prob must be in [0, 1], got {self.mirror_prob}")
        for name in ("rotation_range", "scale_range", "jitter_std", "shift_range"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")
        if self.temporal_sampling not in ("repeat_tile", "random_window"):
            raise ValidationError(f"unknown temporal_sampling {self.temporal_sampling!r}")

    @classmethod
    def identity(cls):
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, "repeat_tile")


def normalize_coords(points, frame_size):
    """Map pixel x, y to [-1, 1]: x -> 2x/W - 1, y -> 2y/H - 1.

    Points outside the frame are clipped to the boundary. Other channels are
    untouched.
    """
    w, h = frame_size
    out = np.array(points, dtype=np.float64)
    out[..., 0] = np.clip(2.0 * out[..., 0] / w - 1.0, -1.0, 1.0)
    out[..., 1] = np.clip(2.0 * out[..., 1] / h - 1.0, -1.0, 1.0)
    return out


def frame_indices(length, target, train=False, rng=None, random_window=True):
    """Indices realizing a length-``target`` clip from ``length`` frames.

    Short clips repeat cyclically; long clips take a window, centered unless
    training with ``random_window``.
    """
    if length < 1:
        raise InputError("cannot sample frames from an empty sequence")
    if length < target:
        return np.arange(target) % length
    start = (length - target) // 2
    if train and random_window and length > target:
        start = int(rng.integers(0, length - target + 1))
    return np.arange(start, start + target)


def sample_frames(points, target=150, train=False, rng=None, random_window=True):
    idx = frame_indices(len(points), target, train, rng, random_window)
    return np.asarray(points)[idx]


def _coord_channels(points):
    return points.shape[-1] - 1


def mirror(points):
    """Flip horizontally: negate x and swap left/right nodes."""
    out = np.array(points, dtype=np.float64)[:, MIRROR_PAIRS, :]
    out[..., 0] = -out[..., 0]
    return out


def rotate(points, degrees):
    """Counter-clockwise rotation of (x, y) about the origin: (1, 0) -> (0, 1) at 90."""
    theta = np.deg2rad(degrees)
    c, s = np.cos(theta), np.sin(theta)
    out = np.array(points, dtype=np.float64)
    x, y = out[..., 0].copy(), out[..., 1].copy()
    out[..., 0] = c * x - s * y
    out[..., 1] = s * x + c * y
    return out


def augment(points, cfg, rng):
    """Mirror, rotate, scale, shift, then jitter a normalized (T, V, C) clip.

    Confidence is never modified and zero magnitudes are skipped, so the
    identity config returns an exact copy.
    """
    out = np.array(points, dtype=np.float64)
    ncoord = _coord_channels(out)
    if cfg.mirror_prob > 0 and rng.random() < cfg.mirror_prob:
        out = mirror(out)
    if cfg.rotation_range > 0:
        out = rotate(out, rng.uniform(-cfg.rotation_range, cfg.rotation_range))
    if cfg.scale_range > 0:
        out[..., :2] *= rng.uniform(1 - cfg.scale_range, 1 + cfg.scale_range)
    if cfg.shift_range > 0:
        out[..., :2] += rng.uniform(-cfg.shift_range, cfg.shift_range, size=2)
    if cfg.jitter_std > 0:
        out[..., :ncoord] += rng.normal(0.0, cfg.jitter_std, size=out[..., :ncoord].shape)
    return out


def _tree_parents(graph):
    if len(graph.edges) != graph.num_nodes - 1:
        raise ValidationError("bone derivation needs a tree-shaped skeleton")
    parents = graph.parents()
    if any(p == -2 for p in parents):
        raise ValidationError("bone derivation needs a connected skeleton")
    return np.array(parents)


def derive_bones(joints, graph=None):
    """Bone vectors child - parent over the tree rooted at ``graph.root``.

    ``joints`` is (C, T, V) or a joint StreamTensor. The confidence channel
    carries the child's score; the root's coordinates are zero.
    """
    data = joints.data if isinstance(joints, StreamTensor) else np.asarray(joints)
    parents = _tree_parents(graph or reduced_graph())
    ncoord = data.shape[0] - 1
    out = data.astype(np.float64, copy=True)
    has_parent = parents >= 0
    out[:ncoord, :, has_parent] = data[:ncoord, :, has_parent] - data[:ncoord][:, :, parents[has_parent]]
    out[:ncoord, :, ~has_parent] = 0.0
    return StreamTensor("bone", out)


def derive_motion(x):
    """Frame t holds frame t+1 minus frame t on coordinates; last frame zero.

    Confidence is copied from frame t.
    """
    kind = x.kind if isinstance(x, StreamTensor) else "joint"
    data = x.data if isinstance(x, StreamTensor) else np.asarray(x)
    if data.shape[1] < 2:
        raise InputError("motion needs at least two frames")
    ncoord = data.shape[0] - 1
    out = np.zeros(data.shape, dtype=np.float64)
    out[:ncoord, :-1] = data[:ncoord, 1:] - data[:ncoord, :-1]
    out[ncoord] = data[ncoord]
    return StreamTensor(kind.split("_")[0] + "_motion", out)


def build_streams(joints, graph=None):
    """All four streams from a (T, V, C) joint clip."""
    joint = StreamTensor("joint", np.asarray(joints, dtype=np.float64).transpose(2, 0, 1))
    bone = derive_bones(joint, graph)
    return {
        "joint": joint,
        "bone": bone,
        "joint_motion": derive_motion(joint),
        "bone_motion": derive_motion(bone),
    }


def prepare_sequence(seq, mode="2d", frames=150, aug=None, train=False, rng=None):
    """KeypointSequence -> dict of four StreamTensors.

    reduce to 27 nodes -> [attach depth] -> normalize -> sample frames ->
    augment (training only) -> derive bones and motions.
    """
    points = reduce_graph(seq.points)
    if mode == "3d":
        points = attach_depth(points, seq.depth)
    elif mode != "2d":
        raise ValidationError(f"mode must be '2d' or '3d', got {mode!r}")
    points = normalize_coords(points, seq.frame_size)
    random_window = aug is None or aug.temporal_sampling == "random_window"
    points = sample_frames(points, frames, train, rng, random_window)
    if train and aug is not None:
        points = augment(points, aug, rng)
    return build_streams(points)
