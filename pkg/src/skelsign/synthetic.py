"""Synthetic signing clips: per-class hand trajectories on a whole-body skeleton.

Each class owns a deterministic archetype (movement direction, frequency,
hand coupling, finger curl). Samples add gaussian noise in normalized
coordinates. Positions are built in a [-1, 1] y-up frame and written out as
pixels.
"""
from dataclasses import dataclass

import numpy as np

from .skeleton import NUM_WHOLE_BODY, KeypointSequence

# whole-body body landmarks 0-16 in the y-up frame
_BODY = np.array([
    (0.0, 0.60), (0.06, 0.66), (-0.06, 0.66), (0.12, 0.63), (-0.12, 0.63),
    (0.30, 0.30), (-0.30, 0.30), (0.40, -0.10), (-0.40, -0.10),
    (0.25, -0.35), (-0.25, -0.35), (0.18, -0.60), (-0.18, -0.60),
    (0.20, -0.90), (-0.20, -0.90), (0.20, -0.98), (-0.20, -0.98),
])
_FINGER_ANGLES = np.deg2rad([150.0, 110.0, 90.0, 72.0, 55.0])  # thumb..pinky, left hand
_SEGMENT = 0.035


@dataclass
class SyntheticGestureSpec:
    classes: int = 8
    samples_per_class: int = 20
    frames: int = 32
    noise: float = 0.02
    frame_size: tuple = (512, 512)
    amplitude: float = 0.25


def archetype(c, classes):
    """Deterministic motion parameters of class ``c``; distinct per class."""
    return {
        "direction": np.pi * c / classes,
        "frequency": 1.0 + (c % 3) * 0.5,
        "mirror_right": (c // 3) % 2 == 0,
        "curl": 0.3 + 0.6 * ((c * 5) % classes) / max(classes - 1, 1),
        "phase": 2 * np.pi * c / classes,
    }


def _hand(wrist, curl, side, spin):
    """21 hand points: wrist, then 4 joints per finger from knuckle to tip."""
    pts = [wrist]
    for f, base in enumerate(_FINGER_ANGLES):
        ang = (base if side > 0 else np.pi - base) + spin
        seg = _SEGMENT * (1.0 - 0.5 * curl * (f > 0))
        start = wrist + 2.0 * _SEGMENT * np.array([np.cos(ang), np.sin(ang)])
        for j in range(4):
            pts.append(start + j * seg * np.array([np.cos(ang), np.sin(ang)]))
    return np.array(pts)


def _face(nose):
    theta = np.linspace(0, 2 * np.pi, 68, endpoint=False)
    return nose + np.stack([0.09 * np.cos(theta), 0.11 * np.sin(theta) + 0.02], axis=1)


def clip_positions(c, spec):
    """Noise-free (T, 133, 2) positions in the y-up normalized frame."""
    a = archetype(c, spec.classes)
    t = np.arange(spec.frames) / spec.frames
    wave = np.sin(2 * np.pi * a["frequency"] * t + a["phase"])
    dirv = np.array([np.cos(a["direction"]), np.sin(a["direction"])])
    out = np.zeros((spec.frames, NUM_WHOLE_BODY, 2))
    for k in range(spec.frames):
        body = _BODY.copy()
        offset_l = spec.amplitude * wave[k] * dirv
        offset_r = offset_l * np.array([-1.0, 1.0]) if a["mirror_right"] else -offset_l
        body[9] += offset_l
        body[10] += offset_r
        # elbows follow the wrists half way
        body[7] += 0.5 * offset_l
        body[8] += 0.5 * offset_r
        out[k, :17] = body
        out[k, 17:23] = np.repeat(body[15:17], 3, axis=0)
        out[k, 23:91] = _face(body[0])
        # fingers open and close at a class-specific rate while the hand turns
        curl = a["curl"] * (0.5 + 0.5 * np.sin(2 * np.pi * a["frequency"] * 0.5 * t[k]))
        spin = 0.8 * wave[k] * a["curl"]
        out[k, 91:112] = _hand(body[9], curl, +1, spin)
        out[k, 112:133] = _hand(body[10], curl, -1, -spin)
    return out


def to_pixels(pos, frame_size):
    w, h = frame_size
    px = np.empty_like(pos)
    px[..., 0] = (pos[..., 0] + 1.0) * w / 2.0
    px[..., 1] = (1.0 - pos[..., 1]) * h / 2.0
    return px


def generate_synthetic(spec, rng):
    """Labeled KeypointSequences; class-major order. Returns (sequences, labels)."""
    seqs, labels = [], []
    for c in range(spec.classes):
        base = clip_positions(c, spec)
        for _ in range(spec.samples_per_class):
            pos = base + rng.normal(0.0, spec.noise, base.shape) if spec.noise > 0 else base.copy()
            conf = np.clip(0.9 + (rng.normal(0.0, 0.05, base.shape[:2]) if spec.noise > 0 else 0.0), 0, 1)
            pts = np.concatenate([to_pixels(pos, spec.frame_size), conf[..., None]], axis=-1)
            seqs.append(KeypointSequence(pts, tuple(spec.frame_size)))
            labels.append(c)
    return seqs, np.array(labels)


def synthetic_depth(seq, rng=None, base=2000.0):
    """Depth maps for a sequence: a smooth ramp, nearer toward the bottom."""
    w, h = seq.frame_size
    rows = np.linspace(0, 1, h)[:, None] * np.ones((1, w))
    d = base - 300.0 * rows
    maps = np.repeat(d[None], seq.num_frames, axis=0)
    if rng is not None:
        maps = maps + rng.normal(0, 5.0, maps.shape)
    return maps


def render_heatmaps(points, frame_size, size=48, sigma=1.5):
    """Gaussian heatmaps (T, V, size, size) from (T, V, 3) pixel landmarks,
    scaled by confidence."""
    points = np.asarray(points, dtype=np.float64)
    w, h = frame_size
    grid = np.arange(size) + 0.5
    cx = points[..., 0] / w * size
    cy = points[..., 1] / h * size
    gx = np.exp(-((grid[None, None, :] - cx[..., None]) ** 2) / (2 * sigma ** 2))
    gy = np.exp(-((grid[None, None, :] - cy[..., None]) ** 2) / (2 * sigma ** 2))
    maps = gy[..., :, None] * gx[..., None, :]
    return (maps * points[..., 2, None, None]).astype(np.float32)


def synthetic_features(spec, rng, size=24, frames=60):
    """Heatmap features for a synthetic set: (N, frames, 33, size, size), labels."""
    from .sstcn import prepare_features

    seqs, labels = generate_synthetic(spec, rng)
    feats = [prepare_features(render_heatmaps(s.points, s.frame_size, size), frames, size) for s in seqs]
    return np.stack(feats).astype(np.float32), labels
