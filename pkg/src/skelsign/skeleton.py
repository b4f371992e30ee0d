"""Whole-body keypoint graph: 133 -> 27 node reduction, adjacency, and depth.

Landmark indices follow the COCO-WholeBody layout (body 0-16, feet 17-22,
face 23-90, left hand 91-111, right hand 112-132). "Left" is the signer's
left.
"""
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InputError, ModeError, ValidationError

NUM_WHOLE_BODY = 133

# (label, whole-body index, parent label). Parent None marks the root.
# Ten nodes per hand: wrist, thumb tip, then knuckle and tip for each of the
# index, middle, ring and pinky fingers.
NODE_TABLE = (
    ("nose", 0, None),
    ("left_eye", 1, "nose"),
    ("right_eye", 2, "nose"),
    ("left_shoulder", 5, "nose"),
    ("right_shoulder", 6, "nose"),
    ("left_elbow", 7, "left_shoulder"),
    ("right_elbow", 8, "right_shoulder"),
    ("left_wrist", 91, "left_elbow"),
    ("left_thumb_tip", 95, "left_wrist"),
    ("left_index_knuckle", 96, "left_wrist"),
    ("left_index_tip", 99, "left_index_knuckle"),
    ("left_middle_knuckle", 100, "left_wrist"),
    ("left_middle_tip", 103, "left_middle_knuckle"),
    ("left_ring_knuckle", 104, "left_wrist"),
    ("left_ring_tip", 107, "left_ring_knuckle"),
    ("left_pinky_knuckle", 108, "left_wrist"),
    ("left_pinky_tip", 111, "left_pinky_knuckle"),
    ("right_wrist", 112, "right_elbow"),
    ("right_thumb_tip", 116, "right_wrist"),
    ("right_index_knuckle", 117, "right_wrist"),
    ("right_index_tip", 120, "right_index_knuckle"),
    ("right_middle_knuckle", 121, "right_wrist"),
    ("right_middle_tip", 124, "right_middle_knuckle"),
    ("right_ring_knuckle", 125, "right_wrist"),
    ("right_ring_tip", 128, "right_ring_knuckle"),
    ("right_pinky_knuckle", 129, "right_wrist"),
    ("right_pinky_tip", 132, "right_pinky_knuckle"),
)

NODE_LABELS = tuple(row[0] for row in NODE_TABLE)
SELECTED_INDICES = np.array([row[1] for row in NODE_TABLE])
_POS = {label: i for i, label in enumerate(NODE_LABELS)}
PARENTS = tuple(_POS[p] if p is not None else -1 for _, _, p in NODE_TABLE)


def _mirror_partner(label):
    if label.startswith("left_"):
        return _POS["right_" + label[5:]]
    if label.startswith("right_"):
        return _POS["left_" + label[6:]]
    return _POS[label]


MIRROR_PAIRS = np.array([_mirror_partner(lbl) for lbl in NODE_LABELS])

# Canonical upright pose (x right = signer's left, y up) used only to split
# neighborhoods by distance to the center of gravity.
_HALF_TEMPLATE = {
    "nose": (0.0, 0.60), "eye": (0.06, 0.66), "shoulder": (0.30, 0.30),
    "elbow": (0.40, -0.10), "wrist": (0.25, -0.35), "thumb_tip": (0.18, -0.30),
    "index_knuckle": (0.24, -0.27), "index_tip": (0.22, -0.18),
    "middle_knuckle": (0.27, -0.27), "middle_tip": (0.27, -0.17),
    "ring_knuckle": (0.30, -0.27), "ring_tip": (0.31, -0.18),
    "pinky_knuckle": (0.33, -0.28), "pinky_tip": (0.35, -0.21),
}


def _template():
    out = []
    for label in NODE_LABELS:
        side, _, part = label.partition("_")
        if side == "left":
            out.append(_HALF_TEMPLATE[part])
        elif side == "right":
            x, y = _HALF_TEMPLATE[part]
            out.append((-x, y))
        else:
            out.append(_HALF_TEMPLATE[label])
    return np.array(out)


REFERENCE_POSE = _template()


@dataclass(frozen=True)
class SkeletonGraph:
    num_nodes: int
    edges: tuple
    labels: tuple = ()
    root: int = 0
    coords: np.ndarray = field(default=None, compare=False)

    def __post_init__(self):
        edges = set()
        for i, j in self.edges:
            if i == j:
                raise ValidationError(f"self-loop at node {i}")
            if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
                raise ValidationError(f"edge ({i}, {j}) outside 0..{self.num_nodes - 1}")
            edges.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", tuple(sorted(edges)))

    def neighbors(self):
        nbrs = [[] for _ in range(self.num_nodes)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return nbrs

    def parents(self):
        """Parent of every node in the BFS tree from ``root`` (-1 at the root)."""
        parent = [-2] * self.num_nodes
        parent[self.root] = -1
        queue = deque([self.root])
        nbrs = self.neighbors()
        while queue:
            u = queue.popleft()
            for v in nbrs[u]:
                if parent[v] == -2:
                    parent[v] = u
                    queue.append(v)
        return tuple(parent)


def reduced_graph():
    """The 27-node signing skeleton as a tree rooted at the nose."""
    edges = tuple((p, c) for c, p in enumerate(PARENTS) if p >= 0)
    return SkeletonGraph(len(NODE_TABLE), edges, NODE_LABELS, root=0, coords=REFERENCE_POSE)


def hop_distances(graph):
    """All-pairs shortest path lengths by BFS; unreachable pairs are -1."""
    n = graph.num_nodes
    nbrs = graph.neighbors()
    dist = np.full((n, n), -1, dtype=int)
    for s in range(n):
        dist[s, s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in nbrs[u]:
                if dist[s, v] < 0:
                    dist[s, v] = dist[s, u] + 1
                    queue.append(v)
    return dist


def build_adjacency(graph):
    """Binary adjacency: A[i, j] = 1 iff the hop distance between i and j is 1."""
    dist = hop_distances(graph)
    if (dist < 0).any():
        raise ValidationError("skeleton graph is not connected")
    return (dist == 1).astype(np.float64)


@dataclass
class NormalizedAdjacency:
    """Symmetric normalized adjacency split into spatial partitions.

    ``partitions`` has shape (K, V, V) and sums to ``full``.
    """
    partitions: np.ndarray
    full: np.ndarray
    strategy: str = "spatial"

    @property
    def num_partitions(self):
        return self.partitions.shape[0]


def normalize_adjacency(A, strategy="uniform", coords=None):
    """D^-1/2 (A + I) D^-1/2, optionally split into self / centripetal /
    centrifugal subsets.

    ``strategy="spatial"`` needs node ``coords``; a neighbor j of node i is
    centripetal if it is closer than i to the center of gravity (mean of
    coords), centrifugal if farther, and joins the self subset on a tie.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"adjacency must be square, got {A.shape}")
    if not np.array_equal(A, A.T) or np.any(np.diag(A) != 0):
        raise ValidationError("adjacency must be symmetric with a zero diagonal")
    A_hat = A + np.eye(len(A))
    d = A_hat.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    full = inv_sqrt[:, None] * A_hat * inv_sqrt[None, :]
    if strategy == "uniform":
        return NormalizedAdjacency(full[None].copy(), full, strategy)
    if strategy != "spatial":
        raise ValidationError(f"unknown partition strategy {strategy!r}")
    if coords is None:
        raise ValidationError("spatial partitioning needs node coordinates")
    coords = np.asarray(coords, dtype=np.float64)
    r = np.linalg.norm(coords - coords.mean(axis=0), axis=1)
    closer = r[None, :] < r[:, None] - 1e-12
    farther = r[None, :] > r[:, None] + 1e-12
    mask_cp = (A > 0) & closer
    mask_cf = (A > 0) & farther
    mask_self = (A_hat > 0) & ~mask_cp & ~mask_cf
    parts = np.stack([full * mask_self, full * mask_cp, full * mask_cf])
    return NormalizedAdjacency(parts, full, strategy)


def graph_adjacency(strategy="spatial"):
    """Normalized adjacency of the 27-node skeleton."""
    g = reduced_graph()
    return normalize_adjacency(build_adjacency(g), strategy, g.coords)


@dataclass
class KeypointSequence:
    """Per-frame whole-body landmarks.

    ``points``: (T, 133, 3) array of (x, y, s) in pixels; ``frame_size``:
    (W, H); ``depth``: optional (T, H, W) depth maps.
    """
    points: np.ndarray
    frame_size: tuple
    depth: np.ndarray = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 3 or self.points.shape[1:] != (NUM_WHOLE_BODY, 3):
            raise FormatError(
                f"expected (T, {NUM_WHOLE_BODY}, 3) landmarks, got {self.points.shape}")
        s = self.points[..., 2]
        if np.any(s < 0) or np.any(s > 1):
            raise InputError("confidence scores must lie in [0, 1]")
        if self.depth is not None:
            self.depth = np.asarray(self.depth, dtype=np.float64)
            if self.depth.ndim != 3 or self.depth.shape[0] != len(self.points):
                raise FormatError(f"depth maps {self.depth.shape} do not match {len(self.points)} frames")

    @property
    def num_frames(self):
        return len(self.points)


def reduce_graph(points):
    """Select the 27 signing nodes from (T, 133, C) landmarks -> (T, 27, C)."""
    if isinstance(points, KeypointSequence):
        points = points.points
    points = np.asarray(points)
    if points.ndim != 3 or points.shape[1] != NUM_WHOLE_BODY:
        raise FormatError(f"expected {NUM_WHOLE_BODY} landmarks per frame, got shape {points.shape}")
    return points[:, SELECTED_INDICES, :].copy()


def _fill_hole(frame, row, col, radius=2):
    h, w = frame.shape
    win = frame[max(row - radius, 0):min(row + radius + 1, h),
                max(col - radius, 0):min(col + radius + 1, w)]
    valid = win[win != 0]
    return float(np.median(valid)) if valid.size else 0.0


def sample_depth(points, depth):
    """Raw depth under each landmark: nearest pixel with clamping to the map;
    zero (masked) pixels fall back to the median of nonzero values in the
    5x5 neighborhood, else 0. Returns (T, V)."""
    points = np.asarray(points, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    t_count, v_count = points.shape[:2]
    h, w = depth.shape[1:]
    cols = np.clip(np.rint(points[..., 0]).astype(int), 0, w - 1)
    rows = np.clip(np.rint(points[..., 1]).astype(int), 0, h - 1)
    z = depth[np.arange(t_count)[:, None], rows, cols]
    for t, v in zip(*np.nonzero(z == 0)):
        z[t, v] = _fill_hole(depth[t], rows[t, v], cols[t, v])
    return z


def normalize_depth(z, lo_pct=1.0, hi_pct=99.0):
    """Scale depths to [-1, 1] using robust per-sequence percentiles.

    Percentiles are taken over nonzero samples; a degenerate range maps
    everything to 0.
    """
    z = np.asarray(z, dtype=np.float64)
    valid = z[z != 0]
    if valid.size == 0:
        return np.zeros_like(z)
    lo, hi = np.percentile(valid, [lo_pct, hi_pct])
    if hi - lo < 1e-12:
        return np.zeros_like(z)
    return np.clip(2.0 * (z - lo) / (hi - lo) - 1.0, -1.0, 1.0)


def attach_depth(points, depth, normalize=True):
    """(T, V, 3) (x, y, s) landmarks + (T, H, W) depth -> (T, V, 4) (x, y, z, s)."""
    if depth is None:
        raise ModeError("no depth maps available; use the 2d pipeline")
    points = np.asarray(points, dtype=np.float64)
    depth = np.asarray(depth)
    if depth.ndim != 3 or depth.shape[0] != points.shape[0]:
        raise ModeError(f"depth maps {depth.shape} do not cover {points.shape[0]} frames")
    z = sample_depth(points, depth)
    if normalize:
        z = normalize_depth(z)
    return np.concatenate([points[..., :2], z[..., None], points[..., 2:3]], axis=-1)
