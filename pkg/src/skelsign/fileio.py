"""Binary file formats and text manifests.

All binary formats are little-endian with a 4-byte magic and a uint16
version. Bodies are float32 unless stated otherwise.

keypoints  b"SKKP" v1: T, landmarks, channels, W, H (uint32) + T*L*C float32
tensor     b"SKTN" v1: ndim (uint32), dims (uint32 each) + float32 body
logits     b"SKLG" v1: name length (uint16), utf-8 name, S, C (uint32)
           + S*C float32; row ids live in a ``.ids`` text sidecar
checkpoint b"SKCK" v1: header length (uint32), JSON header, then raw arrays
           at the offsets the header lists

Writes go to a temporary file in the target directory and are renamed into
place, so readers never see half-written files.
"""
import csv
import io
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError
from .skeleton import NUM_WHOLE_BODY, KeypointSequence

VERSION = 1
KEYPOINT_MAGIC = b"SKKP"
TENSOR_MAGIC = b"SKTN"
LOGIT_MAGIC = b"SKLG"
CHECKPOINT_MAGIC = b"SKCK"
MANIFEST_FIELDS = ("sample_id", "label", "signer_id")


def atomic_write(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data if isinstance(data, bytes) else data.encode("utf-8"))
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    """Cursor over a byte string that reports offsets in its errors."""

    def __init__(self, buf, what):
        self.buf, self.pos, self.what = buf, 0, what

    def take(self, n, field):
        if self.pos + n > len(self.buf):
            raise FormatError(f"{self.what}: truncated while reading {field}", self.pos)
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u16(self, field):
        return struct.unpack("<H", self.take(2, field))[0]

    def u32(self, field):
        return struct.unpack("<I", self.take(4, field))[0]

    def header(self, magic):
        got = self.take(4, "magic")
        if got != magic:
            raise FormatError(f"{self.what}: bad magic {got!r}, expected {magic!r}", 0)
        version = self.u16("version")
        if version != VERSION:
            raise FormatError(f"{self.what}: unsupported version {version}", 4)

    def body(self, shape, dtype="<f4"):
        count = int(np.prod(shape, dtype=np.int64))
        size = count * np.dtype(dtype).itemsize
        remaining = len(self.buf) - self.pos
        if remaining != size:
            raise FormatError(
                f"{self.what}: body is {remaining} bytes, expected {size} for shape {tuple(shape)}", self.pos)
        arr = np.frombuffer(self.buf, dtype=dtype, count=count, offset=self.pos).reshape(shape)
        self.pos += size
        return arr.astype(np.float32)


def _read_bytes(path):
    try:
        return Path(path).read_bytes()
    except FileNotFoundError as e:
        raise InputError(f"no such file: {path}") from e


def _f32(arr):
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


# keypoints

def encode_keypoints(points, frame_size):
    points = np.asarray(points)
    if points.ndim != 3 or points.shape[2] not in (3, 4):
        raise FormatError(f"keypoints must be (T, landmarks, 3|4), got {points.shape}")
    w, h = (int(v) for v in frame_size)
    head = KEYPOINT_MAGIC + struct.pack("<H5I", VERSION, *points.shape, w, h)
    return head + _f32(points)


def decode_keypoints(buf, what="keypoint file"):
    """-> (points float32 (T, L, C), (W, H))."""
    r = _Reader(buf, what)
    r.header(KEYPOINT_MAGIC)
    t, landmarks, channels = r.u32("frames"), r.u32("landmarks"), r.u32("channels")
    if channels not in (3, 4):
        raise FormatError(f"{what}: channel count {channels} not in (3, 4)", r.pos - 4)
    w, h = r.u32("width"), r.u32("height")
    return r.body((t, landmarks, channels)), (w, h)


def write_keypoints(path, seq):
    """KeypointSequence (or (points, frame_size)) -> file; depth goes to a
    ``.depth`` sidecar when present."""
    if isinstance(seq, KeypointSequence):
        atomic_write(path, encode_keypoints(seq.points, seq.frame_size))
        if seq.depth is not None:
            write_tensor(depth_path(path), seq.depth)
    else:
        atomic_write(path, encode_keypoints(*seq))


def depth_path(path):
    return Path(str(path) + ".depth")


def read_keypoints(path, with_depth=True):
    points, size = decode_keypoints(_read_bytes(path), str(path))
    if points.shape[1:] != (NUM_WHOLE_BODY, 3):
        raise FormatError(f"{path}: expected {NUM_WHOLE_BODY} landmarks x 3 channels, got {points.shape[1:]}", 10)
    depth = None
    if with_depth and depth_path(path).exists():
        depth = read_tensor(depth_path(path))
    return KeypointSequence(points, size, depth)


# generic tensors

def encode_tensor(arr):
    arr = np.asarray(arr)
    return TENSOR_MAGIC + struct.pack(f"<HI{arr.ndim}I", VERSION, arr.ndim, *arr.shape) + _f32(arr)


def decode_tensor(buf, what="tensor file"):
    r = _Reader(buf, what)
    r.header(TENSOR_MAGIC)
    ndim = r.u32("ndim")
    shape = tuple(r.u32(f"dim {i}") for i in range(ndim))
    return r.body(shape)


def write_tensor(path, arr):
    atomic_write(path, encode_tensor(arr))


def read_tensor(path):
    return decode_tensor(_read_bytes(path), str(path))


# logits

@dataclass
class LogitFile:
    modality: str
    scores: np.ndarray  # (S, C) float32
    ids: tuple

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float32)
        self.ids = tuple(str(i) for i in self.ids)
        if self.scores.ndim != 2 or len(self.ids) != len(self.scores):
            raise FormatError(f"{self.modality}: {len(self.ids)} ids for scores {self.scores.shape}")
        if len(set(self.ids)) != len(self.ids):
            raise FormatError(f"{self.modality}: sample ids are not unique")


def encode_logits(lf):
    name = lf.modality.encode("utf-8")
    head = LOGIT_MAGIC + struct.pack("<HH", VERSION, len(name)) + name
    return head + struct.pack("<II", *lf.scores.shape) + _f32(lf.scores)


def decode_logits(buf, ids=None, what="logit file"):
    r = _Reader(buf, what)
    r.header(LOGIT_MAGIC)
    n = r.u16("name length")
    name = r.take(n, "modality name").decode("utf-8")
    s, c = r.u32("samples"), r.u32("classes")
    scores = r.body((s, c))
    if ids is None:
        ids = [str(i) for i in range(s)]
    return LogitFile(name, scores, ids)


def ids_path(path):
    return Path(str(path) + ".ids")


def write_logits(path, lf):
    atomic_write(path, encode_logits(lf))
    atomic_write(ids_path(path), "".join(f"{i}\n" for i in lf.ids))


def read_logits(path):
    ids = None
    if ids_path(path).exists():
        ids = ids_path(path).read_text(encoding="utf-8").splitlines()
    lf = decode_logits(_read_bytes(path), ids, str(path))
    return lf


# manifests

def write_manifest(path, rows):
    """rows: iterable of (sample_id, label, signer_id)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_FIELDS)
    for row in rows:
        w.writerow(row)
    atomic_write(path, buf.getvalue())


def read_manifest(path):
    """-> list of (sample_id, label or None, signer_id)."""
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != MANIFEST_FIELDS:
        raise FormatError(f"{path}: manifest header must be {','.join(MANIFEST_FIELDS)}", 0)
    rows = []
    for line, row in enumerate(reader, 2):
        if len(row) != 3:
            raise FormatError(f"{path}: line {line} has {len(row)} fields")
        sid, label, signer = row
        try:
            rows.append((sid, int(label) if label != "" else None, signer))
        except ValueError as e:
            raise FormatError(f"{path}: line {line} label {label!r} is not an integer") from e
    ids = [r[0] for r in rows]
    if len(set(ids)) != len(ids):
        raise FormatError(f"{path}: duplicate sample ids")
    return rows


def labels_for(ids, manifest_rows):
    table = {sid: label for sid, label, _ in manifest_rows}
    missing = [i for i in ids if i not in table or table[i] is None]
    if missing:
        raise InputError(f"no labels for samples {missing[:5]}")
    return np.array([table[i] for i in ids])


# checkpoints

def encode_checkpoint(meta, arrays):
    """Deterministic bytes: sorted array names, sorted JSON keys."""
    entries, offset = [], 0
    blobs = []
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        dtype = "<f8" if arr.dtype == np.float64 else "<f4"
        blob = np.ascontiguousarray(arr, dtype=dtype).tobytes()
        entries.append({"name": name, "dtype": dtype, "shape": list(arr.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"meta": meta, "arrays": entries}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return CHECKPOINT_MAGIC + struct.pack("<HI", VERSION, len(header)) + header + b"".join(blobs)


def decode_checkpoint(buf, what="checkpoint"):
    """-> (meta dict, {name: array})."""
    r = _Reader(buf, what)
    r.header(CHECKPOINT_MAGIC)
    n = r.u32("header length")
    start = r.pos
    try:
        header = json.loads(r.take(n, "header").decode("utf-8"))
        entries = header["arrays"]
    except (ValueError, KeyError) as e:
        raise FormatError(f"{what}: unreadable header: {e}", start) from e
    base = r.pos
    arrays = {}
    for e in entries:
        dtype = np.dtype(e["dtype"])
        count = int(np.prod(e["shape"], dtype=np.int64))
        lo = base + e["offset"]
        if lo + count * dtype.itemsize > len(buf):
            raise FormatError(f"{what}: array {e['name']} runs past the end of the file", lo)
        arrays[e["name"]] = np.frombuffer(buf, dtype=dtype, count=count, offset=lo).reshape(e["shape"]).copy()
    return header["meta"], arrays


def write_checkpoint(path, meta, arrays):
    atomic_write(path, encode_checkpoint(meta, arrays))


def read_checkpoint(path):
    return decode_checkpoint(_read_bytes(path), str(path))


# third-party pose output

def import_jsonl(path, frame_size):
    """JSON lines, one frame per line: a list of 133 [x, y, s] triples or an
    object whose "keypoints" field holds that list."""
    frames = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except ValueError as e:
            raise FormatError(f"{path}: line {line_no} is not JSON: {e}") from e
        pts = obj["keypoints"] if isinstance(obj, dict) else obj
        arr = np.asarray(pts, dtype=np.float64)
        if arr.shape != (NUM_WHOLE_BODY, 3):
            raise FormatError(f"{path}: line {line_no} holds {arr.shape} keypoints, expected ({NUM_WHOLE_BODY}, 3)")
        frames.append(arr)
    if not frames:
        raise FormatError(f"{path}: no frames")
    return KeypointSequence(np.stack(frames), tuple(frame_size))
