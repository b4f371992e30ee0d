import json
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from skelsign import fileio
from skelsign.errors import FormatError, InputError
from skelsign.skeleton import KeypointSequence

f32 = st.floats(-1e6, 1e6, width=32)


def test_keypoint_round_trip(tmp_path, rng):
    pts = np.concatenate([rng.uniform(0, 500, (5, 133, 2)), rng.uniform(0, 1, (5, 133, 1))], -1)
    seq = KeypointSequence(pts.astype(np.float32), (640, 480), rng.uniform(0, 4000, (5, 8, 8)))
    path = tmp_path / "a.kp"
    fileio.write_keypoints(path, seq)
    back = fileio.read_keypoints(path)
    np.testing.assert_array_equal(back.points, seq.points)
    np.testing.assert_array_equal(back.depth, seq.depth.astype(np.float32))
    assert back.frame_size == (640, 480)
    first = path.read_bytes()
    fileio.write_keypoints(tmp_path / "b.kp", back)
    assert (tmp_path / "b.kp").read_bytes() == first
    assert len(first) == 4 + 2 + 5 * 4 + 5 * 133 * 3 * 4


@given(hnp.arrays(np.float32, hnp.array_shapes(max_dims=4, max_side=5), elements=f32))
def test_tensor_round_trip_is_byte_exact(arr):
    buf = fileio.encode_tensor(arr)
    back = fileio.decode_tensor(buf)
    np.testing.assert_array_equal(back, arr)
    assert fileio.encode_tensor(back) == buf


@given(hnp.arrays(np.float32, st.tuples(st.integers(1, 5), st.integers(1, 6)), elements=f32),
       st.text(max_size=10))
def test_logit_round_trip(scores, name):
    ids = [f"id{i}" for i in range(len(scores))]
    lf = fileio.LogitFile(name, scores, ids)
    buf = fileio.encode_logits(lf)
    back = fileio.decode_logits(buf, ids)
    assert back.modality == name and back.ids == lf.ids
    assert fileio.encode_logits(back) == buf


def test_logit_file_with_ids_sidecar(tmp_path, rng):
    lf = fileio.LogitFile("joint", rng.normal(size=(3, 4)), ["a", "b", "c"])
    fileio.write_logits(tmp_path / "x.logits", lf)
    back = fileio.read_logits(tmp_path / "x.logits")
    assert back.ids == ("a", "b", "c")
    with pytest.raises(FormatError):
        fileio.LogitFile("joint", rng.normal(size=(2, 4)), ["a", "a"])


def test_checkpoint_round_trip_and_determinism(tmp_path, rng):
    arrays = {"w": rng.normal(size=(3, 2)), "b": rng.normal(size=2).astype(np.float32)}
    meta = {"step": 7, "model": "slgcn", "config_hash": "abc"}
    buf = fileio.encode_checkpoint(meta, arrays)
    assert fileio.encode_checkpoint(dict(reversed(meta.items())), dict(reversed(arrays.items()))) == buf
    m2, a2 = fileio.decode_checkpoint(buf)
    assert m2 == meta
    for k in arrays:
        np.testing.assert_array_equal(a2[k], arrays[k])
        assert a2[k].dtype == arrays[k].dtype
    assert fileio.encode_checkpoint(m2, a2) == buf


def test_errors_carry_byte_offsets():
    good = fileio.encode_tensor(np.zeros((2, 3), np.float32))
    with pytest.raises(FormatError, match="offset 0"):
        fileio.decode_tensor(b"XXXX" + good[4:])
    bad_version = good[:4] + struct.pack("<H", 9) + good[6:]
    with pytest.raises(FormatError, match="version 9.*offset 4"):
        fileio.decode_tensor(bad_version)
    with pytest.raises(FormatError, match="offset 18"):
        fileio.decode_tensor(good[:-4])
    with pytest.raises(FormatError, match="truncated"):
        fileio.decode_tensor(good[:8])
    kp = fileio.encode_keypoints(np.zeros((1, 133, 3)), (4, 4))
    kp = kp[:14] + struct.pack("<I", 5) + kp[18:]
    with pytest.raises(FormatError, match="channel count 5"):
        fileio.decode_keypoints(kp)


def test_missing_file(tmp_path):
    with pytest.raises(InputError):
        fileio.read_tensor(tmp_path / "nope")


def test_manifest_round_trip(tmp_path):
    rows = [("s1", 3, "p0"), ("s2", 0, "p1")]
    fileio.write_manifest(tmp_path / "m.csv", rows)
    assert fileio.read_manifest(tmp_path / "m.csv") == rows
    (tmp_path / "bad.csv").write_text("id,label\n")
    with pytest.raises(FormatError):
        fileio.read_manifest(tmp_path / "bad.csv")
    (tmp_path / "dup.csv").write_text("sample_id,label,signer_id\na,1,x\na,2,y\n")
    with pytest.raises(FormatError):
        fileio.read_manifest(tmp_path / "dup.csv")


def test_atomic_write_leaves_no_temp_files(tmp_path):
    fileio.atomic_write(tmp_path / "f.bin", b"abc")
    assert [p.name for p in tmp_path.iterdir()] == ["f.bin"]


def test_jsonl_import(tmp_path, rng):
    frames = [rng.uniform(0, 1, (133, 3)).round(4).tolist() for _ in range(3)]
    lines = [json.dumps(frames[0]), json.dumps({"keypoints": frames[1]}), "", json.dumps(frames[2])]
    (tmp_path / "pose.jsonl").write_text("\n".join(lines))
    seq = fileio.import_jsonl(tmp_path / "pose.jsonl", (1, 1))
    np.testing.assert_allclose(seq.points, np.array(frames))
    (tmp_path / "bad.jsonl").write_text(json.dumps([[0, 0, 1]] * 10))
    with pytest.raises(FormatError):
        fileio.import_jsonl(tmp_path / "bad.jsonl", (1, 1))
