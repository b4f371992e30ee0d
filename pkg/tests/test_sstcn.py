import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from skelsign.core import Tensor, grad_check, ops
from skelsign.errors import ConfigError, DimensionError, FormatError
from skelsign.sstcn import (
    FEATURE_JOINTS, SSTCN, SSTCNConfig, channel_shuffle, from_stage1_layout, prepare_features,
    to_stage1_layout,
)
from skelsign.training import smoothed_ce

MINI = dict(num_classes=3, frames=4, joints=4, size=8, stage1_width=8, stage3_width=2, hidden=6, dropout=0.0)


def test_feature_joint_selection():
    assert len(FEATURE_JOINTS) == 33 and len(set(FEATURE_JOINTS.tolist())) == 33
    assert FEATURE_JOINTS[0] == 0
    hands = [j for j in FEATURE_JOINTS if j >= 91]
    assert len(hands) == 22


def test_stage1_layout_index_oracle():
    x = np.arange(2 * 3 * 4 * 5 * 5, dtype=float).reshape(2, 3, 4, 5, 5)
    y = to_stage1_layout(x).data
    for t, j, h, w in [(0, 0, 0, 0), (2, 3, 4, 1), (1, 2, 3, 4)]:
        assert y[1, t, j * 5 + h, w] == x[1, t, j, h, w]


@given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 5))
def test_stage_reshapes_round_trip(n, j, s):
    x = np.random.default_rng(0).normal(size=(n, 2, j, s, s)).astype(np.float32)
    back = from_stage1_layout(to_stage1_layout(x), j).data
    np.testing.assert_array_equal(back, x)


def test_channel_shuffle_order():
    x = np.arange(6.0).reshape(1, 6, 1)
    np.testing.assert_array_equal(channel_shuffle(x, 2).data.ravel(), [0, 3, 1, 4, 2, 5])


@given(hnp.arrays(np.float32, (2, 12, 2), elements=st.floats(-5, 5, width=32)), st.sampled_from([1, 2, 3, 4, 6, 12]))
def test_channel_shuffle_is_a_permutation(x, groups):
    y = channel_shuffle(x, groups).data
    np.testing.assert_array_equal(np.sort(y, axis=1), np.sort(x, axis=1))
    # shuffling with g then with C/g restores the order
    np.testing.assert_array_equal(channel_shuffle(y, 12 // groups).data, x)


def test_untrained_forward_is_finite(rng):
    model = SSTCN(SSTCNConfig(**MINI), rng)
    out = model(rng.uniform(0, 1, (2, 4, 4, 8, 8)))
    assert out.shape == (2, 3) and np.all(np.isfinite(out.data))


def test_full_size_forward(rng):
    model = SSTCN(SSTCNConfig(num_classes=5), rng).eval()
    out = model(rng.uniform(0, 1, (1, 60, 33, 24, 24)).astype(np.float32))
    assert out.shape == (1, 5) and np.all(np.isfinite(out.data))


def test_stage_errors_name_the_stage(rng):
    model = SSTCN(SSTCNConfig(**MINI), rng)
    with pytest.raises(DimensionError, match="stage 0"):
        model(rng.normal(size=(1, 4, 4, 8, 7)))


def test_config_rejects_bad_width():
    with pytest.raises(ConfigError):
        SSTCNConfig(frames=60, stage1_width=90)


def test_full_network_gradient(rng):
    model = SSTCN(SSTCNConfig(**MINI), rng)
    x = rng.uniform(0, 1, (3, 4, 4, 8, 8))
    y = np.array([0, 2, 1])
    err = grad_check(lambda: smoothed_ce(model(Tensor(x)), y), model.parameters(), max_coords=10)
    assert err < 1e-3


def test_dropout_only_in_training(rng):
    model = SSTCN(SSTCNConfig(**{**MINI, "dropout": 0.5}), rng)
    x = rng.uniform(0, 1, (2, 4, 4, 8, 8))
    model.eval()
    np.testing.assert_array_equal(model(x).data, model(x).data)


def test_prepare_features_block_max_oracle(rng):
    raw = rng.uniform(0, 1, (60, 133, 48, 48))
    got = prepare_features(raw)
    sel = raw[:, FEATURE_JOINTS]
    want = np.empty((60, 33, 24, 24))
    for i in range(24):
        for j in range(24):
            want[:, :, i, j] = sel[:, :, 2 * i:2 * i + 2, 2 * j:2 * j + 2].max(axis=(2, 3))
    np.testing.assert_array_equal(got, want)


def test_prepare_features_pure_selection_and_constants(rng):
    raw = rng.uniform(0, 1, (60, 133, 24, 24))
    np.testing.assert_array_equal(prepare_features(raw), raw[:, FEATURE_JOINTS])
    const = np.full((30, 133, 30, 30), 0.25)
    out = prepare_features(const)
    assert out.shape == (60, 33, 24, 24) and np.all(out == 0.25)


def test_prepare_features_rejects_small_maps():
    with pytest.raises(FormatError):
        prepare_features(np.zeros((10, 133, 20, 20)))
