import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from skelsign.errors import InputError
from skelsign.metrics import evaluate, topk_hits


@st.composite
def scored(draw):
    n = draw(st.integers(1, 30))
    k = draw(st.integers(2, 12))
    logits = draw(hnp.arrays(np.float64, (n, k), elements=st.sampled_from([-1.0, 0.0, 0.5, 2.0])))
    labels = np.array(draw(st.lists(st.integers(0, k - 1), min_size=n, max_size=n)))
    return logits, labels


@given(scored())
def test_top1_never_exceeds_top5(case):
    m = evaluate(*case)
    assert m.top1 <= m.top5 and m.per_class_top1 <= m.per_class_top5


@given(st.integers(2, 8), st.integers(1, 6), st.integers(0, 2 ** 31))
def test_per_class_equals_per_instance_on_balanced_labels(k, per, seed):
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(k), per)
    logits = rng.normal(size=(len(labels), k))
    m = evaluate(logits, labels)
    assert abs(m.top1 - m.per_class_top1) < 1e-12
    assert abs(m.top5 - m.per_class_top5) < 1e-12


def test_ties_go_to_lowest_index():
    logits = np.array([[1.0, 1.0, 0.0], [0.0, 2.0, 2.0]])
    np.testing.assert_array_equal(topk_hits(logits, np.array([0, 1]), 1), [True, True])
    np.testing.assert_array_equal(topk_hits(logits, np.array([1, 2]), 1), [False, False])


@given(scored())
def test_evaluation_is_deterministic(case):
    assert evaluate(*case) == evaluate(*case)


def test_imbalanced_per_class():
    logits = np.eye(2)[[0, 0, 0, 1]]
    labels = np.array([0, 0, 0, 0])
    labels[-1] = 1
    logits[-1] = [1, 0]
    m = evaluate(logits, labels)
    assert m.top1 == 0.75 and m.per_class_top1 == 0.5


def test_bad_inputs():
    with pytest.raises(InputError):
        evaluate(np.zeros((0, 3)), np.zeros(0))
    with pytest.raises(InputError):
        evaluate(np.zeros((2, 3)), np.zeros(3))
