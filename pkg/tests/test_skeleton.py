import networkx as nx
import numpy as np
import pytest
from hypothesis import given, strategies as st

from skelsign.errors import FormatError, InputError, ModeError, ValidationError
from skelsign.skeleton import (
    MIRROR_PAIRS, NODE_LABELS, PARENTS, REFERENCE_POSE, SELECTED_INDICES, KeypointSequence,
    SkeletonGraph, attach_depth, build_adjacency, graph_adjacency, hop_distances,
    normalize_adjacency, normalize_depth, reduce_graph, reduced_graph, sample_depth,
)


def nx_adjacency(graph):
    g = nx.Graph()
    g.add_nodes_from(range(graph.num_nodes))
    g.add_edges_from(graph.edges)
    n = graph.num_nodes
    a = np.zeros((n, n))
    for s, lengths in nx.all_pairs_shortest_path_length(g):
        for t, d in lengths.items():
            a[s, t] = d == 1
    return a


def test_reduced_graph_shape():
    g = reduced_graph()
    assert g.num_nodes == 27 and len(g.edges) == 26
    assert len(set(SELECTED_INDICES.tolist())) == 27
    assert sum(lbl.startswith("left_") for lbl in NODE_LABELS) == 13  # eye, shoulder, elbow, 10 hand nodes
    assert sum("thumb" in lbl or "knuckle" in lbl or "tip" in lbl for lbl in NODE_LABELS) == 18


def test_adjacency_matches_bfs_oracle():
    g = reduced_graph()
    np.testing.assert_array_equal(build_adjacency(g), nx_adjacency(g))


@st.composite
def trees(draw):
    n = draw(st.integers(2, 15))
    parents = [draw(st.integers(0, i - 1)) for i in range(1, n)]
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=4))
    edges = [(p, c) for c, p in enumerate(parents, 1)] + [e for e in extra if e[0] != e[1]]
    return SkeletonGraph(n, tuple(edges))


@given(trees())
def test_adjacency_matches_networkx_on_random_graphs(g):
    a = build_adjacency(g)
    np.testing.assert_array_equal(a, nx_adjacency(g))
    np.testing.assert_array_equal(a, a.T)
    assert np.all(np.diag(a) == 0)


@given(trees())
def test_hop_distance_matches_networkx(g):
    ng = nx.Graph(list(g.edges))
    dist = hop_distances(g)
    for s, lengths in nx.all_pairs_shortest_path_length(ng):
        for t, d in lengths.items():
            assert dist[s, t] == d


def test_disconnected_graph_rejected():
    with pytest.raises(ValidationError):
        build_adjacency(SkeletonGraph(3, ((0, 1),)))


def test_self_loop_rejected():
    with pytest.raises(ValidationError):
        SkeletonGraph(2, ((1, 1),))


def test_normalization_on_three_node_path():
    a = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    # degrees of A + I are 2, 3, 2
    r6 = 1 / np.sqrt(6)
    want = np.array([[1 / 2, r6, 0], [r6, 1 / 3, r6], [0, r6, 1 / 2]])
    got = normalize_adjacency(a).full
    np.testing.assert_allclose(got, want, atol=1e-9)


def test_spatial_partition_on_three_node_path():
    a = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    coords = np.array([[-1.0, 0], [0, 0], [1.0, 0]])
    norm = normalize_adjacency(a, "spatial", coords)
    self_, cp, cf = norm.partitions
    r6 = 1 / np.sqrt(6)
    # center node: both neighbors are farther from the center of gravity
    np.testing.assert_allclose(cf[1], [r6, 0, r6], atol=1e-12)
    # end nodes: the center is closer
    assert cp[0, 1] == pytest.approx(r6) and cp[2, 1] == pytest.approx(r6)
    np.testing.assert_allclose(np.diag(self_), [0.5, 1 / 3, 0.5])


def test_partitions_sum_to_full():
    norm = graph_adjacency("spatial")
    assert norm.partitions.shape == (3, 27, 27)
    np.testing.assert_allclose(norm.partitions.sum(axis=0), norm.full, atol=1e-15)
    masks = norm.partitions != 0
    assert masks.sum(axis=0).max() == 1


def test_mirror_pairs_are_an_involution():
    np.testing.assert_array_equal(MIRROR_PAIRS[MIRROR_PAIRS], np.arange(27))
    np.testing.assert_allclose(REFERENCE_POSE[MIRROR_PAIRS] * [-1, 1], REFERENCE_POSE)


def test_parents_form_a_tree_rooted_at_nose():
    assert PARENTS[0] == -1
    assert reduced_graph().parents() == PARENTS


def test_reduce_graph_selects_rows(rng):
    pts = rng.normal(size=(4, 133, 3))
    np.testing.assert_array_equal(reduce_graph(pts), pts[:, SELECTED_INDICES])
    with pytest.raises(FormatError):
        reduce_graph(pts[:, :100])


def test_keypoint_sequence_validation(rng):
    pts = np.full((2, 133, 3), 0.5)
    KeypointSequence(pts, (10, 10))
    bad = pts.copy()
    bad[0, 0, 2] = 1.5
    with pytest.raises(InputError):
        KeypointSequence(bad, (10, 10))
    with pytest.raises(FormatError):
        KeypointSequence(pts[:, :, :2], (10, 10))


def test_sample_depth_nearest_and_hole_fill():
    depth = np.arange(1, 26, dtype=float).reshape(1, 5, 5)
    depth[0, 2, 2] = 0
    pts = np.array([[[1.2, 0.8, 1.0], [2.0, 2.0, 1.0], [9.0, -3.0, 1.0]]])
    z = sample_depth(pts, depth)
    assert z[0, 0] == depth[0, 1, 1]
    # hole at (2, 2): median of the other 24 values
    assert z[0, 1] == np.median(np.delete(np.arange(1, 26), 12))
    assert z[0, 2] == depth[0, 0, 4]


def test_normalize_depth_range():
    z = np.linspace(100, 200, 101)
    out = normalize_depth(z)
    assert out.min() == -1 and out.max() == 1
    np.testing.assert_array_equal(normalize_depth(np.full(5, 7.0)), np.zeros(5))


def test_attach_depth_needs_maps():
    pts = np.zeros((2, 27, 3))
    with pytest.raises(ModeError):
        attach_depth(pts, None)
    out = attach_depth(pts, np.ones((2, 4, 4)))
    assert out.shape == (2, 27, 4)
