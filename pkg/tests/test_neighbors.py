import numpy as np
import pytest

from latentperm import NearestAnchors, QueryCounters, build_index, mean_knn_distance
from conftest import make_set
from oracles import naive_knn_mean


def test_two_anchor_index_norms():
    idx = NearestAnchors().fit([[0.0, 0.0], [1.0, 0.0]])
    assert idx.n_anchors_ == 2
    np.testing.assert_allclose(idx.norms_, [0.0, 1.0])


def test_empty_set_errors():
    with pytest.raises(ValueError, match="empty"):
        build_index(make_set(np.empty((0, 2))))
    with pytest.raises(ValueError, match="at least one row"):
        NearestAnchors().fit(np.empty((0, 3)))


def test_empty_column_selection_errors():
    rset = make_set(np.ones((3, 2)), kinds=["logit", "logit"])
    with pytest.raises(ValueError, match="empty column selection"):
        build_index(rset)


def test_norms_match_independent_recomputation(rng):
    X = rng.standard_normal((1000, 16))
    idx = NearestAnchors().fit(X)
    recomputed = np.sqrt((X**2).sum(axis=1))
    np.testing.assert_allclose(idx.norms_, recomputed, rtol=1e-12)


def test_hand_case_mean_2nn():
    idx = NearestAnchors().fit([[0.0, 0.0], [1.0, 0.0]])
    value = mean_knn_distance(idx, [0.0, 1.0], k=2, measure="l2")
    assert value == pytest.approx((1 + np.sqrt(2)) / 2, abs=1e-9)


def test_query_at_anchor_cosine_zero():
    idx = NearestAnchors().fit([[1.0, 2.0], [3.0, -1.0]])
    assert mean_knn_distance(idx, [1.0, 2.0], k=1, measure="cosine") == pytest.approx(0.0, abs=1e-12)


def test_query_at_anchor_l2_zero_k1():
    idx = NearestAnchors().fit([[1.0, 2.0], [3.0, -1.0]])
    assert mean_knn_distance(idx, [3.0, -1.0], k=1, measure="l2") == 0.0


def test_matches_full_sort_oracle(rng):
    for measure in ("l2", "cosine"):
        anchors = rng.standard_normal((200, 7))
        queries = rng.standard_normal((25, 7))
        idx = NearestAnchors().fit(anchors)
        for k in (1, 5, 17):
            got = idx.mean_distance(queries, k=k, measure=measure)
            kind = "l2" if measure == "l2" else "cosine"
            want = [naive_knn_mean(anchors, q, k, kind) for q in queries]
            np.testing.assert_allclose(got, want, atol=1e-10)


def test_monotone_in_k(rng):
    anchors = rng.standard_normal((60, 4))
    idx = NearestAnchors().fit(anchors)
    q = rng.standard_normal((1, 4))
    values = [idx.mean_distance(q, k=k)[0] for k in range(1, 61)]
    diffs = np.diff(values)
    assert (diffs >= -1e-12).all()


def test_l2_invariant_under_orthogonal_transform(rng):
    anchors = rng.standard_normal((80, 5))
    queries = rng.standard_normal((10, 5))
    Q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    a = NearestAnchors().fit(anchors).mean_distance(queries, k=5)
    b = NearestAnchors().fit(anchors @ Q).mean_distance(queries @ Q, k=5)
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_k_larger_than_anchor_count_clamps_with_counter():
    idx = NearestAnchors().fit([[0.0], [1.0], [2.0]])
    counters = QueryCounters()
    value = mean_knn_distance(idx, [0.0], k=10, counters=counters)
    assert value == pytest.approx((0 + 1 + 2) / 3)
    assert counters.clamped_k == 1


def test_zero_norm_cosine_is_one_with_counter():
    idx = NearestAnchors().fit([[0.0, 0.0], [1.0, 0.0]])
    counters = QueryCounters()
    value = mean_knn_distance(idx, [0.0, 0.0], k=2, measure="cosine", counters=counters)
    # query has zero norm: both anchor pairs fall back to dissimilarity 1.0
    assert value == 1.0
    assert counters.zero_norm == 2


def test_dimension_mismatch():
    idx = NearestAnchors().fit([[0.0, 0.0]])
    with pytest.raises(ValueError, match="dimension"):
        mean_knn_distance(idx, [1.0, 2.0, 3.0], k=1)


def test_tie_break_by_insertion_order():
    # two anchors equidistant from the query; k=1 must pick the first
    idx = NearestAnchors().fit([[1.0, 0.0], [-1.0, 0.0]])
    assert mean_knn_distance(idx, [0.0, 0.0], k=1) == 1.0


def test_build_index_uses_feature_columns():
    rset = make_set(
        np.array([[0.0, 9.0, 0.0], [1.0, 9.0, 0.0]]),
        kinds=["feature", "logit", "feature"],
        column_names=["f0", "l0", "f1"],
    )
    idx = build_index(rset)
    assert idx.anchors_.shape == (2, 2)
    assert idx.source_name_ == "fixture"
    np.testing.assert_allclose(idx.norms_, [0.0, 1.0])


def test_get_params_round_trip():
    idx = NearestAnchors(n_neighbors=7, measure="cosine")
    assert idx.get_params() == {"n_neighbors": 7, "measure": "cosine"}
    idx.set_params(n_neighbors=3)
    assert idx.n_neighbors == 3
