import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dscsrgm.corpus import from_counts
from dscsrgm.errors import NoValidLag, Undefined
from dscsrgm.similarity import (
    SimilarityMatrix, build_matrix, cluster_and_select, cross_correlation_at_lag,
    kmeans, similarity,
)

from oracles import brute_cc, brute_similarity

series = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=3, max_size=12)


def test_self_correlation():
    x = [1.0, 4.0, 2.0, 8.0]
    assert cross_correlation_at_lag(x, x, 0) == pytest.approx(1.0, abs=1e-15)


def test_affine_at_zero_lag():
    x = np.array([1.0, 3.0, 2.0, 7.0, 5.0])
    assert cross_correlation_at_lag(x, 5 * x + 3, 0) == pytest.approx(1.0, abs=1e-12)


def test_ramp_alignment():
    # at lag -1, x[1:] = [2, 3, 4] pairs with y = [3, 4, 5]
    x = [1.0, 2.0, 3.0, 4.0]
    y = [3.0, 4.0, 5.0]
    assert cross_correlation_at_lag(x, y, -1) == pytest.approx(1.0, abs=1e-12)
    assert cross_correlation_at_lag(x, y, -1) == pytest.approx(brute_cc(x, y, -1), abs=1e-15)


@pytest.mark.parametrize("x, y, tau", [
    ([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], 1),
    ([1.0, 1.0, 1.0, 2.0], [1.0, 2.0, 3.0, 4.0], 1),
])
def test_undefined_lags(x, y, tau):
    with pytest.raises(Undefined):
        cross_correlation_at_lag(x, y, tau)


def test_similarity_shifted_copy():
    x = np.array([0.0, 1.0, 5.0, 2.0, 8.0, 3.0, 9.0])
    shifted = np.concatenate([[4.0, -2.0], x[:5]])
    assert similarity(x, shifted) == pytest.approx(1.0, abs=1e-12)
    assert similarity(x, x) == pytest.approx(1.0, abs=1e-15)


def test_constant_series_has_no_valid_lag():
    with pytest.raises(NoValidLag):
        similarity([2.0] * 8, [1.0, 2.0, 3.0, 4.0])
    with pytest.raises(NoValidLag):
        similarity([1.0, 2.0], [1.0, 2.0, 3.0])


def test_random_pairs_match_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = rng.normal(size=rng.integers(3, 13))
        y = rng.normal(size=rng.integers(3, 13))
        assert similarity(x, y) == pytest.approx(brute_similarity(list(x), list(y)), abs=1e-12)


@given(series, series)
@settings(max_examples=200, deadline=None)
def test_oracle_property(x, y):
    expected = brute_similarity(x, y)
    if expected is None:
        with pytest.raises(NoValidLag):
            similarity(x, y)
    else:
        assert abs(similarity(x, y) - expected) < 1e-9
        assert abs(similarity(x, y) - similarity(y, x)) < 1e-12


@given(series, series, st.floats(0.01, 100), st.floats(-100, 100))
@settings(max_examples=150, deadline=None)
def test_affine_invariance(x, y, scale, shift):
    x = np.array(x)
    # keep clearly non-degenerate inputs so rounding cannot flip a lag to constant
    if np.ptp(x) < 1e-3 or np.ptp(y) < 1e-3:
        return
    try:
        base = similarity(x, y)
    except NoValidLag:
        return
    assert abs(similarity(scale * x + shift, y) - base) < 1e-9


def pool_of(*arrays):
    return [from_counts(f"s{i}", np.maximum.accumulate(np.abs(a))) for i, a in enumerate(arrays)]


def test_build_matrix_structure():
    rng = np.random.default_rng(3)
    pool = [from_counts(f"s{i}", np.cumsum(rng.random(rng.integers(9, 30)))) for i in range(12)]
    m = build_matrix(pool)
    assert m.scores.shape == (12, 12)
    assert np.array_equal(m.scores, m.scores.T)
    assert np.all(np.diag(m.scores) == 1.0)
    assert np.all(np.isfinite(m.scores)) and np.all(np.abs(m.scores) <= 1 + 1e-12)
    with pytest.raises(ValueError):
        m.scores[0, 1] = 0.0
    back = SimilarityMatrix.from_dict(m.to_dict())
    assert back.ids == m.ids and np.array_equal(back.scores, m.scores)


def test_identical_series_give_ones():
    s = np.cumsum(np.arange(1.0, 11.0))
    pool = [from_counts(f"s{i}", s) for i in range(3)]
    np.testing.assert_allclose(build_matrix(pool).scores, np.ones((3, 3)), atol=1e-12)


def test_build_matrix_names_bad_pair():
    pool = [from_counts("ok", [1.0, 2.0, 4.0, 5.0]), from_counts("flat", [3.0, 3.0, 3.0, 3.0])]
    with pytest.raises(NoValidLag, match="flat"):
        build_matrix(pool)


def block_matrix():
    ids = tuple(f"s{i}" for i in range(9))
    S = np.full((9, 9), 0.1)
    S[:4, :4] = 0.95
    S[4:, 4:] = 0.9
    np.fill_diagonal(S, 1.0)
    return SimilarityMatrix(ids, S)


def test_block_structure_selects_groupmates():
    a = cluster_and_select(block_matrix(), "s1", k=2, seed=0)
    assert set(a.selected_ids) == {"s0", "s2", "s3"}
    assert not a.fallback
    assert a.labels["s1"] == a.target_cluster
    b = cluster_and_select(block_matrix(), "s6", k=2, seed=0)
    assert set(b.selected_ids) == {"s4", "s5", "s7", "s8"}


def test_k1_selects_everyone():
    a = cluster_and_select(block_matrix(), "s0", k=1, seed=0)
    assert len(a.selected_ids) == 8


def test_clustering_deterministic():
    m = block_matrix()
    assert cluster_and_select(m, "s2", 3, seed=9) == cluster_and_select(m, "s2", 3, seed=9)


def test_singleton_target_falls_back():
    # target is far from everything; two tight groups absorb the other clusters
    ids = tuple(f"s{i}" for i in range(7))
    S = np.full((7, 7), 0.0)
    S[1:4, 1:4] = 0.99
    S[4:, 4:] = 0.99
    S[0, 1:] = S[1:, 0] = [-0.9, -0.9, -0.5, -0.8, -0.9, -0.95]
    np.fill_diagonal(S, 1.0)
    a = cluster_and_select(SimilarityMatrix(ids, S), "s0", k=3, seed=0)
    assert a.fallback
    # ceil(6 / 3) = 2 most similar: s3 (-0.5) then s4 (-0.8)
    assert set(a.selected_ids) == {"s3", "s4"}


def test_target_with_twin_is_selected():
    rng = np.random.default_rng(11)
    target = np.cumsum(rng.random(20))
    twin = target * 2 + 1
    others = [np.cumsum(rng.random(20)) ** p for p in (0.3, 0.5, 2.0, 3.0, 0.4, 2.5)]
    pool = pool_of(target, twin, *others)
    a = cluster_and_select(build_matrix(pool), "s0", k=3, seed=0)
    assert "s1" in a.selected_ids


def test_kmeans_collapse_flagged():
    S = np.ones((4, 4))
    a = cluster_and_select(SimilarityMatrix(tuple("abcd"), S), "a", k=3, seed=0)
    assert a.collapsed and a.n_clusters == 1
    assert set(a.selected_ids) == {"b", "c", "d"}


def test_kmeans_canonical_labels():
    X = np.array([[0.0], [0.1], [10.0], [10.1], [5.0]])
    labels = kmeans(X, 3, seed=1)
    assert labels[0] == 0
    assert labels[0] == labels[1] and labels[2] == labels[3]
    assert len(set(labels.tolist())) == 3


def test_unknown_target():
    with pytest.raises(KeyError):
        cluster_and_select(block_matrix(), "nope")
