import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import wilcoxon as scipy_wilcoxon

from dscsrgm.errors import AllZeroDifferences, DegenerateRanks, MapeUndefined
from dscsrgm.stats import (
    compare, friedman, friedman_statistic, median, metrics, wilcoxon_signed_rank,
    wilcoxon_statistic, wtl,
)

from oracles import brute_wilcoxon_p


def test_metrics_fixture():
    m = metrics([10, 20, 30], [12, 18, 33])
    assert m.rmse == pytest.approx(math.sqrt(17 / 3), abs=1e-12)
    assert round(m.rmse, 4) == 2.3805
    assert m.mae == pytest.approx(7 / 3, abs=1e-12)
    assert m.mape == pytest.approx(40 / 3, abs=1e-12)


def test_perfect_forecast():
    m = metrics([1.0, 2.0], [1.0, 2.0])
    assert (m.rmse, m.mae, m.mape) == (0.0, 0.0, 0.0)


def test_mape_undefined_names_indices():
    with pytest.raises(MapeUndefined) as info:
        metrics([0.0, 1.0, 0.0], [1.0, 1.0, 1.0])
    assert info.value.indices == [0, 2]


@given(st.lists(st.tuples(st.floats(0.1, 1e4), st.floats(-1e4, 1e4)), min_size=1, max_size=40))
def test_metric_ordering(pairs):
    y, yhat = map(np.array, zip(*pairs))
    m = metrics(y, yhat)
    assert 0 <= m.mae <= m.rmse * (1 + 1e-12)


@pytest.mark.parametrize("a, b, outcome", [
    (0.90, 1.00, 1),   # 10% better
    (1.00, 0.90, -1),
    (0.96, 1.00, 0),   # under the 5% threshold
    (0.95, 1.00, 1),   # exactly on the threshold counts
    (0.0, 0.0, 0),
    (0.0, 1.0, 1),
    (1.0, 0.0, -1),
])
def test_compare(a, b, outcome):
    assert compare(a, b, 0.05) == outcome


def test_wtl_tally():
    t = wtl([1.0, 2.0, 3.0, 4.0], [2.0, 1.0, 3.0, 4.1])
    assert (t.wins, t.ties, t.losses) == (1, 2, 1)
    with pytest.raises(ValueError):
        wtl([1.0], [1.0, 2.0])


def test_median_even_count():
    assert median([4.0, 1.0, 3.0, 2.0]) == 2.5
    assert math.isnan(median([]))


def test_wilcoxon_all_positive_n5():
    a = [2.0, 3.0, 4.0, 5.0, 6.0]
    b = [1.0, 1.0, 1.0, 1.0, 1.0]
    assert wilcoxon_signed_rank(a, b) == pytest.approx(0.0625, abs=1e-15)
    assert wilcoxon_statistic(a, b) == 15


def test_wilcoxon_zero_differences():
    with pytest.raises(AllZeroDifferences):
        wilcoxon_signed_rank([1.0, 2.0], [1.0, 2.0])


def test_wilcoxon_matches_enumeration_with_ties():
    rng = np.random.default_rng(2)
    for _ in range(30):
        n = int(rng.integers(1, 13))
        # integer-valued data produces tied magnitudes and zero differences
        a = rng.integers(0, 6, n).astype(float)
        b = rng.integers(0, 6, n).astype(float)
        if np.all(a == b):
            continue
        assert wilcoxon_signed_rank(a, b) == pytest.approx(brute_wilcoxon_p(a, b), abs=1e-12)


def test_wilcoxon_matches_scipy_without_ties():
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=20), rng.normal(size=20)
    ref = scipy_wilcoxon(a, b, method="exact").pvalue
    assert wilcoxon_signed_rank(a, b) == pytest.approx(ref, rel=1e-12)


def test_wilcoxon_approx_large_n():
    rng = np.random.default_rng(6)
    a, b = rng.normal(size=60), rng.normal(0.3, 1, size=60)
    p = wilcoxon_signed_rank(a, b)
    ref = scipy_wilcoxon(a, b, method="approx", correction=True).pvalue
    assert p == pytest.approx(ref, rel=1e-9)
    # the exact distribution at n = 60 agrees closely with the approximation
    assert wilcoxon_signed_rank(a, b, method="exact") == pytest.approx(p, abs=5e-3)


@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(-5, 5)), min_size=1, max_size=15))
@settings(max_examples=100, deadline=None)
def test_wilcoxon_p_is_probability(pairs):
    a, b = zip(*pairs)
    if a == b:
        return
    p = wilcoxon_signed_rank(a, b)
    assert 0 < p <= 1
    assert p == pytest.approx(wilcoxon_signed_rank(b, a), abs=1e-12)


def test_friedman_extreme_fixture():
    # 30 targets, three models, always ranked 1 < 2 < 3: rank sums 30, 60, 90
    X = np.tile([1.0, 2.0, 3.0], (30, 1))
    assert friedman_statistic(X) == pytest.approx(60.0, abs=1e-9)
    assert friedman(X) == pytest.approx(math.exp(-30), rel=1e-9)


def test_friedman_matches_scipy():
    from scipy.stats import friedmanchisquare
    rng = np.random.default_rng(8)
    X = rng.integers(0, 4, size=(15, 4)).astype(float)
    ref = friedmanchisquare(*X.T)
    assert friedman_statistic(X) == pytest.approx(ref.statistic, rel=1e-12)
    assert friedman(X) == pytest.approx(ref.pvalue, rel=1e-12)


def test_friedman_degenerate():
    with pytest.raises(DegenerateRanks):
        friedman(np.ones((5, 3)))


def test_constant_offset():
    m = metrics([5.0, 9.0, 40.0], [7.0, 11.0, 42.0])
    assert m.rmse == pytest.approx(2.0) and m.mae == pytest.approx(2.0)


def test_threshold_arithmetic():
    assert compare(10.0, 20.0) == 1
    assert compare(10.0, 10.3) == 0


@given(st.lists(st.tuples(st.floats(0, 1e3), st.floats(0, 1e3)), max_size=30))
def test_wtl_mirror(pairs):
    a = [p[0] for p in pairs]
    b = [p[1] for p in pairs]
    ab, ba = wtl(a, b), wtl(b, a)
    assert (ab.wins, ab.ties, ab.losses) == (ba.losses, ba.ties, ba.wins)
    assert ab.wins + ab.ties + ab.losses == len(pairs)


@given(st.permutations(list(range(6))))
def test_metrics_permutation_equivariant(perm):
    y = np.array([3.0, 5.0, 8.0, 9.0, 12.0, 20.0])
    yhat = np.array([2.5, 6.0, 8.0, 10.0, 11.0, 25.0])
    got, want = metrics(y[perm], yhat[perm]), metrics(y, yhat)
    assert [got.rmse, got.mae, got.mape] == pytest.approx([want.rmse, want.mae, want.mape], rel=1e-14)


def test_wilcoxon_textbook_ten_pairs():
    a = [125, 115, 130, 140, 140, 115, 140, 125, 140, 135]
    b = [110, 122, 125, 120, 140, 124, 123, 137, 135, 145]
    assert wilcoxon_signed_rank(a, b) == pytest.approx(brute_wilcoxon_p(a, b), abs=1e-15)
    assert wilcoxon_statistic(a, b) == 27.0


@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50)), min_size=1, max_size=20),
       st.integers(-1000, 1000))
@settings(max_examples=60, deadline=None)
def test_wilcoxon_shift_invariant(pairs, shift):
    a, b = (np.array(x, dtype=float) for x in zip(*pairs))
    if np.all(a == b):
        return
    assert wilcoxon_signed_rank(a + shift, b + shift) == wilcoxon_signed_rank(a, b)


def test_exact_close_to_normal_at_25():
    rng = np.random.default_rng(25)
    for _ in range(20):
        a, b = rng.normal(size=25), rng.normal(0.2, 1, size=25)
        exact = wilcoxon_signed_rank(a, b, method="exact")
        approx = wilcoxon_signed_rank(a, b, method="approx")
        assert abs(exact - approx) < 0.02


def test_friedman_two_models_agrees_with_wilcoxon():
    rng = np.random.default_rng(12)
    a = rng.uniform(1, 2, 20)
    b = a + rng.uniform(0.5, 1.0, 20)
    assert friedman(np.column_stack([a, b])) < 0.05
    assert wilcoxon_signed_rank(a, b) < 0.05
