import numpy as np
import pytest
from hypothesis import given, strategies as st

from gpe.cluster1d import (GroupAssignment, approx_bias_bound, kmeans_1d_exact,
                           nearest_center)
from conftest import brute_force_wss

values_st = st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=9)


def test_two_atoms():
    c = kmeans_1d_exact([0, 0, 1, 1, 1], 2)
    np.testing.assert_allclose(c.centers, [0, 1])
    assert c.wss == 0.0
    assert c.assignment.labels.tolist() == [0, 0, 1, 1, 1]


def test_single_group():
    c = kmeans_1d_exact([2, 2.5, 3, 3.5, 4], 1)
    np.testing.assert_allclose(c.centers, [3.0])
    assert c.wss == pytest.approx(2.5)


def test_labels_in_original_order():
    c = kmeans_1d_exact([5.0, -1.0, 5.1, -1.2], 2)
    assert c.assignment.labels.tolist() == [1, 0, 1, 0]


def test_seven_uniform_three_groups_brute_force():
    v = np.random.default_rng(7).uniform(-1, 1, 7)
    assert kmeans_1d_exact(v, 3).wss == pytest.approx(brute_force_wss(v, 3), rel=1e-9)


def test_fewer_distinct_values_than_k():
    c = kmeans_1d_exact([1, 1, 1, 1, 2], 3)
    assert sorted(c.assignment.sizes.tolist()) == [1, 2, 2]
    assert c.wss == 0.0


@pytest.mark.parametrize("bad,k", [([1.0, np.nan], 1), ([1.0, 2.0], 3), ([1.0], 0)])
def test_invalid_input(bad, k):
    with pytest.raises(ValueError):
        kmeans_1d_exact(bad, k)


@pytest.mark.parametrize("value,centers,expected", [
    (0.4, [0, 1], 0), (0.5, [0, 1], 0), (-3, [-2.9, 4, 0], 0), (3.0, [0, 1, 2.9], 2)])
def test_nearest_center(value, centers, expected):
    assert nearest_center(value, centers) == expected


def test_assignment_rejects_empty_group():
    with pytest.raises(ValueError, match="empty"):
        GroupAssignment(np.array([0, 2, 2]), None)


def test_assignment_fixed_must_be_singleton():
    with pytest.raises(ValueError, match="alone"):
        GroupAssignment(np.array([0, 0, 1]), np.array([True, False, False]))


def test_assignment_matrix():
    a = GroupAssignment(np.array([1, 0, 1]), None)
    np.testing.assert_array_equal(a.matrix(), [[0, 1], [1, 0], [0, 1]])
    assert a.sizes.tolist() == [1, 2]


@given(values_st, st.integers(1, 4))
def test_dp_matches_brute_force(values, k):
    if k > len(values):
        return
    got = kmeans_1d_exact(values, k).wss
    want = brute_force_wss(values, k)
    assert abs(got - want) <= 1e-9 * max(1.0, want)


@given(values_st, st.integers(1, 5))
def test_result_invariants(values, k):
    v = np.asarray(values)
    if k > v.size:
        return
    c = kmeans_1d_exact(v, k)
    labels = c.assignment.labels
    assert c.assignment.sizes.sum() == v.size and np.all(c.assignment.sizes > 0)
    for g in range(k):
        assert c.centers[g] == pytest.approx(v[labels == g].mean(), abs=1e-10)
    assert np.all(np.diff(c.centers) >= 0)
    assert c.wss == pytest.approx(np.sum((v - c.centers[labels]) ** 2), rel=1e-10, abs=1e-12)
    # contiguity in sorted order
    order = np.argsort(v, kind="stable")
    assert np.all(np.diff(labels[order]) >= 0)


@given(values_st, st.integers(1, 4))
def test_wss_monotone_in_k(values, k):
    if k + 1 > len(values):
        return
    assert kmeans_1d_exact(values, k + 1).wss <= kmeans_1d_exact(values, k).wss + 1e-9


def test_bias_bound_two_atoms():
    v = [0, 0, 1, 1, 1]
    c = kmeans_1d_exact(v, 2)
    assert approx_bias_bound(v, c, 1.0) == 45.0
    assert c.wss / 5 <= 45.0


def test_bias_bound_grid():
    v = np.linspace(2, 4, 20)
    c = kmeans_1d_exact(v, 4)
    M = c.assignment.sizes.max()
    assert approx_bias_bound(v, c, 4.0) == pytest.approx(4 * 16 * M ** 2 * 20 / 16)
    assert c.wss / 20 <= approx_bias_bound(v, c, 4.0)


def test_bias_bound_k_equals_p():
    v = np.random.default_rng(1).uniform(-1, 1, 6)
    assert kmeans_1d_exact(v, 6).wss == pytest.approx(0.0, abs=1e-12)


def test_bias_bound_rejects_out_of_support():
    with pytest.raises(ValueError):
        approx_bias_bound([0, 2], kmeans_1d_exact([0, 2], 1), 1.0)
