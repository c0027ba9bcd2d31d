import numpy as np
import pytest
from hypothesis import given, strategies as st

from rbsdelab.filtration import (
    CountExceeded, FilteredSpace, SpaceError, StoppingTime, as_outcome_array, as_process,
    binomial_space, cond_expect, count_stopping_times, counterexample_space,
    dual_predictable_projection, enumerate_stopping_times, is_adapted, is_predictable,
    load_space, measurability_gap, predictable_projection, save_space, trinomial_space,
)
from rbsdelab.processes import martingale_closure

from helpers import naive_cond_expect, naive_stopping_times, small_tree

seeds = st.integers(0, 2**32 - 1)


def test_counterexample_structure():
    sp = counterexample_space()
    assert sp.ids == ("w1", "w2")
    assert sp.N == 2 and sp.T == 2.0
    assert list(sp.n_atoms) == [1, 2, 2]
    np.testing.assert_allclose(cond_expect(sp, np.array([5.0, 1.0]), 0), [3.0, 3.0])


def test_binomial_space_probabilities():
    sp = binomial_space(3, p=0.3, T=1.5)
    assert sp.n == 8
    np.testing.assert_allclose(sp.dt, 0.5)
    assert abs(sp.probs.sum() - 1) < 1e-15
    up = np.array([i.count("u") for i in sp.ids])
    np.testing.assert_allclose(sp.probs, 0.3 ** up * 0.7 ** (3 - up))


@pytest.mark.parametrize("bad", [
    dict(outcomes=[("a", 0.5), ("a", 0.5)], times=[0], partitions=[[["a"]]]),
    dict(outcomes=[("a", 0.4), ("b", 0.4)], times=[0], partitions=[[["a", "b"]]]),
    dict(outcomes=[("a", 0.5), ("b", 0.5)], times=[0, 0], partitions=[[["a", "b"]]] * 2),
    dict(outcomes=[("a", 0.5), ("b", 0.5)], times=[0, 1], partitions=[[["a"], ["b"]],
                                                                      [["a", "b"]]]),
    dict(outcomes=[("a", 0.5), ("b", 0.5)], times=[0, 1], partitions=[[["a", "b"]], [["a"]]]),
])
def test_invalid_spaces_rejected(bad):
    with pytest.raises(SpaceError):
        FilteredSpace(**bad)


@given(seeds, st.data())
def test_cond_expect_matches_atom_averages(seed, data):
    sp = small_tree(seed)
    x = np.random.default_rng(seed).normal(size=sp.n)
    k = data.draw(st.integers(0, sp.N))
    np.testing.assert_allclose(cond_expect(sp, x, k), naive_cond_expect(sp, x, k),
                               rtol=1e-12, atol=1e-12)


@given(seeds)
def test_tower_property_and_measurability(seed):
    sp = small_tree(seed)
    x = np.random.default_rng(seed).normal(size=sp.n)
    for j in range(sp.N + 1):
        ej = cond_expect(sp, x, j)
        assert measurability_gap(sp, ej, j) <= 1e-12
        for k in range(j + 1):
            np.testing.assert_allclose(cond_expect(sp, ej, k), cond_expect(sp, x, k),
                                       atol=1e-12)
    assert abs(sp.expect(cond_expect(sp, x, 0)) - sp.expect(x)) <= 1e-12


@given(seeds)
def test_cond_expect_batches_over_leading_axes(seed):
    sp = small_tree(seed)
    x = np.random.default_rng(seed).normal(size=(3, 2, sp.n))
    batched = cond_expect(sp, x, 0)
    for idx in np.ndindex(3, 2):
        np.testing.assert_allclose(batched[idx], cond_expect(sp, x[idx], 0), atol=1e-14)


def test_cond_expect_index_out_of_range():
    with pytest.raises(IndexError):
        cond_expect(counterexample_space(), np.zeros(2), 3)


@pytest.mark.parametrize("space, count", [
    (counterexample_space(), 5), (binomial_space(2), 5), (binomial_space(3), 26),
    (trinomial_space(1), 2), (trinomial_space(2), 9),
])
def test_stopping_time_counts(space, count):
    assert count_stopping_times(space) == count
    assert len(enumerate_stopping_times(space, 10**6)) == count


@given(seeds, st.integers(0, 2))
def test_enumeration_matches_brute_force(seed, start):
    sp = small_tree(seed, max_branch=2)
    if sp.n > 6 or start > sp.N:
        return
    got = {tuple(r) for r in enumerate_stopping_times(sp, 10**5, start)}
    want = {tuple(r) for r in naive_stopping_times(sp, start)}
    assert got == want
    assert len(got) == count_stopping_times(sp, start)


def test_enumeration_cap():
    with pytest.raises(CountExceeded):
        enumerate_stopping_times(binomial_space(3), 25)


def test_stopping_time_validity():
    sp = counterexample_space()
    assert StoppingTime(np.array([1, 2])).is_valid(sp)
    assert StoppingTime.constant(sp, 0).is_valid(sp)
    assert not StoppingTime(np.array([0, 1])).is_valid(sp)
    assert not StoppingTime(np.array([3, 3])).is_valid(sp)


@given(seeds)
def test_predictable_projection_of_martingale_is_lagged(seed):
    sp = small_tree(seed)
    M = martingale_closure(sp, np.random.default_rng(seed).normal(size=sp.n))
    P = predictable_projection(sp, M)
    np.testing.assert_allclose(P[1:], M[:-1], atol=1e-12)
    assert is_predictable(sp, P)


@given(seeds)
def test_dual_projection_preserves_expectation(seed):
    sp = small_tree(seed)
    rng = np.random.default_rng(seed)
    A = np.zeros((sp.N + 1, sp.n))
    A[1:] = np.cumsum(np.abs(rng.normal(size=(sp.N, sp.n))), axis=0)
    Ap = dual_predictable_projection(sp, A)
    assert abs(sp.expect(Ap[-1]) - sp.expect(A[-1])) <= 1e-12
    assert is_predictable(sp, Ap)
    assert np.all(np.diff(Ap, axis=0) >= 0)


def test_adapted_versus_predictable():
    sp = counterexample_space()
    X = np.array([[0.0, 0.0], [1.0, 2.0], [1.0, 2.0]])
    assert is_adapted(sp, X)
    assert not is_predictable(sp, X)
    assert not is_adapted(sp, np.array([[0.0, 1.0], [0, 0], [0, 0]]))


def test_space_round_trip(tmp_path):
    sp = small_tree(7, depth=3)
    save_space(sp, tmp_path / "s.json")
    back = load_space(tmp_path / "s.json")
    assert back.ids == sp.ids
    assert np.array_equal(back.probs, sp.probs)
    assert np.array_equal(back.times, sp.times)
    assert back.to_dict() == sp.to_dict()


def test_coercions():
    sp = counterexample_space()
    np.testing.assert_array_equal(as_outcome_array(sp, {"w1": 1, "w2": 2}), [1.0, 2.0])
    np.testing.assert_array_equal(as_outcome_array(sp, 4), [4.0, 4.0])
    with pytest.raises(SpaceError):
        as_outcome_array(sp, {"w1": 1})
    with pytest.raises(SpaceError):
        as_outcome_array(sp, [1, 2, 3])
    X = as_process(sp, [0, {"w1": 1, "w2": 2}, [3, 4]])
    np.testing.assert_array_equal(X, [[0, 0], [1, 2], [3, 4]])
