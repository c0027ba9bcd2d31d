import numpy as np
import pytest
from hypothesis import given, strategies as st

from rbsdelab.filtration import binomial_space, cond_expect, counterexample_space
from rbsdelab.instances import snell_data
from rbsdelab.snell import (
    SnellProblem, pathwise_identity_gap, projection_identity_gap, snell_envelope, snell_oracle,
    stopped_payoff,
)

from helpers import naive_cond_expect, naive_stopping_times, small_tree

seeds = st.integers(0, 2**32 - 1)


def counterexample_problem():
    L = np.array([[2.0, 2.0], [0.0, 0.0], [0.0, 0.0]])
    return SnellProblem(counterexample_space(), L, np.array([5.0, 1.0]))


def test_counterexample_values():
    prob = counterexample_problem()
    Y = snell_envelope(prob)
    np.testing.assert_array_equal(Y, [[3, 3], [5, 1], [5, 1]])
    assert projection_identity_gap(prob, Y) == 0
    gaps = pathwise_identity_gap(prob, Y)
    # |Y_0 - max(L_0, Y_1)|: |3 - 5| on w1, |3 - 2| on w2
    np.testing.assert_array_equal(gaps.gaps[0], [2.0, 1.0])
    np.testing.assert_array_equal(gaps.gaps[1], [0.0, 0.0])
    assert gaps.max == 2.0


def test_counterexample_oracle():
    res = snell_oracle(counterexample_problem())
    assert res.count == 5
    np.testing.assert_array_equal(res.value, [3.0, 3.0])
    # waiting past 0 is optimal; with L = 0 afterwards, stopping at N is
    assert np.all(res.tau > 0)


def brute_force_value(prob):
    sp = prob.space
    best = np.full(sp.n, -np.inf)
    for tau in naive_stopping_times(sp):
        pay = np.array([prob.V[t, i] - prob.V[0, i] + (prob.L[t, i] if t < sp.N else prob.xi[i])
                        for i, t in enumerate(tau)])
        best = np.maximum(best, naive_cond_expect(sp, pay, 0))
    return best


@given(seeds)
def test_envelope_matches_exhaustive_search(seed):
    sp = small_tree(seed, max_branch=2)
    if sp.n > 6:
        return
    L, xi, V = snell_data(sp, np.random.default_rng(seed))
    prob = SnellProblem(sp, L, xi, V)
    Y = snell_envelope(prob)
    np.testing.assert_allclose(Y[0], brute_force_value(prob), atol=1e-12)
    res = snell_oracle(prob)
    np.testing.assert_allclose(res.value, Y[0], atol=1e-12)
    got = cond_expect(sp, stopped_payoff(prob, res.tau)[0], 0)
    np.testing.assert_allclose(got, Y[0], atol=1e-12)


@given(seeds)
def test_envelope_is_smallest_dominating_supermartingale(seed):
    sp = small_tree(seed)
    rng = np.random.default_rng(seed)
    L, xi, V = snell_data(sp, rng)
    prob = SnellProblem(sp, L, xi, V)
    Y = snell_envelope(prob)
    G = Y + V
    for k in range(sp.N):
        assert np.all(Y[k] >= L[k] - 1e-12)
        assert np.all(cond_expect(sp, G[k + 1], k) <= G[k] + 1e-12)
    assert projection_identity_gap(prob, Y) <= 1e-12
    # raising any entry of an upper bound keeps it above Y
    bigger = Y + np.abs(rng.normal(size=Y.shape))
    assert np.all(Y <= bigger)
    # the oracle at an intermediate start agrees too
    start = sp.N // 2
    if start:
        np.testing.assert_allclose(snell_oracle(prob, start=start).value, Y[start], atol=1e-12)


def crr_put(S0, u, d, p, strike, N):
    """Recombining-lattice American put, no discounting."""
    vals = [max(strike - S0 * u ** j * d ** (N - j), 0.0) for j in range(N + 1)]
    for k in range(N - 1, -1, -1):
        vals = [max(strike - S0 * u ** j * d ** (k - j), 0.0,
                    p * vals[j + 1] + (1 - p) * vals[j]) for j in range(k + 1)]
    return vals[0]


def test_american_put_against_lattice():
    N, p, S0, u, d, K = 5, 0.45, 100.0, 1.1, 0.92, 100.0
    sp = binomial_space(N, p)
    ups = np.array([[i[:k].count("u") for i in sp.ids] for k in range(N + 1)])
    S = S0 * u ** ups * d ** (np.arange(N + 1)[:, None] - ups)
    L = np.maximum(K - S, 0.0)
    Y = snell_envelope(SnellProblem(sp, L, L[-1]))
    want = crr_put(S0, u, d, p, K, N)
    assert Y[0, 0] == pytest.approx(want, abs=1e-12)
    assert Y[0, 0] == pytest.approx(8.072051758759992, abs=1e-9)


def test_shape_validation():
    with pytest.raises(ValueError):
        SnellProblem(counterexample_space(), np.zeros((2, 2)), np.zeros(2))
