import numpy as np
import pytest
from hypothesis import given, strategies as st

from rbsdelab.analysis import (
    HypothesisUnverified, alpha_transform, jump_formula_gap, lp_estimate,
    power_convexity_holds, power_ito_check, power_ito_terms, reflection_bound_excess,
    reflection_sign_slack, sandwich_witness, supermartingale_energy_ratio, z_norm_integral,
)
from rbsdelab.calibration import lp_instance, load_constants
from rbsdelab.filtration import FilteredSpace, binomial_space, dual_predictable_projection
from rbsdelab.generators import cubic, linear_y
from rbsdelab.instances import (
    random_generator, random_martingale, random_problem, semimartingale_barrier_problem,
)
from rbsdelab.rbsde import RBSDEInput, solve_reflected, zero_generator

from helpers import small_tree

seeds = st.integers(0, 2**32 - 1)
finite = st.floats(-1e3, 1e3, allow_nan=False)


def path_space(N):
    return FilteredSpace([("w", 1.0)], list(range(N + 1)), [[["w"]]] * (N + 1))


def test_alpha_transform_constant():
    sp = binomial_space(2, T=1.0)
    out = alpha_transform(sp, np.log(2.0), Y=np.ones((3, sp.n)), xi=np.ones(sp.n))
    np.testing.assert_allclose(out.Y[-1], 2.0)
    np.testing.assert_allclose(out.xi, 2.0)


@given(seeds, st.floats(-2, 2))
def test_alpha_transform_round_trip(seed, alpha):
    sp = small_tree(seed)
    rng = np.random.default_rng(seed)
    inp = random_problem(sp, rng, "none", linear_y(sp, -0.3))
    Y = rng.normal(size=(sp.N + 1, sp.n))
    z = np.zeros((1, sp.n))
    fwd = alpha_transform(sp, alpha, Y, inp.xi, inp.V, inp.f)
    back = alpha_transform(sp, -alpha, fwd.Y, fwd.xi, fwd.V, fwd.f)
    np.testing.assert_allclose(back.Y, Y, atol=1e-10)
    np.testing.assert_allclose(back.xi, inp.xi, atol=1e-10)
    np.testing.assert_allclose(back.V, inp.V, atol=1e-10)
    for k in range(sp.N):
        np.testing.assert_allclose(back.f(k, Y[k], z), inp.f(k, Y[k], z), atol=1e-10)
    assert fwd.f.mu == pytest.approx(-0.3 - alpha)


def test_convexity_equality_case():
    # x = 1, y = 0, p = 2: both sides equal 1
    assert power_convexity_holds(1.0, 0.0, 2.0)
    assert power_convexity_holds(0.0, 0.0, 1.5)
    with pytest.raises(ValueError):
        power_convexity_holds(1.0, 0.0, 1.0)


@given(finite, finite, st.floats(1.01, 2.0))
def test_power_convexity(x, y, p):
    assert power_convexity_holds(x, y, p)


def test_power_ito_single_jump():
    inc, drift, jumps = power_ito_terms(np.array([[1.0], [2.0]]), 1.5)
    assert inc[0] == pytest.approx(2 ** 1.5 - 1, rel=1e-15)
    assert drift[0] == pytest.approx(1.5, rel=1e-15)
    assert jumps.sum() == pytest.approx(0.3284271247461903, rel=1e-14)


@given(seeds, st.floats(1.01, 2.0))
def test_power_ito_identity(seed, p):
    sp = small_tree(seed)
    rng = np.random.default_rng(seed)
    M = random_martingale(sp, rng)
    K = np.zeros_like(M)
    K[1:] = np.cumsum(rng.normal(size=(sp.N, sp.n)), axis=0)
    assert power_ito_check(K, M - M[0], M[0], p)


def test_energy_ratio_of_deterministic_decrease():
    # S falls linearly from 1 to 0: [S]_N = 1/N, K_N = 1, sup S = 1
    for N in (1, 4, 10):
        sp = path_space(N)
        S = np.linspace(1.0, 0.0, N + 1)[:, None]
        assert supermartingale_energy_ratio(sp, S) == pytest.approx(1 + 1 / N, rel=1e-12)


@given(seeds)
def test_energy_ratio_of_martingale_at_most_one(seed):
    sp = small_tree(seed)
    S = random_martingale(sp, np.random.default_rng(seed))
    assert supermartingale_energy_ratio(sp, S) <= 1 + 1e-12


def test_lp_estimate_guards():
    sol, f_bound, mu, lam = lp_instance(np.random.default_rng(1), "linear")
    with pytest.raises(ValueError):
        lp_estimate(sol, 1.5, mu - 1, f_bound)
    with pytest.raises(ValueError):
        lp_estimate(sol, 2.5, mu + 1, f_bound)
    with pytest.raises(HypothesisUnverified):
        lp_estimate(sol, 1.5, mu + 1, -np.ones_like(f_bound))
    assert np.any(f_bound > 0)
    with pytest.raises(HypothesisUnverified):  # the offset b breaks a zero bound
        lp_estimate(sol, 1.5, mu + 1, np.zeros_like(f_bound))


@pytest.mark.parametrize("kind", ["zero", "linear", "cubic", "z_linear"])
def test_lp_ratio_within_calibrated_constant(kind):
    constants = load_constants()
    for seed in range(5):
        sol, f_bound, mu, lam = lp_instance(np.random.default_rng(seed), kind)
        alpha = mu + lam ** 2
        for p in (1.25, 1.5, 2.0):
            rep = lp_estimate(sol, p, alpha, f_bound, mu, lam)
            assert rep.ratio <= constants[f"lp_{p:g}"]
            assert rep.generator_ratio <= constants[f"generator_{p:g}"]
            assert reflection_sign_slack(sol, p) <= 1e-10


def test_sandwich_witness():
    sp = binomial_space(2)
    inp = RBSDEInput(sp, np.zeros(sp.n), cubic(sp), None, -1.0, 1.0)
    w = sandwich_witness(inp)
    assert w.exists and np.all(w.X == 0) and w.generator_l1 == 0
    pinned = RBSDEInput(sp, np.zeros(sp.n), zero_generator(), None, 0.5, 0.5)
    np.testing.assert_array_equal(sandwich_witness(pinned).X, 0.5)
    pinned.U = pinned.L - 1.0
    bad = sandwich_witness(pinned)
    assert not bad.exists and bad.violations


@given(seeds)
def test_jump_formula_exact_without_generator(seed):
    sp = small_tree(seed)
    inp = random_problem(sp, np.random.default_rng(seed), "lower", zero_generator())
    assert jump_formula_gap(solve_reflected(inp)) <= 1e-12


@given(seeds)
def test_jump_formula_within_generator_size(seed):
    sp = small_tree(seed)
    rng = np.random.default_rng(seed)
    inp = random_problem(sp, rng, "lower", random_generator(sp, rng, "linear"))
    sol = solve_reflected(inp)
    fL = np.stack([inp.f(k, inp.L[k], sol.Z[k]) for k in range(sp.N)])
    bound = 2 * (np.abs(fL) * sp.dt[:, None]).max(initial=0.0) + 1e-12
    assert jump_formula_gap(sol) <= bound


@given(seeds)
def test_reflection_upper_bound(seed):
    sp = small_tree(seed)
    inp, A = semimartingale_barrier_problem(sp, np.random.default_rng(seed))
    sol = solve_reflected(inp)
    assert reflection_bound_excess(sol, A) <= 1e-10
    assert reflection_bound_excess(sol) <= 1e-10


def test_positive_part_bound_fails_where_negative_part_holds():
    # L falls 2 -> 1 -> 0 with xi = 0: Y = L and each step reflects by 1
    sp = path_space(2)
    L = np.array([[2.0], [1.0], [0.0]])
    sol = solve_reflected(RBSDEInput(sp, [0.0], zero_generator(), None, L))
    dRp = np.diff(sol.K, axis=0)[:, 0]
    np.testing.assert_array_equal(dRp, [1.0, 1.0])
    A = L[0] - L  # L = L_0 - A, no martingale part
    dAp = np.diff(dual_predictable_projection(sp, A), axis=0)[:, 0]
    literal = np.maximum(0.0 - dAp, 0.0)
    assert np.all(dRp > literal)
    assert reflection_bound_excess(sol, A) == 0.0


def test_z_norm_integral_zero_without_noise():
    sp = path_space(3)
    sol = solve_reflected(RBSDEInput(sp, [1.0]))
    assert z_norm_integral(sol) == 0.0
