import numpy as np
import pytest
from hypothesis import given, strategies as st

from rbsdelab.filtration import binomial_space, counterexample_space, trinomial_space
from rbsdelab.martrep import (
    NotMartingale, build_basis, integrate, m_norm, m_norm_process, mp_norm, represent,
)
from rbsdelab.processes import martingale_closure

from helpers import partitions_of, small_tree

seeds = st.integers(0, 2**32 - 1)


@pytest.mark.parametrize("p", [0.5, 0.3, 0.9])
def test_binomial_increment(p):
    # unique zero-mean direction: seed (1, -1) centred is 2 (1 - p, -p)
    sp = binomial_space(1, p)
    b = build_basis(sp)
    assert b.d == 1
    np.testing.assert_allclose(b.increments[0, 0], [2 * (1 - p), -2 * p], atol=1e-15)
    np.testing.assert_allclose(b.brackets[0, 0], 4 * p * (1 - p), atol=1e-15)


def test_equal_trinomial_gram_schmidt():
    # hand Gram-Schmidt of (1,-1,0), (0,1,-1) under weights 1/3
    b = build_basis(trinomial_space(1))
    assert b.d == 2
    np.testing.assert_allclose(b.increments[0], [[1, -1, 0], [0.5, 0.5, -1]], atol=1e-15)
    np.testing.assert_allclose(b.brackets[0, :, 0], [2 / 3, 1 / 2], atol=1e-15)


def test_counterexample_dimensions():
    b = build_basis(counterexample_space())
    assert b.d == 1
    assert b.dims == [[1], [0, 0]]
    np.testing.assert_allclose(b.increments[0, 0], [1, -1])
    assert np.all(b.increments[1] == 0)


@given(seeds)
def test_basis_invariants(seed):
    sp = small_tree(seed)
    b = build_basis(sp)
    for k in range(sp.N):
        for a in range(sp.n_atoms[k]):
            q, vecs = b.atom_vectors(k, a)
            assert np.abs(vecs @ q).max(initial=0) <= 1e-12
            gram = (vecs * q) @ vecs.T
            off = gram - np.diag(np.diag(gram))
            assert np.abs(off).max(initial=0) <= 1e-12
            # completeness: together with constants they span all functions of the children
            full = np.vstack([np.ones(len(q)), vecs])
            assert np.linalg.matrix_rank(full) == len(q)
    Ms = b.martingales()
    for i in range(b.d):
        for j in range(i):
            assert abs(sp.expect(Ms[i, -1] * Ms[j, -1])) <= 1e-10


def test_represent_basis_martingale_gives_unit_coefficients():
    sp = trinomial_space(2, (0.2, 0.3, 0.5))
    b = build_basis(sp)
    Ms = b.martingales()
    for j in range(b.d):
        Z = represent(sp, b, Ms[j])
        want = np.zeros_like(Z)
        want[:, j] = 1.0
        np.testing.assert_allclose(Z, want, atol=1e-12)
    assert np.all(represent(sp, b, np.zeros((sp.N + 1, sp.n))) == 0)


@given(seeds)
def test_reconstruction_matches_per_atom_solve(seed):
    sp = small_tree(seed, depth=3)
    b = build_basis(sp)
    M = martingale_closure(sp, np.random.default_rng(seed).normal(size=sp.n))
    Z = represent(sp, b, M)
    assert np.abs(integrate(b, Z, M[0]) - M).max() <= 1e-10
    # oracle: least squares on each atom's children
    parts = partitions_of(sp)
    dM = np.diff(M, axis=0)
    for k in range(sp.N):
        for a, atom in enumerate(parts[k]):
            dim = b.dims[k][a]
            if dim == 0:
                continue
            A = b.increments[k, :dim][:, atom].T
            coef = np.linalg.lstsq(A, dM[k, atom], rcond=None)[0]
            np.testing.assert_allclose(Z[k, :dim, atom[0]], coef, atol=1e-9)


def test_represent_rejects_nonmartingale():
    sp = counterexample_space()
    with pytest.raises(NotMartingale):
        represent(sp, build_basis(sp), np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 1.0]]))


def test_m_norm_binomial():
    p, T = 0.3, 0.5
    sp = binomial_space(1, p, T=T)
    b = build_basis(sp)
    z = np.ones((1, 1, sp.n))
    assert m_norm(sp, b, z, 0, 0) == pytest.approx(np.sqrt(4 * p * (1 - p) / T), rel=1e-14)
    assert m_norm(sp, b, 0 * z, 0, 0) == 0
    assert m_norm(sp, b, -3 * z, 0, 0) == pytest.approx(3 * m_norm(sp, b, z, 0, 0), rel=1e-14)


@given(seeds, st.sampled_from([1.0, 1.5, 2.0]))
def test_mp_norm_matches_summation(seed, p):
    sp = small_tree(seed)
    b = build_basis(sp)
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(sp.N, b.d, sp.n))
    total = np.zeros(sp.n)
    for i in range(sp.n):
        for k in range(sp.N):
            for j in range(b.d):
                total[i] += Z[k, j, i] ** 2 * b.brackets[k, j, i]
    want = sum(sp.probs[i] * total[i] ** (p / 2) for i in range(sp.n))
    assert mp_norm(sp, b, Z, p) == pytest.approx(want, rel=1e-12, abs=1e-15)
    assert mp_norm(sp, b, 0 * Z, p) == 0


def test_mp_norm_of_basis_martingale():
    sp = trinomial_space(2)
    b = build_basis(sp)
    Z = represent(sp, b, b.martingales()[1])
    bracket = b.brackets[:, 1].sum(axis=0)
    assert mp_norm(sp, b, Z, 1.5) == pytest.approx(sp.expect(bracket ** 0.75), rel=1e-12)


@given(seeds)
def test_bracket_norm_consistency(seed):
    from rbsdelab.filtration import cond_expect
    sp = small_tree(seed)
    b = build_basis(sp)
    M = martingale_closure(sp, np.random.default_rng(seed).normal(size=sp.n))
    Z = represent(sp, b, M)
    zn = m_norm_process(b, Z)
    dM = np.diff(M, axis=0)
    for k in range(sp.N):
        lhs = cond_expect(sp, dM[k] ** 2, k)
        np.testing.assert_allclose(lhs, zn[k] ** 2 * sp.dt[k], atol=1e-10)


def test_report_mentions_every_step():
    text = build_basis(binomial_space(2)).report()
    assert "step 1 atom 1" in text and "d* = 1" in text
