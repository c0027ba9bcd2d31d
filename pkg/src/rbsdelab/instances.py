"""Seeded random instances for the property suites.

A suite takes one 64-bit seed; instance ``i`` uses the ``i``-th output of a
splitmix64 stream started at that seed, so suites reproduce across platforms
and instance counts.
"""

from __future__ import annotations

import numpy as np

from .filtration import cond_expect, count_stopping_times, random_tree
from .generators import cubic, linear_y, z_linear
from .martrep import build_basis
from .processes import martingale_closure
from .rbsde import RBSDEInput

MASK = (1 << 64) - 1


def splitmix64(state):
    """One splitmix64 step: returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return state, z ^ (z >> 31)


def instance_seeds(seed, count):
    state = seed & MASK
    out = []
    for _ in range(count):
        state, z = splitmix64(state)
        out.append(z)
    return out


def rngs(seed, count):
    return [np.random.default_rng(s) for s in instance_seeds(seed, count)]


# ----------------------------------------------------------------- spaces


def random_space(rng, depth=None, max_branch=3, max_depth=4, max_count=None):
    """Random tree; redraws until the stopping-time count is at most ``max_count``."""
    while True:
        N = int(rng.integers(1, max_depth + 1)) if depth is None else depth
        sp = random_tree(rng, N, max_branch)
        if max_count is None or count_stopping_times(sp) <= max_count:
            return sp


# -------------------------------------------------------------- processes


def random_adapted(space, rng, scale=1.0, loc=0.0):
    """Independent normal values on every atom of every level."""
    X = np.empty((space.N + 1, space.n))
    for k in range(space.N + 1):
        X[k] = (loc + scale * rng.standard_normal(space.n_atoms[k]))[space.labels[k]]
    return X


def random_predictable(space, rng, scale=1.0):
    X = np.zeros((space.N + 1, space.n))
    X[0] = (scale * rng.standard_normal(space.n_atoms[0]))[space.labels[0]]
    for k in range(1, space.N + 1):
        X[k] = (scale * rng.standard_normal(space.n_atoms[k - 1]))[space.labels[k - 1]]
    return X


def random_fv(space, rng, scale=0.3):
    """Adapted finite-variation process with V_0 = 0."""
    d = random_adapted(space, rng, scale)
    V = np.zeros_like(d)
    V[1:] = np.cumsum(d[1:], axis=0)
    return V


def random_terminal(space, rng, scale=1.0):
    return scale * rng.standard_normal(space.n)


def random_martingale(space, rng, scale=1.0):
    return martingale_closure(space, random_terminal(space, rng, scale))


def random_supermartingale(space, rng, scale=1.0):
    """S = S_0 + M - K with K predictable increasing."""
    M = random_martingale(space, rng, scale)
    inc = np.abs(random_predictable(space, rng, scale))
    inc[0] = 0.0
    K = np.cumsum(inc, axis=0)
    return M - M[0] + M[0] - K


# -------------------------------------------------------------- problems


def random_generator(space, rng, kind=None, basis=None):
    kind = kind or rng.choice(["zero", "linear", "cubic"])
    if kind == "zero":
        from .rbsde import zero_generator
        return zero_generator()
    b = random_adapted(space, rng, 0.3)
    if kind == "linear":
        a = float(rng.uniform(-1.0, 0.4 / max(space.dt.max(), 1e-12)))
        return linear_y(space, a=min(a, 0.5), b=b)
    if kind == "cubic":
        return cubic(space, c=float(rng.uniform(0.0, 0.5)), b=b)
    if kind == "z_linear":
        basis = build_basis(space) if basis is None else basis
        return z_linear(space, basis, a=float(rng.uniform(-0.5, 0.5)),
                        lam=float(rng.uniform(0.2, 1.0)),
                        theta=rng.standard_normal(max(basis.d, 1)), b=b)
    raise ValueError(kind)


def random_problem(space, rng, barriers="two", generator=None, with_V=True, scale=1.0):
    """Random data with barriers that bind on a typical draw.

    ``barriers`` is one of ``"none"``, ``"lower"``, ``"upper"``, ``"two"``;
    ``scale`` multiplies xi, V and the barriers.
    """
    f = random_generator(space, rng) if generator is None else generator
    xi = random_terminal(space, rng, scale)
    V = random_fv(space, rng, 0.3 * scale) if with_V else None
    L = U = None
    if barriers in ("lower", "two"):
        L = random_adapted(space, rng, 0.6 * scale, loc=-0.2 * scale)
    if barriers in ("upper", "two"):
        gap = scale * (np.abs(random_adapted(space, rng, 0.6)) + 0.05)
        if L is None:
            U = random_adapted(space, rng, 0.6 * scale, loc=0.0) + gap
        else:
            U = L + gap
    return RBSDEInput(space, xi, f, V, L, U)


def penalization_instance(rng, depth=4, max_branch=3):
    """Two-barrier problem on a unit-step tree with data at scale 0.25.

    The penalized error is roughly (reflection mass) / n, so the data scale
    fixes the constant in front of 1/n.
    """
    sp = random_space(rng, depth=depth, max_branch=max_branch)
    return random_problem(sp, rng, "two", scale=0.25)


def ordered_pair(space, rng, barriers="lower", kind=None):
    """Two problems with xi, L, U, dV and f ordered (first <= second)."""
    kind = kind or rng.choice(["zero", "linear", "cubic"])
    base = random_problem(space, rng, barriers, generator=random_generator(space, rng, kind))
    xi2 = base.xi + np.abs(random_terminal(space, rng, 0.5))
    dV = np.diff(base.V, axis=0)
    dV2 = dV + np.abs(random_adapted(space, rng, 0.2))[1:]
    V2 = np.zeros_like(base.V)
    V2[1:] = np.cumsum(dV2, axis=0)
    L2 = None if base.L is None else base.L + np.abs(random_adapted(space, rng, 0.3))
    U2 = None if base.U is None else base.U + np.abs(random_adapted(space, rng, 0.3))
    if L2 is not None and U2 is not None:
        U2 = np.maximum(U2, L2)
    shift = np.abs(random_adapted(space, rng, 0.3))
    f1 = base.f
    from .rbsde import Generator
    f2 = Generator(lambda k, y, z, f1=f1: f1(k, y, z) + shift[k], mu=f1.mu,
                   dfdy=f1.dfdy, name=f1.name + "+shift")
    second = RBSDEInput(space, xi2, f2, V2, L2, U2)
    return base, second


def same_barrier_pair(space, rng, kind=None):
    """Ordered pair sharing the lower barrier (for reflecting-force comparison)."""
    first, second = ordered_pair(space, rng, "lower", kind)
    return first, RBSDEInput(space, second.xi, second.f, second.V, first.L, None)


def semimartingale_barrier_problem(space, rng, generator=None):
    """Lower-barrier problem with L = L_0 - A + N and xi >= L_N.

    Returns ``(input, A)`` with ``A`` adapted (not necessarily predictable).
    """
    f = random_generator(space, rng) if generator is None else generator
    dA = random_adapted(space, rng, 0.4, loc=0.1)
    A = np.zeros_like(dA)
    A[1:] = np.cumsum(dA[1:], axis=0)
    Nm = random_martingale(space, rng, 0.5)
    Nm = Nm - Nm[0]
    L0 = float(rng.normal())
    L = L0 - A + Nm
    xi = L[-1] + np.abs(random_terminal(space, rng, 0.5))
    V = random_fv(space, rng, 0.2)
    return RBSDEInput(space, xi, f, V, L, None), A


def snell_data(space, rng):
    """(L, xi, V) for a random optimal-stopping problem."""
    return random_adapted(space, rng), random_terminal(space, rng), random_fv(space, rng)


def conditional_noise(space, X, k):
    """X_k minus its F_{k-1} projection; zero for k = 0."""
    return X[k] - cond_expect(space, X[k], k - 1) if k else np.zeros(space.n)
