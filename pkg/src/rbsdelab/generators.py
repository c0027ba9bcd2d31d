"""Named generator constructors.

``make_generator(name, params, space, basis)`` builds a :class:`Generator` and
probes its declared constants.  Process-valued parameters (``b``, ``L``, ``U``)
accept anything :func:`~rbsdelab.filtration.as_process` understands.
"""

from __future__ import annotations

import numpy as np

from .filtration import as_process
from .martrep import build_basis
from .rbsde import Generator, zero_generator


def _proc(space, x):
    return np.zeros((space.N + 1, space.n)) if x is None else as_process(space, x)


def linear_y(space, a=0.0, b=None):
    """f = a y + b_k."""
    b = _proc(space, b)
    return Generator(lambda k, y, z: a * y + b[k], mu=a, name="linear_y",
                     dfdy=lambda k, y, z: np.full_like(y, a))


def cubic(space, c=1.0, b=None):
    """f = -c y**3 + b_k (decreasing in y for c >= 0)."""
    if c < 0:
        raise ValueError("cubic generator needs c >= 0")
    b = _proc(space, b)
    return Generator(lambda k, y, z: -c * y ** 3 + b[k], mu=0.0, name="cubic",
                     dfdy=lambda k, y, z: -3 * c * y ** 2)


def z_linear(space, basis, a=0.0, lam=1.0, theta=None, b=None):
    """f = a y + lam sum_i theta_i sqrt(m^i_k) z^i + b_k with |theta| <= 1.

    Cauchy-Schwarz makes this lam-Lipschitz for the bracket-density norm.
    """
    d = basis.d
    theta = np.ones(d) / np.sqrt(max(d, 1)) if theta is None else np.asarray(theta, float)
    if theta.shape != (d,):
        theta = np.resize(theta, d)
    nrm = np.linalg.norm(theta)
    if nrm > 1:
        theta = theta / nrm
    b = _proc(space, b)
    weight = theta[None, :, None] * np.sqrt(basis.densities)  # (N, d, n)

    def f(k, y, z):
        zterm = np.sum(weight[k] * z, axis=0) if k < space.N else 0.0
        return a * y + lam * zterm + b[k]

    return Generator(f, mu=a, lam=lam, depends_on_z=True, name="z_linear",
                     dfdy=lambda k, y, z: np.full_like(y, a))


def two_sided_penalty(space, n=1.0, m=1.0, L=None, U=None):
    """f = n (y - L_k)^- - m (y - U_k)^+, the penalization drift as a generator."""
    L = None if L is None else as_process(space, L)
    U = None if U is None else as_process(space, U)

    def f(k, y, z):
        out = np.zeros_like(y)
        if L is not None:
            out = out + n * np.maximum(L[k] - y, 0.0)
        if U is not None:
            out = out - m * np.maximum(y - U[k], 0.0)
        return out

    def df(k, y, z):
        out = np.zeros_like(y)
        if L is not None:
            out = out - n * (y < L[k])
        if U is not None:
            out = out - m * (y > U[k])
        return out

    return Generator(f, mu=0.0, name="two_sided_penalty", dfdy=df)


REGISTRY = {
    "zero": lambda space, basis, **kw: zero_generator(),
    "linear_y": lambda space, basis, **kw: linear_y(space, **kw),
    "cubic": lambda space, basis, **kw: cubic(space, **kw),
    "z_linear": lambda space, basis, **kw: z_linear(space, basis, **kw),
    "two_sided_penalty": lambda space, basis, **kw: two_sided_penalty(space, **kw),
}


def make_generator(name, params=None, space=None, basis=None, verify=True, seed=0):
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown generator {name!r}; known: {sorted(REGISTRY)}") from None
    basis = build_basis(space) if basis is None else basis
    gen = factory(space, basis, **(params or {}))
    if verify:
        gen.verify(space, basis, rng=seed)
    return gen
