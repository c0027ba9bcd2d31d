"""Pathwise calculus for processes on a finite filtered space.

Processes are ``(N + 1, n_outcomes)`` arrays.  Adapted processes are constant
on the atoms of level ``k`` at row ``k``; predictable ones on the atoms of
level ``k - 1``.  On a grid all variation is jump variation, so brackets are
sums of squared increments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filtration import cond_expect

SUPERMART_TOL = 1e-12


class NotSupermartingale(ValueError):
    def __init__(self, k, outcome, excess):
        super().__init__(
            f"E[S_{k + 1} | F_{k}] exceeds S_{k} by {excess:.3e} at outcome {outcome!r}")
        self.k = k
        self.outcome = outcome
        self.excess = excess


@dataclass(frozen=True)
class FVDecomposition:
    """Jordan parts of a predictable finite-variation process R = plus - minus."""

    plus: np.ndarray
    minus: np.ndarray

    @property
    def total(self):
        return self.plus - self.minus

    @property
    def variation(self):
        return self.plus + self.minus


@dataclass(frozen=True)
class DoobDecomposition:
    """S = S_0 - K + M with K predictable increasing and M a martingale."""

    K: np.ndarray
    M: np.ndarray
    expectation_gap: float  # E K_N - (E S_0 - E S_N)


def increments(X):
    """Row k of the result is X_{k+1} - X_k."""
    return np.diff(np.asarray(X, dtype=float), axis=0)


def doob_decomposition(space, S, tol=SUPERMART_TOL):
    S = np.asarray(S, dtype=float)
    K = np.zeros_like(S)
    M = np.zeros_like(S)
    for k in range(space.N):
        drift = S[k] - cond_expect(space, S[k + 1], k)
        worst = int(np.argmin(drift))
        if drift[worst] < -tol * (1 + abs(S[k, worst])):
            raise NotSupermartingale(k, space.ids[worst], -float(drift[worst]))
        K[k + 1] = K[k] + drift
        M[k + 1] = S[k + 1] - S[0] + K[k + 1]
    gap = space.expect(K[-1]) - (space.expect(S[0]) - space.expect(S[-1]))
    return DoobDecomposition(K, M, float(gap))


def jordan_split(space, R):
    """Minimal split of R (R_0 = 0) into increasing predictable parts.

    Within one grid step an increment cannot be split further, so the per-step
    sign split is the minimal decomposition.
    """
    dR = increments(R)
    plus = np.zeros_like(np.asarray(R, dtype=float))
    minus = np.zeros_like(plus)
    plus[1:] = np.cumsum(np.maximum(dR, 0.0), axis=0)
    minus[1:] = np.cumsum(np.maximum(-dR, 0.0), axis=0)
    return FVDecomposition(plus, minus)


def quadratic_variation(X):
    """[X]_k = sum_{j <= k} (X_j - X_{j-1})**2, pathwise."""
    out = np.zeros_like(np.asarray(X, dtype=float))
    out[1:] = np.cumsum(increments(X) ** 2, axis=0)
    return out


def total_variation(X):
    """|X|-variation up to k, pathwise."""
    out = np.zeros_like(np.asarray(X, dtype=float))
    out[1:] = np.cumsum(np.abs(increments(X)), axis=0)
    return out


@dataclass(frozen=True)
class Norms:
    sup_p: float
    var_p: float
    bracket_p: float


def norms(space, X, p):
    """E sup|X|^p, E (|X|-variation)^p and E [X]_N^{p/2}."""
    if not 0 < p <= 2:
        raise ValueError("p must lie in (0, 2]")
    X = np.asarray(X, dtype=float)
    return Norms(
        sup_p=float(space.expect(np.abs(X).max(axis=0) ** p)),
        var_p=float(space.expect(total_variation(X)[-1] ** p)),
        bracket_p=float(space.expect(quadratic_variation(X)[-1] ** (p / 2))),
    )


def martingale_gap(space, M):
    """max |E[M_{k+1} - M_k | F_k]| over steps and outcomes."""
    dM = increments(M)
    if dM.shape[0] == 0:
        return 0.0
    return float(max(np.abs(cond_expect(space, dM[k], k)).max() for k in range(space.N)))


def martingale_closure(space, x):
    """M_k = E[x | F_k]."""
    return np.stack([cond_expect(space, x, k) for k in range(space.N + 1)])
