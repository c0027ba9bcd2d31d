"""Snell envelopes of a reward process with running gains.

The stopping problem: maximise over stopping times tau >= k

    E[ V_tau - V_k + L_tau 1{tau < N} + xi 1{tau = N} | F_k ].

Its value solves the backward recursion
``Y_N = xi``, ``Y_k = max(L_k, E[Y_{k+1} + V_{k+1} - V_k | F_k])``; an
exhaustive oracle over all stopping times gives an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filtration import cond_expect, enumerate_stopping_times


@dataclass
class SnellProblem:
    space: object
    L: np.ndarray
    xi: np.ndarray
    V: np.ndarray | None = None

    def __post_init__(self):
        sp = self.space
        self.L = np.asarray(self.L, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)
        self.V = np.zeros((sp.N + 1, sp.n)) if self.V is None else np.asarray(self.V, dtype=float)
        if self.L.shape != (sp.N + 1, sp.n) or self.V.shape != (sp.N + 1, sp.n):
            raise ValueError("L and V must have shape (N + 1, n)")


def snell_envelope(problem):
    sp = problem.space
    Y = np.empty((sp.N + 1, sp.n))
    Y[sp.N] = problem.xi
    dV = np.diff(problem.V, axis=0)
    for k in range(sp.N - 1, -1, -1):
        Y[k] = np.maximum(problem.L[k], cond_expect(sp, Y[k + 1] + dV[k], k))
    return Y


def stopped_payoff(problem, taus, start=0):
    """Pathwise payoff of each stopping time in ``taus`` (shape (m, n))."""
    taus = np.atleast_2d(taus)
    N = problem.space.N
    cols = np.arange(problem.space.n)
    gain = problem.V[taus, cols] - problem.V[start]
    final = np.where(taus < N, problem.L[np.minimum(taus, N), cols], problem.xi)
    return gain + final


@dataclass(frozen=True)
class OracleResult:
    value: np.ndarray  # ess-sup at level `start`, on outcomes
    tau: np.ndarray  # an optimal stopping time
    count: int


def snell_oracle(problem, start=0, max_count=10_000):
    """Ess-sup at ``start`` by maximising over every stopping time."""
    sp = problem.space
    taus = enumerate_stopping_times(sp, max_count, start)
    vals = cond_expect(sp, stopped_payoff(problem, taus, start), start)
    best = np.argmax(vals, axis=0)
    value = vals[best, np.arange(sp.n)]
    # the optimum on each atom of level `start` is attained by the same row on
    # all its outcomes; stitch those rows together
    tau = taus[best, np.arange(sp.n)]
    return OracleResult(value, tau, len(taus))


def projection_identity_gap(problem, Y):
    """max |Y_{k-1} - L_{k-1} v (E[Y_k + dV_k | F_{k-1}])| over k >= 1.

    Holds with equality for every Snell envelope: it is the recursion itself.
    """
    sp = problem.space
    dV = np.diff(problem.V, axis=0)
    gap = 0.0
    for k in range(1, sp.N + 1):
        rhs = np.maximum(problem.L[k - 1], cond_expect(sp, Y[k] + dV[k - 1], k - 1))
        gap = max(gap, float(np.abs(Y[k - 1] - rhs).max()))
    return gap


@dataclass(frozen=True)
class PathwiseGap:
    gaps: np.ndarray  # row k-1: |Y_{k-1} - L_{k-1} v (Y_k + dV_k)|, shape (N, n)

    @property
    def max(self):
        return float(self.gaps.max()) if self.gaps.size else 0.0


def pathwise_identity_gap(problem, Y):
    """Deviation from ``Y_{k-1} = L_{k-1} v (Y_k + dV_k)``, per step and outcome.

    This pathwise form needs the martingale part of Y not to jump; it fails
    when information arrives in a lump, as in :func:`~rbsdelab.filtration.counterexample_space`.
    """
    dV = np.diff(problem.V, axis=0)
    rhs = np.maximum(problem.L[:-1], Y[1:] + dV)
    return PathwiseGap(np.abs(Y[:-1] - rhs))
