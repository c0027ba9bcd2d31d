"""Two-player stopping games whose value is the two-barrier solution.

The maximiser picks ``tau`` and receives ``L_tau`` on ``{tau < N, tau <= sigma}``;
the minimiser picks ``sigma`` and pays ``U_sigma`` on ``{sigma < tau}``; ``xi``
is paid if neither stops before N.  Running gains ``f(t, Y, Z) dt + dV`` accrue
up to ``sigma ^ tau``, with ``Y, Z`` the solved processes.  Ties go to ``L``.

The game module is a verification layer: the running gain uses the solved Y.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filtration import cond_expect, count_stopping_times, enumerate_stopping_times, CountExceeded
from .rbsde import generator_on_solution

BIG = 1e300


@dataclass
class GamePayoff:
    input: object
    running: np.ndarray  # (N, n): f(t_k, Y_k, Z_k) dt_k + dV_{k+1}
    start: int = 0

    @classmethod
    def from_solution(cls, sol, start=0):
        return cls(sol.input, generator_on_solution(sol) + sol.input.dV, start)

    @property
    def space(self):
        return self.input.space

    def barriers(self):
        sp = self.space
        L = self.input.L if self.input.L is not None else np.full((sp.N + 1, sp.n), -BIG)
        U = self.input.U if self.input.U is not None else np.full((sp.N + 1, sp.n), BIG)
        return L, U

    def cumulative(self):
        """C[k] = running gains accumulated over steps start..k-1 (zero for k <= start)."""
        sp = self.space
        C = np.zeros((sp.N + 1, sp.n))
        r = self.running.copy()
        r[: self.start] = 0.0
        C[1:] = np.cumsum(r, axis=0)
        return C


def payoff(gp, sigma, tau):
    """Pathwise payoff for stopping-time arrays ``sigma`` and ``tau``.

    Shapes broadcast: ``(n,)`` against ``(n,)`` gives ``(n,)``; ``(a, 1, n)``
    against ``(1, b, n)`` gives the full ``(a, b, n)`` table.
    """
    sp = gp.space
    sigma = np.asarray(getattr(sigma, "values", sigma))
    tau = np.asarray(getattr(tau, "values", tau))
    if np.any(sigma < gp.start) or np.any(tau < gp.start):
        raise ValueError("stopping times must not precede the start index")
    N = sp.N
    L, U = gp.barriers()
    C = gp.cumulative()
    cols = np.arange(sp.n)
    stop = np.minimum(sigma, tau)
    out = C[stop, cols]
    out = out + np.where((tau < N) & (tau <= sigma), L[np.minimum(tau, N), cols], 0.0)
    out = out + np.where(sigma < tau, U[np.minimum(sigma, N), cols], 0.0)
    out = out + np.where(stop == N, gp.input.xi, 0.0)
    return out


def game_value_induction(gp):
    """W_N = xi, W_k = clamp(E[W_{k+1} | F_k] + running_k, L_k, U_k)."""
    sp = gp.space
    inp = gp.input
    W = np.empty((sp.N + 1, sp.n))
    W[sp.N] = inp.xi
    for k in range(sp.N - 1, -1, -1):
        w = cond_expect(sp, W[k + 1] + gp.running[k], k)
        if inp.L is not None:
            w = np.maximum(w, inp.L[k])
        if inp.U is not None:
            w = np.minimum(w, inp.U[k])
        W[k] = w
    return W


@dataclass(frozen=True)
class GameValues:
    lower: np.ndarray  # sup_tau inf_sigma, on outcomes of level `start`
    upper: np.ndarray  # inf_sigma sup_tau
    tau: np.ndarray  # maximiser's guaranteeing stopping time
    sigma: np.ndarray  # minimiser's guaranteeing stopping time
    count: int


def game_value_enum(gp, max_count=250_000):
    """Lower and upper values by exhaustive search over stopping-time pairs.

    Both are computed independently; equality of the two is not assumed.
    """
    sp = gp.space
    count = count_stopping_times(sp, gp.start)
    if count * count > max_count:
        raise CountExceeded(count * count, max_count)
    taus = enumerate_stopping_times(sp, count, gp.start)
    table = payoff(gp, taus[None, :, :], taus[:, None, :])  # [tau, sigma, outcome]
    cond = cond_expect(sp, table, gp.start)
    inner_min = cond.min(axis=1)  # [tau, outcome]
    inner_max = cond.max(axis=0)  # [sigma, outcome]
    bt = inner_min.argmax(axis=0)
    bs = inner_max.argmin(axis=0)
    cols = np.arange(sp.n)
    return GameValues(
        lower=inner_min[bt, cols], upper=inner_max[bs, cols],
        tau=taus[bt, cols], sigma=taus[bs, cols], count=count)
