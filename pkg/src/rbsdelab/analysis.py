"""Estimate validators and inequality checks for solutions on a grid.

On a grid the continuous part of every bracket vanishes, so all Ito-type
expansions reduce to telescoping sums whose jump terms carry the content.
The constants of the Lp estimates are not explicit; ratios are reported and
compared against calibrated constants (see :mod:`rbsdelab.calibration`).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .filtration import cond_expect, dual_predictable_projection
from .processes import doob_decomposition, martingale_gap, quadratic_variation
from .rbsde import Generator
from .martrep import m_norm_process


class HypothesisUnverified(ValueError):
    pass


# ------------------------------------------------------------ scaling


@dataclass(frozen=True)
class AlphaData:
    Y: np.ndarray | None
    xi: np.ndarray | None
    V: np.ndarray | None
    f: Generator | None
    alpha: float


def alpha_transform(space, alpha, Y=None, xi=None, V=None, f=None):
    """Exponential rescaling by ``e^{alpha t}``.

    ``Y^a_k = e^{a t_k} Y_k``, ``dV^a_k = e^{a t_k} dV_k`` (right end of the
    step), ``xi^a = e^{a T} xi`` and
    ``f^a(k, y, z) = e^{a t_k} f(k, e^{-a t_k} y, e^{-a t_k} z) - a y``.
    Applying ``alpha`` then ``-alpha`` gives back the inputs.
    """
    w = np.exp(alpha * space.times)
    Ya = None if Y is None else np.asarray(Y, float) * w[:, None]
    xia = None if xi is None else np.asarray(xi, float) * w[-1]
    Va = None
    if V is not None:
        V = np.asarray(V, float)
        Va = np.zeros_like(V)
        Va[1:] = np.cumsum(np.diff(V, axis=0) * w[1:, None], axis=0)
    fa = None
    if f is not None:
        def func(k, y, z, f=f):
            return w[k] * f(k, y / w[k], np.asarray(z) / w[k]) - alpha * y

        def dfunc(k, y, z, f=f):
            return f.derivative(k, y / w[k], np.asarray(z) / w[k]) - alpha

        fa = Generator(func, mu=f.mu - alpha, lam=f.lam, depends_on_z=f.depends_on_z,
                       dfdy=dfunc, name=f"{f.name}^alpha")
    return AlphaData(Ya, xia, Va, fa, alpha)


# ------------------------------------------------------------ Lp estimate


@dataclass(frozen=True)
class EstimateReport:
    lhs: float
    rhs: float
    ratio: float
    alpha: float
    p: float
    digest: str
    generator_integral: float = 0.0  # E (sum |f(t, Y)| dt)^p

    @property
    def generator_ratio(self):
        return self.generator_integral / max(self.rhs, 1e-300)


def _digest(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(np.asarray(a, dtype=float)).tobytes())
    return h.hexdigest()[:16]


def probe_bound(sol, f_bound, mu, lam=0.0, n_probes=16, scale=10.0, seed=0, tol=1e-10):
    """Probe ``sgn(y) f(t, y, z) <= f_t + mu |y| + lam ||z||_M`` at random points.

    Returns the worst excess; negative or zero means no counterexample found.
    """
    inp, sp = sol.input, sol.input.space
    rng = np.random.default_rng(seed)
    d = sol.basis.d
    worst = -np.inf
    for k in range(sp.N):
        ys = [sol.Y[k], np.zeros(sp.n)] + [scale * rng.standard_normal(sp.n)
                                           for _ in range(n_probes)]
        for y in ys:
            z = scale * rng.standard_normal((d, sp.n)) if inp.f.depends_on_z else sol.Z[k]
            zn = np.sqrt(np.sum(z ** 2 * sol.basis.densities[k], axis=0)) if d else 0.0
            lhs = np.sign(y) * inp.f(k, y, z)
            rhs = f_bound[k] + mu * np.abs(y) + lam * zn
            worst = max(worst, float(np.max((lhs - rhs) / (1 + np.abs(rhs)))))
    return worst


def reflection_sign_slack(sol, p):
    """max_k of p|Y_k|^{p-1} sgn(Y_k) dR_{k+1}.

    Nonpositive values mean the reflection never pushes |Y| outward, which is
    what the Lp estimate needs of the solution (it then satisfies the
    pathwise power inequality without a reflection term).
    """
    dR = np.diff(sol.R.plus - sol.R.minus, axis=0)
    Y = sol.Y[:-1]
    return float((p * np.abs(Y) ** (p - 1) * np.sign(Y) * dR).max(initial=0.0))


def lp_estimate(sol, p, alpha, f_bound, mu=None, lam=None, check=True):
    """Both sides of the Lp a priori estimate after ``e^{alpha t}`` scaling.

    lhs = E sup|Y^a|^p + E [M]_N^{p/2}
    rhs = E(|xi^a|^p + (sum |dV^a|)^p + (sum e^{a t} f_t dt)^p)

    ``f_bound`` is the nonnegative process ``f_t`` of the growth hypothesis
    ``sgn(y) f(t, y, z) <= f_t + mu |y| + lam ||z||_M``.
    """
    inp, sp = sol.input, sol.input.space
    mu = inp.f.mu if mu is None else mu
    lam = (inp.f.lam if inp.f.depends_on_z else 0.0) if lam is None else lam
    if not 1 < p <= 2:
        raise ValueError("p must lie in (1, 2]")
    need = mu + lam ** 2 if inp.f.depends_on_z else mu
    if alpha < need:
        raise ValueError(f"alpha={alpha} below required {need}")
    f_bound = np.asarray(f_bound, float)
    if np.any(f_bound < 0):
        raise HypothesisUnverified("bounding process must be nonnegative")
    if check:
        excess = probe_bound(sol, f_bound, mu, lam)
        if excess > 1e-10:
            raise HypothesisUnverified(f"growth bound violated by {excess:.3e}")
        slack = reflection_sign_slack(sol, p)
        if slack > 1e-10:
            raise HypothesisUnverified(f"reflection pushes |Y| outward ({slack:.3e})")
    w = np.exp(alpha * sp.times)
    Ya = sol.Y * w[:, None]
    lhs = sp.expect(np.abs(Ya).max(axis=0) ** p) + sp.expect(
        quadratic_variation(sol.M)[-1] ** (p / 2))
    dVa = np.abs(inp.dV) * w[1:, None]
    fa = (f_bound[:-1] * w[:-1, None] * sp.dt[:, None]).sum(axis=0)
    rhs = sp.expect(np.abs(inp.xi * w[-1]) ** p + dVa.sum(axis=0) ** p + fa ** p)
    gint = sp.expect((np.abs(sol.f_values) * sp.dt[:, None]).sum(axis=0) ** p)
    return EstimateReport(float(lhs), float(rhs), float(lhs / max(rhs, 1e-300)), alpha, p,
                          _digest(sol.Y, inp.xi, inp.V), float(gint))


# ------------------------------------------------------------ inequalities


def power_convexity_holds(x, y, p, rtol=1e-12):
    """|x|^p - |y|^p - p|y|^{p-1}sgn(y)(x - y) >= (1/2) phi''(|x| v |y|) (x - y)^2.

    ``phi''(m) = p(p-1) m^{p-2}``; the right side is 0 when x = y = 0.
    Vectorised; the tolerance scales with ``max(1, |x|^p, |y|^p)``.
    """
    x, y, p = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float),
                                  np.asarray(p, float))
    if np.any((p <= 1) | (p > 2)):
        raise ValueError("p must lie in (1, 2]")
    ax, ay = np.abs(x), np.abs(y)
    lhs = ax ** p - ay ** p - p * ay ** (p - 1) * np.sign(y) * (x - y)
    m = np.maximum(ax, ay)
    with np.errstate(divide="ignore", invalid="ignore"):
        curv = np.where(m > 0, p * (p - 1) * m ** (p - 2), 0.0)
    rhs = 0.5 * curv * (x - y) ** 2
    scale = np.maximum(1.0, np.maximum(ax ** p, ay ** p))
    return lhs >= rhs - rtol * scale


def power_ito_terms(X, p):
    """Terms of the discrete expansion of |X|^p along paths X (shape (N+1, n)).

    Returns ``(increment, drift_sum, jump_sum)`` with
    ``increment = |X_N|^p - |X_0|^p``, ``drift_sum = sum p|X_k|^{p-1}sgn(X_k) dX_{k+1}``
    and ``jump_sum = sum (d|X|^p - p|X_k|^{p-1}sgn(X_k) dX_{k+1})``.
    """
    X = np.asarray(X, float)
    a = np.abs(X) ** p
    grad = p * np.abs(X[:-1]) ** (p - 1) * np.sign(X[:-1])
    dX = np.diff(X, axis=0)
    drift = (grad * dX).sum(axis=0)
    jumps = (np.diff(a, axis=0) - grad * dX)
    return a[-1] - a[0], drift, jumps


def power_ito_check(K, M, X0, p, s=0, t=None, tol=1e-10):
    """Check the power inequality for X = X_0 + K + M between grid indices s and t.

    With no continuous bracket on a grid the inequality is an identity whose
    jump terms are each nonnegative; both facts are checked.
    """
    K, M = np.asarray(K, float), np.asarray(M, float)
    X = np.asarray(X0, float) + K + M
    t = X.shape[0] - 1 if t is None else t
    inc, drift, jumps = power_ito_terms(X[s:t + 1], p)
    scale = 1 + np.abs(X[s:t + 1]).max() ** p
    rhs = drift + jumps.sum(axis=0)
    return bool(np.all(inc >= rhs - tol * scale)
                and np.all(np.abs(inc - rhs) <= tol * scale)
                and np.all(jumps >= -tol * scale))


def supermartingale_energy_ratio(space, S):
    """(E [S]_N + E K_N^2) / E sup |S|^2 for the Doob decomposition of S."""
    dec = doob_decomposition(space, S)
    num = space.expect(quadratic_variation(S)[-1]) + space.expect(dec.K[-1] ** 2)
    den = space.expect(np.abs(np.asarray(S)).max(axis=0) ** 2)
    return float(num / max(den, 1e-300))


# ------------------------------------------------------------ sandwich


@dataclass(frozen=True)
class SandwichWitness:
    exists: bool
    X: np.ndarray | None
    generator_l1: float  # E sum |f(t_k, X_k, 0)| dt_k
    generator_l2: float  # E (sum |f(t_k, X_k, 0)| dt_k)^2
    violations: list


def sandwich_witness(inp, basis=None):
    """Semimartingale between the barriers: the clamp of 0 into [L, U].

    Every adapted process on a finite space is a semimartingale, so this
    witness exists whenever L <= U; the integrability figures of the generator
    along it are returned.
    """
    sp = inp.space
    L = inp.L if inp.L is not None else np.full((sp.N + 1, sp.n), -np.inf)
    U = inp.U if inp.U is not None else np.full((sp.N + 1, sp.n), np.inf)
    bad = [(int(k), sp.ids[i]) for k, i in np.argwhere(L[:-1] > U[:-1])]
    if bad:
        return SandwichWitness(False, None, np.inf, np.inf, bad)
    X = np.clip(np.zeros((sp.N + 1, sp.n)), L, U)
    d = 0 if basis is None else basis.d
    fx = np.stack([inp.f(k, X[k], np.zeros((d, sp.n))) for k in range(sp.N)]) \
        if sp.N else np.zeros((0, sp.n))
    total = (np.abs(fx) * sp.dt[:, None]).sum(axis=0)
    return SandwichWitness(True, X, float(sp.expect(total)), float(sp.expect(total ** 2)), [])


def z_norm_integral(sol):
    """E (sum ||Z_k||_M dt_k)^2."""
    zn = m_norm_process(sol.basis, sol.Z)
    return float(sol.input.space.expect((zn * sol.input.space.dt[:, None]).sum(axis=0) ** 2))


# ------------------------------------------------------------ reflection size


def jump_formula_gap(sol):
    """max |dR+_k - (E[Y_k + dV_k | F_{k-1}] - L_{k-1})^-| over steps with dR+_k > 0.

    Exact when f = 0; otherwise the two sides differ by ``dt |f(t, L)|``.
    """
    inp, sp = sol.input, sol.input.space
    if inp.L is None:
        return 0.0
    dRp = np.diff(sol.R.plus, axis=0)
    gap = 0.0
    for k in range(1, sp.N + 1):
        hit = dRp[k - 1] > 0
        if not hit.any():
            continue
        c = cond_expect(sp, sol.Y[k] + inp.dV[k - 1], k - 1)
        pred = np.maximum(inp.L[k - 1] - c, 0.0)
        gap = max(gap, float(np.abs(dRp[k - 1] - pred)[hit].max()))
    return gap


def reflection_bound_excess(sol, A=None):
    """Worst excess of dR+_k over ``1{Y_{k-1} = L_{k-1}} (f(t, L) dt + dV^p_k - dA^p_k)^-``.

    ``A`` is the finite-variation part in ``L = L_0 - A + N`` (N a martingale);
    by default the predictable one from the Doob decomposition of L.
    Requires ``xi >= L_N`` so that Y dominates L at every index.
    """
    inp, sp = sol.input, sol.input.space
    L = inp.L
    if A is None:
        A = np.zeros_like(L)
        for k in range(sp.N):
            A[k + 1] = A[k] + L[k] - cond_expect(sp, L[k + 1], k)
    A = np.asarray(A, float)
    if martingale_gap(sp, L - L[0] + A) > 1e-10 * (1 + np.abs(L).max()):
        raise ValueError("L - L_0 + A is not a martingale")
    dAp = np.diff(dual_predictable_projection(sp, A), axis=0)
    dVp = np.diff(dual_predictable_projection(sp, inp.V), axis=0)
    dRp = np.diff(sol.R.plus, axis=0)
    excess = 0.0
    for k in range(1, sp.N + 1):
        z = sol.Z[k - 1]
        fL = inp.f(k - 1, L[k - 1], z)
        bound = np.maximum(-(fL * sp.dt[k - 1] + dVp[k - 1] - dAp[k - 1]), 0.0)
        bound = np.where(sol.Y[k - 1] == L[k - 1], bound, 0.0)
        excess = max(excess, float((dRp[k - 1] - bound).max()))
    return excess
