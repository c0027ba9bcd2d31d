"""Reflected backward equations on a finite filtered space.

Discretisation on the grid ``t_0 < ... < t_N``, for ``k = N-1, ..., 0``::

    Y_k = Y_{k+1} + f(t_k, Y_k, Z_k) dt_k + dV_{k+1} + dR_{k+1} - dM_{k+1}

with ``Y_N = xi``.  The scheme is implicit in ``y`` and explicit in ``z``:
``Z_k`` is the representation of the centred ``Y_{k+1} + dV_{k+1}``, which is
known before the scalar solve at step ``k``.  ``dR_{k+1}`` is F_k-measurable
(predictable) and acts on the step ``(k, k+1]``; it is nonzero only when the
unconstrained value leaves ``[L_k, U_k]``.

Grid conventions
----------------
=====================  ===========================
continuous time        grid
=====================  ===========================
``Y_{t-}``             ``Y_{k-1}``
``dR_t`` predictable   ``R_k - R_{k-1}`` is F_{k-1}-measurable
``int f(r, Y_r) dr``   ``sum f(t_k, Y_k, Z_k) dt_k``
``for a.e. t``         for every grid index
=====================  ===========================
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .filtration import as_outcome_array, as_process, cond_expect, is_adapted, measurability_gap
from .martrep import build_basis, coefficients, integrate, m_norm_process
from .processes import FVDecomposition, martingale_gap

ROOT_TOL = 1e-13
MAX_ROUNDS = 200


class StepSizeTooLarge(ValueError):
    pass


class RootBracketFailure(RuntimeError):
    """The scalar map y - dt f(y) is not increasing: the generator's
    declared monotonicity constant is wrong."""


class BarrierCrossing(ValueError):
    pass


class NoConvergence(RuntimeError):
    pass


class GeneratorDeclarationError(ValueError):
    pass


@dataclass
class Generator:
    """Driver ``f(k, y, z)`` evaluated on all outcomes at grid index ``k``.

    ``y`` has shape ``(n,)`` and ``z`` shape ``(d, n)``; the return value has
    shape ``(n,)`` and must be F_k-measurable.  ``mu`` is the one-sided
    Lipschitz (monotonicity) constant in ``y`` and ``lam`` the Lipschitz
    constant in ``z`` for the bracket-density norm.  Generators only need to be
    total functions; integrability and continuity requirements are vacuous on
    a finite grid.
    """

    func: Callable
    mu: float = 0.0
    lam: float = 0.0
    depends_on_z: bool = False
    dfdy: Callable | None = None
    name: str = "custom"

    def __call__(self, k, y, z):
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(np.asarray(self.func(k, y, z), dtype=float), y.shape)

    def derivative(self, k, y, z):
        if self.dfdy is not None:
            return np.broadcast_to(np.asarray(self.dfdy(k, y, z), dtype=float), y.shape)
        h = 1e-6 * (1.0 + np.abs(y))
        return (self(k, y + h, z) - self(k, y - h, z)) / (2 * h)

    def verify(self, space, basis=None, rng=0, n_probes=32, scale=10.0, tol=1e-9):
        """Probe the declared ``mu`` and ``lam`` at random points.

        Returns the worst excess of each inequality; raises
        :class:`GeneratorDeclarationError` if either is positive beyond ``tol``.
        """
        rng = np.random.default_rng(rng)
        basis = build_basis(space) if basis is None else basis
        d, n = basis.d, space.n
        worst_mu = worst_lam = -np.inf
        for k in range(space.N):
            for _ in range(n_probes):
                y1, y2 = scale * rng.standard_normal((2, n))
                z = scale * rng.standard_normal((d, n))
                lhs = (self(k, y1, z) - self(k, y2, z)) * (y1 - y2)
                ex = lhs - self.mu * (y1 - y2) ** 2
                worst_mu = max(worst_mu, float((ex / (1 + np.abs(lhs))).max()))
                if self.depends_on_z and d:
                    z2 = scale * rng.standard_normal((d, n))
                    diff = np.abs(self(k, y1, z) - self(k, y1, z2))
                    dist = np.sqrt(np.sum((z - z2) ** 2 * basis.densities[k], axis=0))
                    worst_lam = max(worst_lam, float((diff - self.lam * dist).max()
                                                     / (1 + diff.max())))
        if worst_mu > tol:
            raise GeneratorDeclarationError(
                f"{self.name}: monotonicity constant mu={self.mu} violated by {worst_mu:.3e}")
        if worst_lam > tol:
            raise GeneratorDeclarationError(
                f"{self.name}: z-Lipschitz constant lam={self.lam} violated by {worst_lam:.3e}")
        return {"mu_excess": worst_mu, "lam_excess": worst_lam}


def zero_generator():
    return Generator(lambda k, y, z: np.zeros_like(y), mu=0.0, name="zero",
                     dfdy=lambda k, y, z: np.zeros_like(y))


@dataclass
class RBSDEInput:
    space: object
    xi: np.ndarray
    f: Generator = field(default_factory=zero_generator)
    V: np.ndarray | None = None
    L: np.ndarray | None = None
    U: np.ndarray | None = None

    def __post_init__(self):
        sp = self.space
        self.xi = as_outcome_array(sp, self.xi)
        self.V = np.zeros((sp.N + 1, sp.n)) if self.V is None else as_process(sp, self.V)
        if np.any(self.V[0] != 0):
            raise ValueError("V must start at 0")
        if self.L is not None:
            self.L = as_process(sp, self.L)
        if self.U is not None:
            self.U = as_process(sp, self.U)
        for name in ("V", "L", "U"):
            X = getattr(self, name)
            if X is not None and not is_adapted(sp, X):
                raise ValueError(f"{name} is not adapted to the filtration")
        if self.L is not None and self.U is not None:
            bad = np.argwhere(self.L[:-1] > self.U[:-1])
            if bad.size:
                k, i = bad[0]
                raise BarrierCrossing(f"L > U at step {k}, outcome {sp.ids[i]!r}")

    @property
    def dV(self):
        return np.diff(self.V, axis=0)


@dataclass
class Solution:
    """(Y, Z, R) with martingale part M and R = R+ - R- (Jordan parts)."""

    input: RBSDEInput
    basis: object
    Y: np.ndarray
    Z: np.ndarray
    M: np.ndarray
    R: FVDecomposition
    f_values: np.ndarray  # f(t_k, Y_k, Z_k), shape (N, n)

    @property
    def K(self):
        return self.R.plus

    @property
    def A(self):
        return self.R.minus


@dataclass
class PenalizedSolution:
    input: RBSDEInput
    basis: object
    n: float
    m: float
    Y: np.ndarray
    Z: np.ndarray
    M: np.ndarray
    K: np.ndarray  # sum n (Y - L)^- dt
    A: np.ndarray  # sum m (Y - U)^+ dt
    f_values: np.ndarray


# ------------------------------------------------------------------ the step


def solve_implicit(c, dt, h, dh=None):
    """Root of ``g(y) = y - dt * h(y) = c`` for increasing ``g`` (vectorised).

    Safeguarded Newton: a Newton step is accepted only if it stays strictly
    inside the current bracket, otherwise the bracket is bisected.
    """
    c = np.asarray(c, dtype=float)
    if dh is None:
        def dh(y):
            e = 1e-6 * (1.0 + np.abs(y))
            return (h(y + e) - h(y - e)) / (2 * e)

    def g(y):
        return y - dt * h(y)

    r0 = g(c) - c
    if np.all(r0 == 0):
        return c.copy()
    width = 2.0 * np.abs(r0) + 1e-300
    lo, hi = c - width, c + width
    if np.any(g(lo) - c > 0) or np.any(g(hi) - c < 0):
        raise RootBracketFailure("scalar step map is not increasing; check the generator's mu")
    y = c.copy()
    done = np.zeros(c.shape, dtype=bool)
    for _ in range(MAX_ROUNDS):
        r = g(y) - c
        tol = ROOT_TOL * (1.0 + np.abs(c) + np.abs(y))
        done = (np.abs(r) <= tol) | (hi - lo <= 4 * np.finfo(float).eps * (1 + np.abs(y)))
        if done.all():
            return y
        lo = np.where(r < 0, y, lo)
        hi = np.where(r > 0, y, hi)
        slope = 1.0 - dt * dh(y)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = y - r / slope
        ok = np.isfinite(newton) & (newton > lo) & (newton < hi)
        y = np.where(done, y, np.where(ok, newton, 0.5 * (lo + hi)))
    raise RootBracketFailure("implicit step did not converge")


def implicit_step(c, dt, h, dh=None, mu=0.0, L=None, U=None):
    """One backward step: solve ``y - dt h(y) = c`` then project on [L, U].

    Returns ``(y, dRplus, dRminus)`` where the reflection increments make the
    discrete equation hold exactly at the clamped value.
    """
    if dt * max(mu, 0.0) > 0.5:
        raise StepSizeTooLarge(f"dt * mu = {dt * mu:.3g} > 0.5")
    c = np.asarray(c, dtype=float)
    y = solve_implicit(c, dt, h, dh)
    dRp = np.zeros_like(y)
    dRm = np.zeros_like(y)
    if L is not None:
        L = np.broadcast_to(np.asarray(L, dtype=float), y.shape)
        low = y < L
        if low.any():
            gl = L - dt * h(L)
            dRp = np.where(low, np.maximum(gl - c, 0.0), 0.0)
            y = np.where(low, L, y)
    if U is not None:
        U = np.broadcast_to(np.asarray(U, dtype=float), y.shape)
        high = y > U
        if high.any():
            gu = U - dt * h(U)
            dRm = np.where(high, np.maximum(c - gu, 0.0), 0.0)
            y = np.where(high, U, y)
    return y, dRp, dRm


# -------------------------------------------------------------- the sweeps


@dataclass
class _Sweep:
    Y: np.ndarray
    Z: np.ndarray
    dM: np.ndarray
    dRp: np.ndarray
    dRm: np.ndarray
    fvals: np.ndarray
    dK: np.ndarray
    dA: np.ndarray


def _backward(inp, basis, k_lo, k_hi, y_end, frozen_z=None, penalty=None):
    """Backward sweep over steps k_hi-1, ..., k_lo starting from Y_{k_hi}."""
    sp, f = inp.space, inp.f
    w = k_hi - k_lo
    n = sp.n
    Y = np.empty((w + 1, n))
    Y[w] = y_end
    Z = np.zeros((w, basis.d, n))
    dM, dRp, dRm, fv, dK, dA = (np.zeros((w, n)) for _ in range(6))
    dV = inp.dV
    for j in range(w - 1, -1, -1):
        k = k_lo + j
        dt = float(sp.dt[k])
        target = Y[j + 1] + dV[k]
        c = cond_expect(sp, target, k)
        dM[j] = target - c
        Zk = coefficients(basis, dM[j], k)
        Z[j] = Zk
        z_use = Zk if frozen_z is None else frozen_z[j]
        Lk = None if inp.L is None else inp.L[k]
        Uk = None if inp.U is None else inp.U[k]

        if penalty is None:
            def h(y, k=k, z=z_use):
                return f(k, y, z)

            def dh(y, k=k, z=z_use):
                return f.derivative(k, y, z)

            y, p_, m_ = implicit_step(c, dt, h, dh, f.mu, Lk, Uk)
            dRp[j], dRm[j] = p_, m_
        else:
            npen, mpen = penalty

            def h(y, k=k, z=z_use, Lk=Lk, Uk=Uk):
                out = f(k, y, z)
                if Lk is not None and npen:
                    out = out + npen * np.maximum(Lk - y, 0.0)
                if Uk is not None and mpen:
                    out = out - mpen * np.maximum(y - Uk, 0.0)
                return out

            def dh(y, k=k, z=z_use, Lk=Lk, Uk=Uk):
                out = f.derivative(k, y, z)
                if Lk is not None and npen:
                    out = out - npen * (y < Lk)
                if Uk is not None and mpen:
                    out = out - mpen * (y > Uk)
                return out

            y, _, _ = implicit_step(c, dt, h, dh, f.mu)
            if Lk is not None:
                dK[j] = npen * np.maximum(Lk - y, 0.0) * dt
            if Uk is not None:
                dA[j] = mpen * np.maximum(y - Uk, 0.0) * dt
        Y[j] = y
        fv[j] = f(k, y, z_use)
    return _Sweep(Y, Z, dM, dRp, dRm, fv, dK, dA)


def _cum(d):
    out = np.zeros((d.shape[0] + 1, d.shape[1]))
    out[1:] = np.cumsum(d, axis=0)
    return out


def solve_reflected(inp, basis=None):
    """Solve the reflected equation (zero, one or two barriers) exactly on the grid."""
    sp = inp.space
    basis = build_basis(sp) if basis is None else basis
    s = _backward(inp, basis, 0, sp.N, inp.xi)
    return Solution(inp, basis, s.Y, s.Z, _cum(s.dM),
                    FVDecomposition(_cum(s.dRp), _cum(s.dRm)), s.fvals)


def solve_penalized(inp, n, m=0.0, basis=None):
    """Unreflected equation with ``f + n (y - L)^- - m (y - U)^+``.

    Missing barriers contribute no penalty.  The realized penalty processes
    are returned as ``K`` and ``A``.
    """
    if n < 0 or m < 0:
        raise ValueError("penalties must be nonnegative")
    sp = inp.space
    basis = build_basis(sp) if basis is None else basis
    s = _backward(inp, basis, 0, sp.N, inp.xi, penalty=(float(n), float(m)))
    return PenalizedSolution(inp, basis, n, m, s.Y, s.Z, _cum(s.dM), _cum(s.dK),
                             _cum(s.dA), s.fvals)


# ------------------------------------------------------------ verification


def check_solution(sol, tol=None):
    """Worst violation of every structural property of a solution.

    Keys: residual, terminal, barrier, minimality_lower, minimality_upper,
    jordan, r_predictable, martingale, m_start, z_reconstruction,
    z_predictable.  With ``tol`` given, also returns whether all are within it.
    """
    inp, sp = sol.input, sol.input.space
    Y, M = sol.Y, sol.M
    dRp, dRm = np.diff(sol.R.plus, axis=0), np.diff(sol.R.minus, axis=0)
    dM = np.diff(M, axis=0)
    resid = Y[:-1] - (Y[1:] + sol.f_values * sp.dt[:, None] + inp.dV + dRp - dRm - dM)
    out = {
        "residual": float(np.abs(resid).max(initial=0.0)),
        "terminal": float(np.abs(Y[-1] - inp.xi).max()),
        "barrier": 0.0,
        "minimality_lower": 0.0,
        "minimality_upper": 0.0,
        "jordan": float(np.abs(dRp * dRm).max(initial=0.0)),
        "r_predictable": max((max(measurability_gap(sp, dRp[k], k),
                                  measurability_gap(sp, dRm[k], k))
                              for k in range(sp.N)), default=0.0),
        "martingale": martingale_gap(sp, M),
        "m_start": float(np.abs(M[0]).max()),
        "z_reconstruction": float(np.abs(integrate(sol.basis, sol.Z) - M).max()),
        "z_predictable": max((measurability_gap(sp, sol.Z[k, i], k)
                              for k in range(sp.N) for i in range(sol.basis.d)), default=0.0),
    }
    if np.any(dRp < 0) or np.any(dRm < 0):
        out["jordan"] = max(out["jordan"], float(-min(dRp.min(initial=0), dRm.min(initial=0))))
    if inp.L is not None:
        out["barrier"] = max(out["barrier"], float(np.maximum(inp.L[:-1] - Y[:-1], 0).max()))
        out["minimality_lower"] = float(np.abs((Y[:-1] - inp.L[:-1]) * dRp).max(initial=0.0))
    elif np.any(dRp):
        out["minimality_lower"] = float(dRp.max())
    if inp.U is not None:
        out["barrier"] = max(out["barrier"], float(np.maximum(Y[:-1] - inp.U[:-1], 0).max()))
        out["minimality_upper"] = float(np.abs((inp.U[:-1] - Y[:-1]) * dRm).max(initial=0.0))
    elif np.any(dRm):
        out["minimality_upper"] = float(dRm.max())
    if tol is None:
        return out
    return out, all(v <= tol for v in out.values())


def minimality_with(sol, L_hat):
    """max |(Y_k - Lhat_k) dR+_{k+1}| for a barrier Lhat between L and Y."""
    dRp = np.diff(sol.R.plus, axis=0)
    return float(np.abs((sol.Y[:-1] - np.asarray(L_hat)[:-1]) * dRp).max(initial=0.0))


# ------------------------------------------------------------ penalization


@dataclass(frozen=True)
class SweepRow:
    n: float
    m: float
    err_Y: float
    err_K: float
    err_A: float
    mono_n: bool
    mono_m: bool


@dataclass
class ConvergenceReport:
    rows: list
    reference: Solution

    @property
    def errors(self):
        return np.array([r.err_Y for r in self.rows])

    def strictly_decreasing(self, start=0):
        e = self.errors[start:]
        return bool(np.all(np.diff(e) < 0))

    def decreasing_until_exact(self):
        """Strict decrease, except that an error of exactly 0 may repeat."""
        e = self.errors
        return bool(np.all((e[1:] < e[:-1]) | ((e[1:] == 0) & (e[:-1] == 0))))

    @property
    def monotone(self):
        return all(r.mono_n and r.mono_m for r in self.rows)


def penalization_sweep(inp, schedule, basis=None, reference=None, tol=1e-12):
    """Penalized solutions along ``schedule`` compared with the reflected one.

    Each row records ``max |Y^{n,m} - Y|``, ``|E K^n_N - E R+_N|`` and
    ``|E A^{n,m}_N - E R-_N|``.  ``mono_n`` says that raising ``n`` to the next
    rung at fixed ``m`` did not lower Y anywhere; ``mono_m`` that raising ``m``
    at fixed ``n`` did not raise it.
    """
    schedule = [(float(n), float(m)) for n, m in schedule]
    if not schedule:
        raise ValueError("empty schedule")
    sp = inp.space
    basis = build_basis(sp) if basis is None else basis
    ref = solve_reflected(inp, basis) if reference is None else reference
    ERp = sp.expect(ref.R.plus[-1])
    ERm = sp.expect(ref.R.minus[-1])
    rows = []
    prev = None
    for j, (n, m) in enumerate(schedule):
        pen = solve_penalized(inp, n, m, basis)
        mono_n = mono_m = True
        if prev is not None:
            n0, m0, Y0 = prev
            scale = tol * (1 + np.abs(Y0).max())
            up_n = solve_penalized(inp, n, m0, basis).Y
            up_m = solve_penalized(inp, n0, m, basis).Y
            mono_n = bool(np.all(up_n >= Y0 - scale))
            mono_m = bool(np.all(up_m <= Y0 + scale))
        rows.append(SweepRow(
            n, m,
            err_Y=float(np.abs(pen.Y - ref.Y).max()),
            err_K=float(abs(sp.expect(pen.K[-1]) - ERp)),
            err_A=float(abs(sp.expect(pen.A[-1]) - ERm)),
            mono_n=mono_n, mono_m=mono_m))
        prev = (n, m, pen.Y)
    return ConvergenceReport(rows, ref)


# ------------------------------------------------------------------ Picard


@dataclass
class PicardResult:
    solution: Solution
    iterations: list  # per window, last window first
    factors: list  # per window: successive distance ratios
    distances: list


def window_bounds(N, windows):
    """Grid indices splitting 0..N into ``windows`` contiguous chunks."""
    b = np.unique(np.round(np.linspace(0, N, windows + 1)).astype(int))
    return [int(x) for x in b]


def solve_picard(inp, basis=None, max_iter=50, tol=1e-12, windows=1):
    """Fixed-point iteration on z: freeze z = H, solve, set H = new Z.

    The horizon is cut into ``windows`` chunks solved backward in turn, each
    chunk started from the Y value its successor produced.  The distance
    between iterates is ``sup |dY| + sqrt(E sum |dZ|^2 d<M>)`` on the chunk.
    """
    sp = inp.space
    basis = build_basis(sp) if basis is None else basis
    bounds = window_bounds(sp.N, windows)
    Y = np.empty((sp.N + 1, sp.n))
    Y[sp.N] = inp.xi
    Z = np.zeros((sp.N, basis.d, sp.n))
    dM, dRp, dRm, fv = (np.zeros((sp.N, sp.n)) for _ in range(4))
    iters, factors, dists_all = [], [], []
    for a, b in reversed(list(zip(bounds[:-1], bounds[1:]))):
        H = np.zeros((b - a, basis.d, sp.n))
        prev = None
        dists = []
        for _ in range(max_iter + 1):
            cur = _backward(inp, basis, a, b, Y[b], frozen_z=H)
            if prev is not None:
                dz = cur.Z - prev.Z
                energy = np.einsum("kdn,kdn->n", dz ** 2, basis.brackets[a:b])
                dists.append(float(np.abs(cur.Y - prev.Y).max()
                                    + np.sqrt(sp.expect(energy))))
                if dists[-1] <= tol:
                    break
            prev, H = cur, cur.Z
        else:
            raise NoConvergence(f"no convergence in {max_iter} iterations on window [{a}, {b}]")
        Y[a:b + 1] = cur.Y
        Z[a:b] = cur.Z
        dM[a:b], dRp[a:b], dRm[a:b], fv[a:b] = cur.dM, cur.dRp, cur.dRm, cur.fvals
        iters.append(len(dists))
        factors.append([d1 / d0 for d0, d1 in zip(dists[:-1], dists[1:]) if d0 > 0])
        dists_all.append(dists)
    sol = Solution(inp, basis, Y, Z, _cum(dM), FVDecomposition(_cum(dRp), _cum(dRm)), fv)
    return PicardResult(sol, iters, factors, dists_all)


def picard_lipschitz(sol, windows=1, h=1e-6):
    """Lipschitz constant of the frozen-z map H -> Z on each window, at the solution.

    The map is piecewise affine; its Jacobian at the fixed point is obtained
    by a linearised backward sweep run on all unit directions at once, and
    the constant is the spectral norm for ``E sum |H|^2 d<M>``.  Returns one
    value per window, last window first (the order :func:`solve_picard` uses).
    """
    inp, basis = sol.input, sol.basis
    sp, f = inp.space, inp.f
    d = basis.d
    dRp = np.diff(sol.R.plus, axis=0)
    dRm = np.diff(sol.R.minus, axis=0)
    bounds = window_bounds(sp.N, windows)
    out = []
    for a, b in reversed(list(zip(bounds[:-1], bounds[1:]))):
        # predictable coordinates (k, i, atom) carrying bracket mass
        coords = [(k, i, at) for k in range(a, b) for i in range(d)
                  for at in range(sp.n_atoms[k])
                  if basis.brackets[k, i, sp.members(k, at)[0]] > 0]
        if not coords:
            out.append(0.0)
            continue
        D = len(coords)
        weight = np.array([sp.atom_probs[k][at] * basis.brackets[k, i, sp.members(k, at)[0]]
                           for k, i, at in coords])
        dH = np.zeros((D, b - a, d, sp.n))
        for r, (k, i, at) in enumerate(coords):
            dH[r, k - a, i, sp.members(k, at)] = 1.0 / np.sqrt(weight[r])
        dY = np.zeros((D, sp.n))
        dZ = np.zeros((D, b - a, d, sp.n))
        for k in range(b - 1, a - 1, -1):
            dt = float(sp.dt[k])
            y, z = sol.Y[k], sol.Z[k]
            fz = np.zeros((d, sp.n))
            for i in range(d):
                e = np.zeros_like(z)
                e[i] = h
                fz[i] = (f(k, y, z + e) - f(k, y, z - e)) / (2 * h)
            fy = f.derivative(k, y, z)
            free = (dRp[k] == 0) & (dRm[k] == 0)
            if inp.L is not None:
                free &= y > inp.L[k]
            if inp.U is not None:
                free &= y < inp.U[k]
            dc = cond_expect(sp, dY, k)
            dZ[:, k - a] = coefficients(basis, dY - dc, k)
            dY = free * (dc + dt * np.einsum("rdn,dn->rn", dH[:, k - a], fz)) / (1 - dt * fy)
        J = np.array([[np.sqrt(weight[c]) * dZ[r, k - a, i, sp.members(k, at)[0]]
                       for c, (k, i, at) in enumerate(coords)] for r in range(D)]).T
        out.append(float(np.linalg.norm(J, 2)))
    return out


def generator_on_solution(sol):
    """f(t_k, Y_k, Z_k) dt_k as an (N, n) array."""
    return sol.f_values * sol.input.space.dt[:, None]


def z_norms(sol):
    return m_norm_process(sol.basis, sol.Z)
