"""Randomized property suites.

Every suite takes a 64-bit seed and an instance count and returns rows
``(check, instances, worst, passed)``.  Instances are drawn from per-instance
generators derived by :func:`rbsdelab.instances.instance_seeds`, and they run
on a thread pool capped by the ``RBSDE_LAB_THREADS`` environment variable;
results are collected in instance order, so reports do not depend on the
thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import calibration
from .analysis import (jump_formula_gap, power_convexity_holds, power_ito_check,
                       reflection_bound_excess)
from .dynkin import GamePayoff, game_value_enum, game_value_induction
from .filtration import binomial_space, cond_expect, counterexample_space
from .generators import z_linear
from .instances import (ordered_pair, penalization_instance, random_adapted, random_generator,
                        random_martingale, random_predictable, random_problem, random_space,
                        rngs, same_barrier_pair, semimartingale_barrier_problem, snell_data)
from .martrep import build_basis, integrate, m_norm_process, represent
from .rbsde import (RBSDEInput, check_solution, minimality_with, penalization_sweep,
                    picard_lipschitz, solve_picard, solve_reflected, zero_generator)
from .snell import (SnellProblem, pathwise_identity_gap, projection_identity_gap,
                    snell_envelope, snell_oracle)

DEFAULT_SEED = 20240917
INVARIANT_TOL = 1e-10
PENALTY_SCHEDULE = [(2.0 ** j, 2.0 ** j) for j in range(4, 13)]


@dataclass(frozen=True)
class SuiteRow:
    check: str
    instances: int
    worst: float
    passed: bool


def threads():
    try:
        return max(1, int(os.environ.get("RBSDE_LAB_THREADS", "1")))
    except ValueError:
        return 1


def pmap(fn, items):
    items = list(items)
    n = threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _invariants(sol):
    return max(check_solution(sol).values())


# ---------------------------------------------------------------- suites


def counterexample(seed=None, instances=1):
    sp = counterexample_space()
    L = np.array([[2.0, 2.0], [0.0, 0.0], [0.0, 0.0]])
    xi = np.array([5.0, 1.0])
    prob = SnellProblem(sp, L, xi)
    Y = snell_envelope(prob)
    sol = solve_reflected(RBSDEInput(sp, xi, zero_generator(), None, L, None))
    gaps = pathwise_identity_gap(prob, Y).gaps
    w2 = sp.ids.index("w2")
    return [
        SuiteRow("counterexample_Y0", 1, abs(Y[0, 0] - 3.0), abs(Y[0] - 3.0).max() <= 1e-12),
        SuiteRow("counterexample_Y1", 1, abs(Y[1] - xi).max(), abs(Y[1] - xi).max() <= 1e-12),
        SuiteRow("identity_2B", 1, projection_identity_gap(prob, Y),
                 projection_identity_gap(prob, Y) <= 1e-12),
        SuiteRow("identity_20B_violation_w2", 1, float(gaps[0, w2]),
                 abs(gaps[0, w2] - 1.0) <= 1e-12),
        SuiteRow("counterexample_K", 1, float(np.abs(sol.K).max()),
                 np.abs(sol.K).max() <= 1e-12 and abs(sol.Y - Y).max() <= 1e-12),
    ]


def snell(seed=DEFAULT_SEED, instances=100):
    def one(rng):
        sp = random_space(rng, max_depth=4, max_branch=3, max_count=10_000)
        L, xi, V = snell_data(sp, rng)
        prob = SnellProblem(sp, L, xi, V)
        Y = snell_envelope(prob)
        worst = max(float(np.abs(snell_oracle(prob, k).value - Y[k]).max())
                    for k in range(sp.N + 1))
        return worst, projection_identity_gap(prob, Y)

    res = pmap(one, rngs(seed, instances))
    w = max(r[0] for r in res)
    g = max(r[1] for r in res)
    return [SuiteRow("snell_vs_oracle", instances, w, w <= 1e-12),
            SuiteRow("identity_2B_random", instances, g, g <= 1e-12)]


def penalization(seed=DEFAULT_SEED, instances=25):
    def one(rng):
        inp = penalization_instance(rng)
        rep = penalization_sweep(inp, PENALTY_SCHEDULE)
        last = rep.rows[-1]
        return (last.err_Y, max(last.err_K, last.err_A), rep.strictly_decreasing(),
                rep.monotone, _invariants(rep.reference))

    res = pmap(one, rngs(seed, instances))
    eY = max(r[0] for r in res)
    eKA = max(r[1] for r in res)
    dec = sum(not r[2] for r in res)
    mono = sum(not r[3] for r in res)
    inv = max(r[4] for r in res)
    return [SuiteRow("penalization_Y", instances, eY, eY <= 1e-3),
            SuiteRow("penalization_KA", instances, eKA, eKA <= 1e-3),
            SuiteRow("penalization_decreasing", instances, float(dec), dec == 0),
            SuiteRow("penalization_monotone", instances, float(mono), mono == 0),
            SuiteRow("penalization_invariants", instances, inv, inv <= INVARIANT_TOL)]


def dynkin(seed=DEFAULT_SEED, instances=50):
    def one(rng):
        sp = random_space(rng, max_depth=3, max_branch=3, max_count=500)
        inp = random_problem(sp, rng, "two")
        sol = solve_reflected(inp)
        gp = GamePayoff.from_solution(sol)
        vals = game_value_enum(gp)
        W = game_value_induction(gp)
        Y0 = sol.Y[0]
        return max(float(np.abs(vals.lower - Y0).max()), float(np.abs(vals.upper - Y0).max()),
                   float(np.abs(W - sol.Y).max())), _invariants(sol)

    res = pmap(one, rngs(seed, instances))
    w = max(r[0] for r in res)
    inv = max(r[1] for r in res)
    return [SuiteRow("dynkin_value", instances, w, w <= 1e-10),
            SuiteRow("dynkin_invariants", instances, inv, inv <= INVARIANT_TOL)]


def comparison(seed=DEFAULT_SEED, instances=200):
    def pair(kind):
        def one(rng):
            sp = random_space(rng, max_depth=4, max_branch=3)
            if kind == "reflecting_force":
                a, b = same_barrier_pair(sp, rng)
            else:
                a, b = ordered_pair(sp, rng, "lower" if kind == "one_barrier" else "two")
            s1, s2 = solve_reflected(a), solve_reflected(b)
            v = float((s1.Y - s2.Y).max())
            if kind == "reflecting_force":
                v = max(v, float((np.diff(s2.K, axis=0) - np.diff(s1.K, axis=0)).max()))
            return max(v, 0.0), max(_invariants(s1), _invariants(s2))
        return one

    rows = []
    for j, kind in enumerate(("one_barrier", "two_barrier", "reflecting_force")):
        res = pmap(pair(kind), rngs(seed + j, instances))
        w = max(r[0] for r in res)
        inv = max(r[1] for r in res)
        rows.append(SuiteRow(f"comparison_{kind}", instances, w, w <= 1e-10))
        rows.append(SuiteRow(f"comparison_{kind}_invariants", instances, inv,
                             inv <= INVARIANT_TOL))
    return rows


def invariants(seed=DEFAULT_SEED, instances=200):
    configs = [(b, g) for b in ("none", "lower", "upper", "two")
               for g in ("zero", "linear", "cubic", "z_linear")]

    def one(args):
        i, rng = args
        barriers, kind = configs[i % len(configs)]
        sp = random_space(rng, max_depth=4, max_branch=3)
        basis = build_basis(sp)
        f = random_generator(sp, rng, kind, basis)
        sol = solve_reflected(random_problem(sp, rng, barriers, generator=f), basis)
        vals = check_solution(sol)
        vals["minimality_hat_Y"] = minimality_with(sol, sol.Y)
        return vals

    res = pmap(one, enumerate(rngs(seed, instances)))
    keys = list(res[0])
    rows = []
    for key in keys:
        w = max(r[key] for r in res)
        rows.append(SuiteRow(f"invariant_{key}", instances, w, w <= INVARIANT_TOL))
    return rows


def martingale_representation(seed=DEFAULT_SEED, instances=50, per_space=20):
    def one(rng):
        sp = random_space(rng, max_depth=4, max_branch=4)
        basis = build_basis(sp)
        # conditional orthogonality and zero mean of the basis increments
        inc = basis.increments
        orth = 0.0
        mean = 0.0
        for k in range(sp.N):
            mean = max(mean, float(np.abs(cond_expect(sp, inc[k], k)).max(initial=0.0)))
            for i in range(basis.d):
                for j in range(basis.d):
                    if i != j:
                        orth = max(orth, float(np.abs(
                            cond_expect(sp, inc[k, i] * inc[k, j], k)).max()))
        Ms = basis.martingales()
        for i in range(basis.d):
            for j in range(i + 1, basis.d):
                orth = max(orth, abs(float(sp.expect(Ms[i, -1] * Ms[j, -1]))))
        recon = bracket = 0.0
        for _ in range(per_space):
            M = random_martingale(sp, rng)
            Z = represent(sp, basis, M)
            recon = max(recon, float(np.abs(integrate(basis, Z, M[0]) - M).max()))
            dM = np.diff(M, axis=0)
            for k in range(sp.N):
                lhs = cond_expect(sp, dM[k] ** 2, k)
                rhs = m_norm_process(basis, Z)[k] ** 2 * sp.dt[k]
                bracket = max(bracket, float(np.abs(lhs - rhs).max()))
        return max(orth, mean), recon, bracket

    res = pmap(one, rngs(seed, instances))
    o = max(r[0] for r in res)
    r_ = max(r[1] for r in res)
    b = max(r[2] for r in res)
    return [SuiteRow("martrep_orthogonality", instances, o, o <= 1e-10),
            SuiteRow("martrep_reconstruction", instances * per_space, r_, r_ <= 1e-10),
            SuiteRow("martrep_bracket_norm", instances * per_space, b, b <= 1e-10)]


PICARD_WINDOWS = (1, 2, 4)


def picard_instance(rng, barriers=None):
    """z-dependent problem on an 8-step binomial lattice on [0, 1] with lam dt = 0.1."""
    sp = binomial_space(8, float(rng.uniform(0.2, 0.8)), T=1.0)
    basis = build_basis(sp)
    f = z_linear(sp, basis, a=float(rng.uniform(-0.5, 0.5)), lam=0.8,
                 theta=[float(rng.choice([-1.0, 1.0]))], b=random_adapted(sp, rng, 0.3))
    barriers = barriers or ("none", "lower", "upper", "two")[int(rng.integers(4))]
    return random_problem(sp, rng, barriers, generator=f), basis


def picard(seed=DEFAULT_SEED, instances=25, max_iter=50):
    def one(rng):
        inp, basis = picard_instance(rng)
        direct = solve_reflected(inp, basis)
        iters, diff, factors = 0, 0.0, []
        for w in PICARD_WINDOWS:
            r = solve_picard(inp, basis, max_iter=max_iter, tol=1e-13, windows=w)
            iters = max(iters, max(r.iterations))
            diff = max(diff, float(np.abs(r.solution.Y - direct.Y).max()),
                       float(np.abs(r.solution.Z - direct.Z).max()))
            factors.append(max(picard_lipschitz(r.solution, w)))
        return iters, diff, factors, inp.L is None and inp.U is None, _invariants(direct)

    res = pmap(one, rngs(seed, instances))
    iters = max(r[0] for r in res)
    diff = max(r[1] for r in res)
    F = np.array([r[2] for r in res])
    free = np.array([r[3] for r in res])
    ratios = F[:, 1:] / np.where(F[:, :-1] > 0, F[:, :-1], 1.0)
    nonincreasing = bool(np.all(np.diff(F, axis=1) <= 1e-12))
    strict_free = bool(np.all(np.diff(F[free], axis=1) < 0)) if free.any() else True
    mean_strict = bool(np.all(np.diff(F.mean(axis=0)) < 0))
    inv = max(r[4] for r in res)
    return [SuiteRow("picard_iterations", instances, float(iters), iters <= max_iter),
            SuiteRow("picard_vs_direct", instances, diff, diff <= 1e-9),
            SuiteRow("picard_factor_trend", instances, float(ratios.max()),
                     nonincreasing and strict_free and mean_strict),
            SuiteRow("picard_invariants", instances, inv, inv <= INVARIANT_TOL)]


def inequalities(seed=DEFAULT_SEED, instances=100, triples=100_000, paths=10_000):
    rng = np.random.default_rng(seed)
    x = rng.standard_cauchy(triples)
    y = rng.standard_cauchy(triples)
    # sprinkle in exact ties and zeros
    x[::97] = y[::97]
    y[::89] = 0.0
    p = 2.0 - rng.random(triples)  # (1, 2]
    conv_fail = int((~power_convexity_holds(x, y, p)).sum())

    # power expansion on random X = X_0 + K + M along tree paths
    ito_fail = 0
    done = 0
    prng = rngs(seed + 1, 10_000)
    i = 0
    while done < paths:
        r = prng[i]
        i += 1
        sp = random_space(r, depth=4, max_branch=3)
        K = np.cumsum(random_predictable(sp, r, 0.5), axis=0)
        K -= K[0]
        M = random_martingale(sp, r)
        M -= M[0]
        X0 = float(r.normal())
        q = 1.0 + float(r.uniform(0.01, 0.99))
        ito_fail += not power_ito_check(K, M, X0, q)
        done += sp.n

    def jumps(args):
        j, r = args
        sp = random_space(r, max_depth=4, max_branch=3)
        if j % 2 == 0:
            inp = random_problem(sp, r, "lower", generator=zero_generator())
            sol = solve_reflected(inp)
            return jump_formula_gap(sol), 1e-12
        inp = random_problem(sp, r, "lower")
        sol = solve_reflected(inp)
        fL = max(float(np.abs(inp.f(k, inp.L[k], sol.Z[k])).max()) for k in range(sp.N))
        fY = float(np.abs(sol.f_values).max(initial=0.0))
        return jump_formula_gap(sol), max(2 * float(sp.dt.max()) * max(fL, fY), 1e-12)

    jres = pmap(jumps, enumerate(rngs(seed + 2, 2 * instances)))
    jump_excess = max(g - tol for g, tol in jres)
    jump_zero = max(g for g, _ in jres[::2])

    def bound(r):
        sp = random_space(r, max_depth=4, max_branch=3)
        inp, A = semimartingale_barrier_problem(sp, r)
        return reflection_bound_excess(solve_reflected(inp), A)

    bex = max(pmap(bound, rngs(seed + 3, instances)))
    return [SuiteRow("power_convexity", triples, float(conv_fail), conv_fail == 0),
            SuiteRow("power_ito_identity", done, float(ito_fail), ito_fail == 0),
            SuiteRow("jump_formula_f0", instances, jump_zero, jump_zero <= 1e-12),
            SuiteRow("jump_formula_general", instances, max(jump_excess, 0.0),
                     jump_excess <= 0.0),
            SuiteRow("reflection_upper_bound", instances, max(bex, 0.0), bex <= 1e-10)]


def constants(seed=DEFAULT_SEED, instances=200):
    c = calibration.load_constants()
    reps = calibration.lp_reports(seed, instances)
    shifted = calibration.lp_reports(seed, instances, alpha_shift=1.0)
    rows = []
    for p in calibration.P_VALUES:
        w = max(r.ratio for r in reps[p] + shifted[p])
        rows.append(SuiteRow(f"lp_ratio_{p:g}", instances, w, w <= c[f"lp_{p:g}"]))
        g = max(r.generator_ratio for r in reps[p])
        rows.append(SuiteRow(f"generator_ratio_{p:g}", instances, g,
                             g <= c[f"generator_{p:g}"]))
    e = max(calibration.energy_ratios(seed, instances))
    rows.append(SuiteRow("energy_ratio", instances, e, e <= c["energy"]))
    return rows


SUITES = {
    "counterexample": counterexample,
    "snell": snell,
    "penalization": penalization,
    "dynkin": dynkin,
    "comparison": comparison,
    "invariants": invariants,
    "martrep": martingale_representation,
    "picard": picard,
    "inequalities": inequalities,
    "constants": constants,
}


def run_suite(name, seed=DEFAULT_SEED, instances=None):
    if name == "all":
        rows = []
        for key in SUITES:
            rows.extend(run_suite(key, seed, instances))
        return rows
    try:
        fn = SUITES[name]
    except KeyError:
        raise KeyError(f"unknown suite {name!r}; known: {sorted(SUITES) + ['all']}") from None
    if instances is None:
        return fn(seed)
    return fn(seed, instances)
